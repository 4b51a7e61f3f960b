use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use iar::harness::config::parse_net;
use iar::harness::{
    convert_labels, load_dataset, run_experiment, summary_mean, synthesize_split,
    write_csv_dataset, DataFormat, ExperimentConfig, LabelRule, LoadOptions,
};
use iar::problems::{NetworkProblem, NetworkSpec};
use iar::sampling::{audit_accuracy, max_component_gradient_norm, rng_from_seed, EstimateOrder};

#[derive(Parser)]
#[command(
    name = "iar",
    version,
    about = "Inexact adaptive regularisation for finite-sum training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model over one or more seeded runs.
    Train(Box<TrainArgs>),
    /// Generate a two-blob synthetic dataset.
    Synth(SynthArgs),
    /// Remap the label column of a CSV file.
    Convert(ConvertArgs),
    /// Measure how often a subsampled estimate misses its target accuracy.
    Audit(AuditArgs),
}

/// Every flag is optional and overrides the configuration file.
#[derive(Args)]
struct TrainArgs {
    /// key = value configuration file, applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, value_parser = ["csv", "sparse"])]
    format: Option<String>,
    #[arg(long = "label-col")]
    label_col: Option<String>,
    #[arg(long = "test-dataset")]
    test_dataset: Option<String>,
    /// Feature dimension of sparse files.
    #[arg(long)]
    dim: Option<String>,
    /// Hidden layer widths, e.g. `5,2`; empty for the no-net model.
    #[arg(long)]
    net: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    sigma0: Option<String>,
    #[arg(long = "sigma-min")]
    sigma_min: Option<String>,
    #[arg(long)]
    eps1: Option<String>,
    #[arg(long)]
    eps2: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long = "kappa-eps")]
    kappa_eps: Option<String>,
    #[arg(long = "gamma-eps")]
    gamma_eps: Option<String>,
    /// Bound constant, or `gisette` / `mnist-b`.
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long = "budget-cm")]
    budget_cm: Option<String>,
    #[arg(long = "max-iters")]
    max_iters: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, value_parser = ["none", "minmax"])]
    scale: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Record exact losses every this many iterations (0 never).
    #[arg(long = "trace-every")]
    trace_every: Option<String>,
}

impl TrainArgs {
    fn overrides(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("dataset", &self.dataset),
            ("format", &self.format),
            ("label-col", &self.label_col),
            ("test-dataset", &self.test_dataset),
            ("dim", &self.dim),
            ("net", &self.net),
            ("q", &self.q),
            ("p", &self.p),
            ("sigma0", &self.sigma0),
            ("sigma-min", &self.sigma_min),
            ("eps1", &self.eps1),
            ("eps2", &self.eps2),
            ("theta", &self.theta),
            ("eta", &self.eta),
            ("gamma", &self.gamma),
            ("alpha", &self.alpha),
            ("kappa-eps", &self.kappa_eps),
            ("gamma-eps", &self.gamma_eps),
            ("kappa", &self.kappa),
            ("t", &self.t),
            ("budget-cm", &self.budget_cm),
            ("max-iters", &self.max_iters),
            ("runs", &self.runs),
            ("seed", &self.seed),
            ("scale", &self.scale),
            ("out", &self.out),
            ("trace-every", &self.trace_every),
        ]
    }

    fn into_config(self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)
                .with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v).with_context(|| format!("--{key}"))?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training samples.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 5.0)]
    separation: f64,
    /// Testing samples, written to `--test-out`.
    #[arg(long, default_value_t = 0)]
    test: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "test-out")]
    test_out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "label-col", default_value_t = 0)]
    label_col: usize,
    #[arg(long, value_enum, default_value = "odd-even")]
    rule: LabelRule,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: DataFormat,
    #[arg(long = "label-col", default_value_t = 0)]
    label_col: usize,
    #[arg(long, default_value = "")]
    net: String,
    /// Seed of the audited point (network initialisation) and the draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target accuracy of the estimate.
    #[arg(long)]
    nu: f64,
    /// Bound constant; the largest component gradient norm at the audited
    /// point when omitted.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, default_value_t = 0.2)]
    t: f64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// `value` or `gradient`.
    #[arg(long, default_value = "gradient")]
    order: String,
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let cfg = args.into_config()?;
    let rows = run_experiment(&cfg)?;
    for r in &rows {
        match &r.error {
            Some(e) => println!("run {} (seed {}): failed: {e}", r.run, r.seed),
            None => println!(
                "run {} (seed {}): {} after {} iterations, {:.3} CM, rate {:.4}",
                r.run,
                r.seed,
                r.stop_reason.map_or("-".into(), |s| s.to_string()),
                r.iterations.unwrap_or(0),
                r.cost.unwrap_or(f64::NAN),
                r.classification_rate.unwrap_or(f64::NAN),
            ),
        }
    }
    let mean = summary_mean(&rows);
    println!(
        "mean classification rate over {}/{} runs: {:.4}",
        mean.completed,
        rows.len(),
        mean.classification_rate
    );
    println!("outputs written to {}", cfg.out.display());
    if mean.completed == 0 {
        bail!("every run failed");
    }
    Ok(())
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let (train, test) = synthesize_split(args.seed, args.n, args.test, args.d, args.separation)?;
    write_csv_dataset(&args.out, &train)?;
    if args.test > 0 {
        let Some(path) = &args.test_out else {
            bail!("--test requires --test-out");
        };
        write_csv_dataset(path, &test)?;
    }
    println!(
        "wrote {} training and {} testing samples",
        train.len(),
        test.len()
    );
    Ok(())
}

fn convert(args: ConvertArgs) -> anyhow::Result<()> {
    let input =
        File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let output = BufWriter::new(File::create(&args.out)?);
    let n = convert_labels(input, output, args.label_col, args.rule)?;
    println!("relabelled {n} rows");
    Ok(())
}

fn audit(args: AuditArgs) -> anyhow::Result<()> {
    let order = match args.order.as_str() {
        "value" => EstimateOrder::Value,
        "gradient" => EstimateOrder::Gradient,
        other => bail!("cannot audit `{other}` estimates"),
    };
    let opts = LoadOptions {
        label_col: args.label_col,
        dim: None,
    };
    let data = load_dataset(&args.dataset, args.format, opts)?;
    let spec = NetworkSpec::new(data.dim(), parse_net(&args.net)?)?;
    let x = spec.initial_point(args.seed);
    let problem = NetworkProblem::new(spec, Arc::new(data))?;
    let kappa = args
        .kappa
        .unwrap_or_else(|| max_component_gradient_norm(&problem, &x));
    let mut rng = rng_from_seed(args.seed);
    let report = audit_accuracy(
        &problem,
        &x,
        args.nu,
        kappa,
        args.t,
        order,
        args.trials,
        &mut rng,
    )?;
    println!(
        "kappa {kappa:.6e}, sample size {}, failures {}/{} (rate {:.4}, target {}), worst error {:.6e}",
        report.sample_size, report.failures, report.trials, report.failure_rate, args.t, report.worst_error
    );
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Train(a) => train(*a),
        Command::Synth(a) => synth(a),
        Command::Convert(a) => convert(a),
        Command::Audit(a) => audit(a),
    }
}
