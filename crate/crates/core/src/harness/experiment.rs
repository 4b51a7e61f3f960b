//! Seeded repeated runs, trace files and the run summary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::finite_sum::full_value;
use crate::harness::config::ExperimentConfig;
use crate::harness::data::{load_dataset, LoadOptions, Scaling};
use crate::problems::{classification_rate, testing_loss, Dataset, NetworkProblem, NetworkSpec};
use crate::solver::{run_monitored, Monitor, SolverConfig, SolverOutput, StopReason, TraceEvent};

/// Outcome of one seeded run. Fields are `None` when the run failed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub stop_reason: Option<StopReason>,
    pub train_loss: Option<f64>,
    pub test_loss: Option<f64>,
    /// On the testing set when there is one, otherwise on the training set.
    pub classification_rate: Option<f64>,
    pub cost: Option<f64>,
    pub iterations: Option<usize>,
    pub successful: Option<usize>,
    pub error: Option<String>,
}

/// Per-column means over the runs that finished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryMean {
    pub completed: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub classification_rate: f64,
    pub cost: f64,
    pub iterations: f64,
    pub successful: f64,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> f64 {
    let (sum, count) = values
        .flatten()
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

pub fn summary_mean(rows: &[RunSummary]) -> SummaryMean {
    SummaryMean {
        completed: rows.iter().filter(|r| r.error.is_none()).count(),
        train_loss: mean_of(rows.iter().map(|r| r.train_loss)),
        test_loss: mean_of(rows.iter().map(|r| r.test_loss)),
        classification_rate: mean_of(rows.iter().map(|r| r.classification_rate)),
        cost: mean_of(rows.iter().map(|r| r.cost)),
        iterations: mean_of(rows.iter().map(|r| r.iterations.map(|v| v as f64))),
        successful: mean_of(rows.iter().map(|r| r.successful.map(|v| v as f64))),
    }
}

/// Training data, optional testing data and a network, ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: NetworkSpec,
    pub train: Arc<Dataset>,
    pub test: Option<Arc<Dataset>>,
    pub solver: SolverConfig,
    pub runs: usize,
}

struct TestLoss<'a> {
    spec: &'a NetworkSpec,
    test: Option<&'a Dataset>,
}

impl Monitor for TestLoss<'_> {
    fn test_loss(&self, x: &[f64]) -> Option<f64> {
        self.test.and_then(|t| testing_loss(self.spec, x, t).ok())
    }
}

/// Result of a single seeded run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub summary: RunSummary,
    pub output: Option<SolverOutput>,
}

impl Experiment {
    pub fn new(
        spec: NetworkSpec,
        train: Dataset,
        test: Option<Dataset>,
        solver: SolverConfig,
        runs: usize,
    ) -> Result<Self> {
        if train.dim() != spec.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.input_dim(),
                found: train.dim(),
            });
        }
        if let Some(t) = &test {
            if t.dim() != train.dim() {
                return Err(Error::DimensionMismatch {
                    expected: train.dim(),
                    found: t.dim(),
                });
            }
        }
        if runs == 0 {
            return Err(Error::param("runs must be at least 1"));
        }
        solver.validate()?;
        Ok(Self {
            spec,
            train: Arc::new(train),
            test: test.map(Arc::new),
            solver,
            runs,
        })
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.solver.seed.wrapping_add(run as u64)
    }

    pub fn run_once(&self, run: usize) -> RunRecord {
        let seed = self.run_seed(run);
        match self.try_run(seed) {
            Ok((summary, output)) => RunRecord {
                summary: RunSummary { run, ..summary },
                output: Some(output),
            },
            Err(e) => {
                warn!("run {run} (seed {seed}) failed: {e}");
                RunRecord {
                    summary: RunSummary {
                        run,
                        seed,
                        stop_reason: None,
                        train_loss: None,
                        test_loss: None,
                        classification_rate: None,
                        cost: None,
                        iterations: None,
                        successful: None,
                        error: Some(e.to_string()),
                    },
                    output: None,
                }
            }
        }
    }

    fn try_run(&self, seed: u64) -> Result<(RunSummary, SolverOutput)> {
        let problem = NetworkProblem::new(self.spec.clone(), Arc::clone(&self.train))?;
        let config = SolverConfig {
            seed,
            ..self.solver.clone()
        };
        let x0 = self.spec.initial_point(seed);
        let mut monitor = TestLoss {
            spec: &self.spec,
            test: self.test.as_deref(),
        };
        let output = run_monitored(&problem, x0, &config, &mut monitor)?;
        let rate_set = self.test.as_deref().unwrap_or(&self.train);
        let summary = RunSummary {
            run: 0,
            seed,
            stop_reason: Some(output.stop_reason),
            train_loss: Some(full_value(&problem, &output.x)?),
            test_loss: self
                .test
                .as_deref()
                .map(|t| testing_loss(&self.spec, &output.x, t))
                .transpose()?,
            classification_rate: Some(classification_rate(&self.spec, &output.x, rate_set)?),
            cost: Some(output.cost),
            iterations: Some(output.iterations),
            successful: Some(output.successful),
            error: None,
        };
        Ok((summary, output))
    }

    /// Runs every seed in parallel. Traces go to `out/trace_run<r>.csv` and
    /// the summary to `out/summary.csv` when `out` is given.
    pub fn execute(&self, out: Option<&Path>) -> Result<Vec<RunRecord>> {
        if let Some(dir) = out {
            fs::create_dir_all(dir)?;
        }
        let records: Vec<RunRecord> = (0..self.runs)
            .into_par_iter()
            .map(|run| -> Result<RunRecord> {
                let record = self.run_once(run);
                if let (Some(dir), Some(output)) = (out, &record.output) {
                    write_trace(&trace_path(dir, run), &output.trace)?;
                }
                Ok(record)
            })
            .collect::<Result<_>>()?;
        if let Some(dir) = out {
            let rows: Vec<RunSummary> = records.iter().map(|r| r.summary.clone()).collect();
            write_summary(&dir.join("summary.csv"), &rows)?;
        }
        Ok(records)
    }
}

pub fn trace_path(dir: &Path, run: usize) -> PathBuf {
    dir.join(format!("trace_run{run:03}.csv"))
}

/// Loads the configured datasets. Min-max ranges come from the training set
/// and are applied to both sets.
pub fn load_experiment_data(cfg: &ExperimentConfig) -> Result<(Dataset, Option<Dataset>)> {
    let path = cfg
        .dataset
        .as_deref()
        .ok_or_else(|| Error::param("no training dataset configured"))?;
    let mut train = load_dataset(path, cfg.format, cfg.load_options())?;
    let mut test = match &cfg.test_dataset {
        Some(p) => {
            let opts = LoadOptions {
                dim: Some(cfg.dim.unwrap_or(train.dim())),
                ..cfg.load_options()
            };
            Some(load_dataset(p, cfg.format, opts)?)
        }
        None => None,
    };
    if cfg.scale == Scaling::Minmax {
        let ranges = train.column_ranges();
        train.apply_minmax(&ranges)?;
        if let Some(t) = test.as_mut() {
            t.apply_minmax(&ranges)?;
        }
    }
    Ok((train, test))
}

/// Loads data, runs every seed, writes traces and the summary, and returns
/// the per-run rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    let (train, test) = load_experiment_data(cfg)?;
    info!(
        "training on {} samples of dimension {}{}",
        train.len(),
        train.dim(),
        test.as_ref()
            .map_or(String::new(), |t| format!(", testing on {}", t.len()))
    );
    let spec = NetworkSpec::new(train.dim(), cfg.net.clone())?;
    let experiment = Experiment::new(spec, train, test, cfg.solver.clone(), cfg.runs)?;
    let records = experiment.execute(Some(&cfg.out))?;
    Ok(records.into_iter().map(|r| r.summary).collect())
}

pub fn write_trace(path: &Path, trace: &[TraceEvent]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_path(path)?;
    if trace.is_empty() {
        w.write_record(TRACE_COLUMNS)?;
    }
    for event in trace {
        w.serialize(event)?;
    }
    w.flush()?;
    Ok(())
}

pub const TRACE_COLUMNS: &[&str] = &[
    "iteration",
    "cost",
    "sigma",
    "omega",
    "grad_norm",
    "rho",
    "success",
    "step_norm",
    "d1_size",
    "d2_size",
    "g_size",
    "h_size",
    "g_d1_overlap",
    "h_g_overlap",
    "hessian_products",
    "inner_attempts",
    "train_loss_estimate",
    "train_loss",
    "test_loss",
];

pub fn read_trace(path: &Path) -> Result<Vec<TraceEvent>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|e| e.map_err(Error::from)).collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub const SUMMARY_COLUMNS: &[&str] = &[
    "run",
    "seed",
    "stop_reason",
    "train_loss",
    "test_loss",
    "classification_rate",
    "cost",
    "iterations",
    "successful",
    "error",
];

/// One row per run, then a `mean` row over the runs that finished.
pub fn write_summary(path: &Path, rows: &[RunSummary]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_path(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.run.to_string(),
            r.seed.to_string(),
            opt(r.stop_reason),
            opt(r.train_loss),
            opt(r.test_loss),
            opt(r.classification_rate),
            opt(r.cost),
            opt(r.iterations),
            opt(r.successful),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    let m = summary_mean(rows);
    w.write_record([
        "mean".to_string(),
        String::new(),
        format!("{}/{} completed", m.completed, rows.len()),
        m.train_loss.to_string(),
        m.test_loss.to_string(),
        m.classification_rate.to_string(),
        m.cost.to_string(),
        m.iterations.to_string(),
        m.successful.to_string(),
        String::new(),
    ])?;
    w.flush()?;
    Ok(())
}
