//! Experiment configuration.
//!
//! A configuration file holds one `key = value` pair per line; `#` starts a
//! comment. Keys are the long CLI flag names without the leading dashes, so
//! `--budget-cm 80` and `budget-cm = 80` mean the same thing. Flags given on
//! the command line are applied after the file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::data::{DataFormat, LoadOptions, Scaling};
use crate::model::ModelOrder;
use crate::solver::{SolverConfig, KAPPA_GISETTE, KAPPA_MNIST_B};

/// Budget used when none is configured.
pub const DEFAULT_BUDGET_CM: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub format: DataFormat,
    pub label_col: usize,
    pub test_dataset: Option<PathBuf>,
    /// Feature dimension for sparse files.
    pub dim: Option<usize>,
    /// Hidden layer widths; empty for the no-net model.
    pub net: Vec<usize>,
    pub scale: Scaling,
    pub runs: usize,
    pub out: PathBuf,
    /// Solver settings. `solver.seed` is the seed of the first run; run `r`
    /// uses `seed + r`.
    pub solver: SolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            format: DataFormat::Csv,
            label_col: 0,
            test_dataset: None,
            dim: None,
            net: Vec::new(),
            scale: Scaling::None,
            runs: 1,
            out: PathBuf::from("out"),
            solver: SolverConfig {
                budget_cm: DEFAULT_BUDGET_CM,
                ..SolverConfig::default()
            },
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::param(format!("`{value}` is not a valid value for {key}")))
}

/// `gisette` and `mnist-b` name the tuned bound constants.
pub fn parse_kappa(value: &str) -> Result<f64> {
    match value {
        "gisette" => Ok(KAPPA_GISETTE),
        "mnist-b" => Ok(KAPPA_MNIST_B),
        _ => parse("kappa", value),
    }
}

/// Comma-separated layer widths; the empty string is the no-net model.
pub fn parse_net(value: &str) -> Result<Vec<usize>> {
    let value = value.trim();
    if value.is_empty() || value == "none" {
        return Ok(Vec::new());
    }
    value.split(',').map(|w| parse("net", w.trim())).collect()
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let s = &mut self.solver;
        match key {
            "dataset" => self.dataset = optional_path(value),
            "format" => self.format = value.parse()?,
            "label-col" => self.label_col = parse(key, value)?,
            "test-dataset" => self.test_dataset = optional_path(value),
            "dim" => self.dim = Some(parse(key, value)?),
            "net" => self.net = parse_net(value)?,
            "scale" => self.scale = value.parse()?,
            "runs" => self.runs = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "q" => s.q = parse(key, value)?,
            "p" => s.p = ModelOrder::from_degree(parse(key, value)?)?,
            "sigma0" => s.sigma0 = parse(key, value)?,
            "sigma-min" => s.sigma_min = parse(key, value)?,
            "eps1" => s.eps1 = parse(key, value)?,
            "eps2" => s.eps2 = parse(key, value)?,
            "theta" => s.theta = parse(key, value)?,
            "eta" => s.eta = parse(key, value)?,
            "gamma" => s.gamma = parse(key, value)?,
            "alpha" => s.alpha = parse(key, value)?,
            "kappa-eps" => s.kappa_eps = parse(key, value)?,
            "gamma-eps" => s.gamma_eps = parse(key, value)?,
            "kappa" => s.kappa = parse_kappa(value)?,
            "t" => s.t = parse(key, value)?,
            "budget-cm" => s.budget_cm = parse(key, value)?,
            "max-iters" => s.max_iters = parse(key, value)?,
            "seed" => s.seed = parse(key, value)?,
            "trace-every" => s.exact_loss_every = parse(key, value)?,
            _ => return Err(Error::param(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies every pair of a configuration text in order.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key = value, got `{line}`"),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::param("runs must be at least 1"));
        }
        if self.dataset.is_none() {
            return Err(Error::param("no training dataset configured"));
        }
        self.solver.validate()
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            label_col: self.label_col,
            dim: self.dim,
        }
    }
}
