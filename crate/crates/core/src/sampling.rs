//! Bernstein sample sizes, uniform subsampling and subsampled estimators.
//!
//! All randomness flows through [`SampleRng`], ChaCha with 8 rounds
//! (`rand_chacha::ChaCha8Rng`) seeded from a `u64`. Its output stream is
//! platform independent, so a seed pins every index set a run draws.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::finite_sum::{subset_gradient, subset_value, FiniteSumProblem, SubsetHessian};
use crate::linalg::{norm, LinearOperator};

pub type SampleRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Which quantity a sample estimates; fixes the logarithm's argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateOrder {
    /// Function values, `log(2/t)`.
    Value,
    /// Gradients in `n` variables, `log((n+1)/t)`.
    Gradient,
    /// Hessians in `n` variables, `log(2n/t)`.
    Hessian,
}

impl EstimateOrder {
    pub fn log_argument(self, n: usize, t: f64) -> f64 {
        match self {
            EstimateOrder::Value => 2.0 / t,
            EstimateOrder::Gradient => (n as f64 + 1.0) / t,
            EstimateOrder::Hessian => 2.0 * n as f64 / t,
        }
    }
}

/// `min{N, ⌈(4κ/ν)(2κ/ν + 1/3) ln(log_argument)⌉}`, at least 1.
pub fn bernstein_size(
    kappa: f64,
    nu: f64,
    t: f64,
    log_argument: f64,
    n_components: usize,
) -> Result<usize> {
    if !(kappa > 0.0) {
        return Err(Error::param(format!(
            "bound constant must be positive, got {kappa}"
        )));
    }
    if !(nu > 0.0) {
        return Err(Error::param(format!(
            "target accuracy must be positive, got {nu}"
        )));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::param(format!(
            "failure probability must lie in (0,1), got {t}"
        )));
    }
    if !(log_argument > 1.0) {
        return Err(Error::param(format!(
            "log argument must exceed 1, got {log_argument}"
        )));
    }
    if n_components == 0 {
        return Err(Error::param("number of components must be positive"));
    }
    let ratio = kappa / nu;
    let raw = 4.0 * ratio * (2.0 * ratio + 1.0 / 3.0) * log_argument.ln();
    if !raw.is_finite() || raw >= n_components as f64 {
        return Ok(n_components);
    }
    Ok((raw.ceil() as usize).clamp(1, n_components))
}

/// Inputs of one Bernstein sample-size computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSizeSpec {
    pub target_accuracy: f64,
    pub bound_constant: f64,
    pub failure_probability: f64,
    pub order: EstimateOrder,
    pub dimension: usize,
    pub n_components: usize,
}

impl SampleSizeSpec {
    pub fn log_argument(&self) -> f64 {
        self.order
            .log_argument(self.dimension, self.failure_probability)
    }

    pub fn resolved_size(&self) -> Result<usize> {
        bernstein_size(
            self.bound_constant,
            self.target_accuracy,
            self.failure_probability,
            self.log_argument(),
            self.n_components,
        )
    }

    /// Like [`Self::resolved_size`], but a target that has decayed to zero or
    /// below the smallest normal float resolves to the full sample.
    pub fn resolved_size_or_full(&self) -> Result<usize> {
        if self.target_accuracy < f64::MIN_POSITIVE {
            return Ok(self.n_components);
        }
        self.resolved_size()
    }
}

/// `m` distinct indices from `0..n`, uniform without replacement, ascending.
/// `m = n` returns every index without touching the generator.
pub fn draw_subsample(rng: &mut SampleRng, n: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(Error::param(format!("cannot draw {m} of {n} indices")));
    }
    if m == n {
        return Ok((0..n).collect());
    }
    let mut picked = index::sample(rng, n, m).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Number of common elements of two ascending index sets.
pub fn overlap_count(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

pub fn estimate_value<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    indices: &[usize],
    x: &[f64],
) -> Result<f64> {
    subset_value(problem, indices, x)
}

pub fn estimate_gradient<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    indices: &[usize],
    x: &[f64],
) -> Result<Vec<f64>> {
    subset_gradient(problem, indices, x)
}

/// The subsampled Hessian at `x` as an operator. Build it once and apply it
/// repeatedly; the base gradient sum is cached.
pub fn sampled_hessian<'a, P: FiniteSumProblem + ?Sized>(
    problem: &'a P,
    indices: Vec<usize>,
    x: &[f64],
) -> Result<SubsetHessian<'a, P>> {
    SubsetHessian::new(problem, indices, x)
}

pub fn estimate_hvp<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    indices: &[usize],
    x: &[f64],
    v: &[f64],
) -> Result<Vec<f64>> {
    check_dim(problem.dim(), v.len())?;
    Ok(SubsetHessian::new(problem, indices.to_vec(), x)?.apply(v))
}

/// Draws `trials` independent subsamples of the Bernstein size for `(ν, κ, t)`
/// and returns the fraction whose estimate misses the exact value by more
/// than `ν`. `order` is [`EstimateOrder::Value`] or [`EstimateOrder::Gradient`].
#[allow(clippy::too_many_arguments)]
pub fn audit_accuracy<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    nu: f64,
    kappa: f64,
    t: f64,
    order: EstimateOrder,
    trials: usize,
    rng: &mut SampleRng,
) -> Result<AuditReport> {
    if trials < 100 {
        return Err(Error::param(format!(
            "audit needs at least 100 trials, got {trials}"
        )));
    }
    let n = problem.num_components();
    let spec = SampleSizeSpec {
        target_accuracy: nu,
        bound_constant: kappa,
        failure_probability: t,
        order,
        dimension: problem.dim(),
        n_components: n,
    };
    let size = spec.resolved_size()?;
    let all: Vec<usize> = (0..n).collect();
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    match order {
        EstimateOrder::Value => {
            let exact = subset_value(problem, &all, x)?;
            for _ in 0..trials {
                let idx = draw_subsample(rng, n, size)?;
                let err = (subset_value(problem, &idx, x)? - exact).abs();
                worst = worst.max(err);
                failures += usize::from(err > nu);
            }
        }
        EstimateOrder::Gradient => {
            let exact = subset_gradient(problem, &all, x)?;
            for _ in 0..trials {
                let idx = draw_subsample(rng, n, size)?;
                let est = subset_gradient(problem, &idx, x)?;
                let err = est
                    .iter()
                    .zip(&exact)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(err);
                failures += usize::from(err > nu);
            }
        }
        EstimateOrder::Hessian => {
            return Err(Error::param(
                "accuracy audits support value and gradient estimates only",
            ));
        }
    }
    Ok(AuditReport {
        sample_size: size,
        trials,
        failures,
        failure_rate: failures as f64 / trials as f64,
        worst_error: worst,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditReport {
    pub sample_size: usize,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub worst_error: f64,
}

/// Largest `‖∇f_i(x)‖` over all components; the tight bound constant for
/// gradient audits.
pub fn max_component_gradient_norm<P: FiniteSumProblem + ?Sized>(problem: &P, x: &[f64]) -> f64 {
    (0..problem.num_components())
        .map(|i| norm(&problem.component_gradient(i, x)))
        .fold(0.0, f64::max)
}
