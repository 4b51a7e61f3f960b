//! Trial-step computation.
//!
//! The quadratic model has the closed-form minimiser `-ḡ/σ`. The cubic model
//! is minimised by a Barzilai-Borwein gradient iteration with a nonmonotone
//! Armijo backtracking line search; the model Hessian is only applied to
//! vectors.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, sub, LinearOperator};
use crate::model::{ModelOrder, RegularisedModel};
use crate::optimality::{phi_2, TrustRegionOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BbConfig {
    pub max_inner_iterations: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Number of past model values in the nonmonotone reference.
    pub memory: usize,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Negative-curvature escapes allowed when a second-order step is needed.
    pub max_escapes: usize,
}

impl Default for BbConfig {
    fn default() -> Self {
        Self {
            max_inner_iterations: 500,
            lambda_min: 1e-10,
            lambda_max: 1e10,
            memory: 10,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            max_escapes: 20,
        }
    }
}

impl BbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min > 0.0 && self.lambda_min < self.lambda_max) {
            return Err(Error::param(
                "BB step bounds must satisfy 0 < lambda_min < lambda_max",
            ));
        }
        if self.memory == 0 {
            return Err(Error::param("nonmonotone memory must be at least 1"));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::param("Armijo constant must lie in (0,1)"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::param("backtracking factor must lie in (0,1)"));
        }
        if self.max_inner_iterations == 0 {
            return Err(Error::param("max_inner_iterations must be positive"));
        }
        Ok(())
    }
}

/// `s = -ḡ/σ` with predicted decrease `‖ḡ‖²/σ`.
pub fn quadratic_step(gradient: &[f64], sigma: f64) -> Result<(Vec<f64>, f64)> {
    if !(sigma > 0.0) {
        return Err(Error::param(format!(
            "regularisation weight must be positive, got {sigma}"
        )));
    }
    let s = gradient.iter().map(|g| -g / sigma).collect();
    let gn = norm(gradient);
    Ok((s, gn * gn / sigma))
}

/// Spectral step `ΔsᵀΔs / ΔsᵀΔg`, clamped to `[lambda_min, lambda_max]`;
/// `lambda_max` when the curvature estimate is not positive.
pub fn bb_step_length(ds: &[f64], dg: &[f64], lambda_min: f64, lambda_max: f64) -> f64 {
    let sy = dot(ds, dg);
    if !(sy > 0.0) {
        return lambda_max;
    }
    (dot(ds, ds) / sy).clamp(lambda_min, lambda_max)
}

/// Second-order requirement on the returned step: `φ̄_{m,2}(s) ≤ tolerance`.
#[derive(Debug, Clone, Copy)]
pub struct SecondOrderCheck<'a> {
    pub tolerance: f64,
    pub trust_region: &'a TrustRegionOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubicStep {
    pub s: Vec<f64>,
    pub model_value: f64,
    pub model_grad_norm: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out (or the line search stalled)
    /// before the gradient tolerance was met.
    pub converged: bool,
    pub phi_model_2: Option<f64>,
    pub escapes: usize,
}

#[derive(Clone)]
struct Point {
    s: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
}

enum BbOutcome {
    Converged(Point),
    Stopped(Point),
}

/// Approximately minimises a cubic model: returns `s` with `m(s) ≤ 0` and
/// `‖∇m(s)‖ ≤ tolerance`, or the lowest-value iterate with
/// `converged = false`.
pub fn cubic_step(
    model: &RegularisedModel<'_>,
    config: &BbConfig,
    tolerance: f64,
    second_order: Option<SecondOrderCheck<'_>>,
) -> Result<CubicStep> {
    if model.order() != ModelOrder::Cubic {
        return Err(Error::param("cubic_step needs a cubic model"));
    }
    config.validate()?;
    let n = model.dim();
    let trust_region = second_order.map_or_else(TrustRegionOptions::default, |c| *c.trust_region);

    let mut start = Point {
        s: vec![0.0; n],
        value: 0.0,
        grad: model.gradient().to_vec(),
    };
    if norm(&start.grad) <= tolerance {
        // A stationary start can still sit on negative curvature.
        if let Some(p) = escape_along_negative_curvature(model, &start, &trust_region)? {
            start = p;
        }
    }

    let mut iterations = 0usize;
    let mut escapes = 0usize;
    loop {
        let outcome = bb_minimise(model, config, tolerance, start, &mut iterations)?;
        let (point, converged) = match outcome {
            BbOutcome::Converged(p) => (p, true),
            BbOutcome::Stopped(p) => (p, false),
        };
        if !(point.value <= 0.0) {
            return Err(Error::Numerical(format!(
                "cubic subproblem ended with model value {} > 0",
                point.value
            )));
        }
        let mut phi_model_2 = None;
        if let (Some(check), true) = (second_order, converged) {
            let hess = model.hessian_operator_at(&point.s);
            let r = phi_2(&point.grad, &hess, check.trust_region)?;
            phi_model_2 = Some(r.value);
            if r.value > check.tolerance && escapes < config.max_escapes {
                if let Some(p) = step_along(model, &point, &r.maximiser, config)? {
                    escapes += 1;
                    start = p;
                    continue;
                }
            }
        }
        return Ok(CubicStep {
            model_grad_norm: norm(&point.grad),
            s: point.s,
            model_value: point.value,
            iterations,
            converged,
            phi_model_2,
            escapes,
        });
    }
}

fn bb_minimise(
    model: &RegularisedModel<'_>,
    config: &BbConfig,
    tolerance: f64,
    start: Point,
    iterations: &mut usize,
) -> Result<BbOutcome> {
    let mut current = start;
    if norm(&current.grad) <= tolerance {
        return Ok(BbOutcome::Converged(current));
    }
    let mut lambda = (1.0 / model.sigma()).clamp(config.lambda_min, config.lambda_max);
    let mut history: VecDeque<f64> = VecDeque::with_capacity(config.memory);
    history.push_back(current.value);
    let mut best = current.clone();

    while *iterations < config.max_inner_iterations {
        *iterations += 1;
        let direction: Vec<f64> = current.grad.iter().map(|g| -lambda * g).collect();
        let slope = dot(&current.grad, &direction);
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let trial: Vec<f64> = current
                .s
                .iter()
                .zip(&direction)
                .map(|(s, d)| s + alpha * d)
                .collect();
            let (value, grad) = model.value_and_gradient(&trial);
            if !value.is_finite() || !grad.iter().all(|g| g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite cubic model value at inner iteration {}",
                    *iterations
                )));
            }
            if value <= reference + config.armijo * alpha * slope {
                accepted = Some(Point {
                    s: trial,
                    value,
                    grad,
                });
                break;
            }
            alpha *= config.backtrack;
        }
        let Some(next) = accepted else {
            break;
        };
        let ds = sub(&next.s, &current.s);
        let dg = sub(&next.grad, &current.grad);
        current = next;
        if current.value < best.value {
            best = current.clone();
        }
        if history.len() == config.memory {
            history.pop_front();
        }
        history.push_back(current.value);
        if norm(&current.grad) <= tolerance {
            return Ok(BbOutcome::Converged(current));
        }
        if norm(&ds) == 0.0 {
            break;
        }
        lambda = bb_step_length(&ds, &dg, config.lambda_min, config.lambda_max);
    }
    Ok(BbOutcome::Stopped(best))
}

/// From a point where the model gradient is small, moves to the minimiser
/// of the model along the leftmost curvature direction when that curvature
/// is negative.
fn escape_along_negative_curvature(
    model: &RegularisedModel<'_>,
    at: &Point,
    trust_region: &TrustRegionOptions,
) -> Result<Option<Point>> {
    let hess = model.hessian_operator_at(&at.s);
    let r = phi_2(&at.grad, &hess, trust_region)?;
    if r.value <= 0.0 {
        return Ok(None);
    }
    let mut d = r.maximiser;
    let dn = norm(&d);
    if dn == 0.0 {
        return Ok(None);
    }
    d.iter_mut().for_each(|v| *v /= dn);
    let curvature = dot(&d, &hess.apply(&d));
    if curvature >= 0.0 {
        return Ok(None);
    }
    let mut slope = dot(&at.grad, &d);
    if slope > 0.0 {
        d.iter_mut().for_each(|v| *v = -*v);
        slope = -slope;
    }
    // Along s + t d near s the cubic term is ≈ (σ/6)|t|³ when s = 0.
    let sigma = model.sigma();
    let t = (-curvature + (curvature * curvature - 2.0 * sigma * slope).sqrt()) / sigma;
    let s: Vec<f64> = at.s.iter().zip(&d).map(|(a, b)| a + t * b).collect();
    let (value, grad) = model.value_and_gradient(&s);
    if value < at.value {
        Ok(Some(Point { s, value, grad }))
    } else {
        Ok(None)
    }
}

/// Backtracks along `d` from `at` until the model decreases.
fn step_along(
    model: &RegularisedModel<'_>,
    at: &Point,
    d: &[f64],
    config: &BbConfig,
) -> Result<Option<Point>> {
    let mut dir = d.to_vec();
    if dot(&at.grad, &dir) > 0.0 {
        dir.iter_mut().for_each(|v| *v = -*v);
    }
    let mut alpha = 1.0;
    for _ in 0..=config.max_backtracks {
        let s: Vec<f64> = at.s.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
        let (value, grad) = model.value_and_gradient(&s);
        if value < at.value {
            return Ok(Some(Point { s, value, grad }));
        }
        alpha *= config.backtrack;
    }
    Ok(None)
}
