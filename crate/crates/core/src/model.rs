//! The regularised Taylor model built at each iteration.
//!
//! With estimated gradient `ḡ`, Hessian action `H̄` and weight `σ`:
//!
//! ```text
//! p = 1:  m(s) = ḡᵀs + (σ/2)‖s‖²
//! p = 2:  m(s) = ḡᵀs + ½ sᵀH̄s + (σ/6)‖s‖³
//! ```
//!
//! The model omits the constant term, so `m(0) = 0`, and the predicted
//! decrease `ΔT_f(s)` is the model value without the regulariser, negated.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, LinearOperator};
use crate::optimality::{phi_2, TrustRegionOptions};

/// Degree of the Taylor part: `p = 1` (quadratic regularisation) or `p = 2`
/// (cubic regularisation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelOrder {
    Quadratic,
    Cubic,
}

impl ModelOrder {
    pub fn from_degree(p: usize) -> Result<Self> {
        match p {
            1 => Ok(ModelOrder::Quadratic),
            2 => Ok(ModelOrder::Cubic),
            _ => Err(Error::param(format!("model order must be 1 or 2, got {p}"))),
        }
    }

    pub fn degree(self) -> usize {
        match self {
            ModelOrder::Quadratic => 1,
            ModelOrder::Cubic => 2,
        }
    }
}

pub struct RegularisedModel<'h> {
    order: ModelOrder,
    gradient: Vec<f64>,
    hessian: Option<&'h dyn LinearOperator>,
    sigma: f64,
}

impl<'h> RegularisedModel<'h> {
    pub fn quadratic(gradient: Vec<f64>, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self {
            order: ModelOrder::Quadratic,
            gradient,
            hessian: None,
            sigma,
        })
    }

    pub fn cubic(gradient: Vec<f64>, hessian: &'h dyn LinearOperator, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        check_dim(gradient.len(), hessian.dim())?;
        Ok(Self {
            order: ModelOrder::Cubic,
            gradient,
            hessian: Some(hessian),
            sigma,
        })
    }

    pub fn order(&self) -> ModelOrder {
        self.order
    }

    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    pub fn hessian(&self) -> Option<&'h dyn LinearOperator> {
        self.hessian
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    /// `H̄s`, or `None` for the quadratic model.
    fn curvature(&self, s: &[f64]) -> Option<Vec<f64>> {
        self.hessian.map(|h| h.apply(s))
    }

    /// `(σ/2)‖s‖²` or `(σ/6)‖s‖³`.
    pub fn regulariser(&self, s: &[f64]) -> f64 {
        let ns = norm(s);
        match self.order {
            ModelOrder::Quadratic => 0.5 * self.sigma * ns * ns,
            ModelOrder::Cubic => self.sigma / 6.0 * ns * ns * ns,
        }
    }

    pub fn value(&self, s: &[f64]) -> Result<f64> {
        check_dim(self.dim(), s.len())?;
        Ok(self.value_and_gradient(s).0)
    }

    pub fn gradient_at(&self, s: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), s.len())?;
        Ok(self.value_and_gradient(s).1)
    }

    /// Value and gradient sharing one Hessian product.
    pub fn value_and_gradient(&self, s: &[f64]) -> (f64, Vec<f64>) {
        let ns = norm(s);
        let hs = self.curvature(s);
        let linear = dot(&self.gradient, s);
        match (self.order, hs) {
            (ModelOrder::Cubic, Some(hs)) => {
                let value = linear + 0.5 * dot(s, &hs) + self.sigma / 6.0 * ns * ns * ns;
                let c = 0.5 * self.sigma * ns;
                let grad = self
                    .gradient
                    .iter()
                    .zip(&hs)
                    .zip(s)
                    .map(|((g, h), si)| g + h + c * si)
                    .collect();
                (value, grad)
            }
            _ => {
                let value = linear + 0.5 * self.sigma * ns * ns;
                let grad = self
                    .gradient
                    .iter()
                    .zip(s)
                    .map(|(g, si)| g + self.sigma * si)
                    .collect();
                (value, grad)
            }
        }
    }

    /// Predicted decrease `-ḡᵀs` or `-ḡᵀs - ½ sᵀH̄s`.
    pub fn delta_t_f(&self, s: &[f64]) -> Result<f64> {
        check_dim(self.dim(), s.len())?;
        let linear = -dot(&self.gradient, s);
        Ok(match self.curvature(s) {
            Some(hs) => linear - 0.5 * dot(s, &hs),
            None => linear,
        })
    }

    /// `‖∇m(s)‖`, the first-order measure of the model at `s`.
    pub fn phi_model_1(&self, s: &[f64]) -> Result<f64> {
        Ok(norm(&self.gradient_at(s)?))
    }

    /// `∇²m(s) v`: `σv` for `p = 1`, `H̄v + (σ/2)(‖s‖v + (sᵀv/‖s‖)s)` for `p = 2`.
    pub fn hessian_action_at(&self, s: &[f64], v: &[f64]) -> Vec<f64> {
        match self.hessian {
            None => v.iter().map(|vi| self.sigma * vi).collect(),
            Some(h) => {
                let mut out = h.apply(v);
                let ns = norm(s);
                if ns > 0.0 {
                    let c = 0.5 * self.sigma;
                    let proj = dot(s, v) / ns;
                    out.iter_mut()
                        .zip(v)
                        .zip(s)
                        .for_each(|((o, vi), si)| *o += c * (ns * vi + proj * si));
                }
                out
            }
        }
    }

    /// The model Hessian at `s` as an operator.
    pub fn hessian_operator_at<'m>(&'m self, s: &'m [f64]) -> ModelHessian<'m, 'h> {
        ModelHessian { model: self, s }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!(
            "regularisation weight must be positive and finite, got {sigma}"
        )))
    }
}

pub struct ModelHessian<'m, 'h> {
    model: &'m RegularisedModel<'h>,
    s: &'m [f64],
}

impl LinearOperator for ModelHessian<'_, '_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.model.hessian_action_at(self.s, v)
    }
}

/// The quantities of the adaptive derivative-accuracy test at a trial step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyQuantities {
    pub tau: f64,
    pub delta_t_min: f64,
    pub delta_t_f: f64,
    pub model_grad_norm: f64,
    /// `φ̄_{m,2}(s)` when second-order optimality is targeted.
    pub phi_model_2: Option<f64>,
    /// Operator products spent computing these.
    pub products: usize,
}

impl AccuracyQuantities {
    /// `ν_ℓ = ω ΔT_min / (6 τ^ℓ)` for `ℓ = 1, 2`.
    pub fn targets(&self, omega: f64) -> [f64; 2] {
        if self.delta_t_min <= 0.0 {
            return [0.0, 0.0];
        }
        let base = omega * self.delta_t_min / 6.0;
        [base / self.tau, base / (self.tau * self.tau)]
    }
}

/// Evaluates `τ` and `ΔT_min` at trial step `s` for optimality order `q`.
///
/// The maximisers of the model decrements lie on the unit sphere unless the
/// decrement vanishes, so `τ = max(‖s‖, 1)` except when every decrement is
/// zero, where `τ = ‖s‖`.
pub fn accuracy_quantities(
    model: &RegularisedModel<'_>,
    s: &[f64],
    q: usize,
    tr: &TrustRegionOptions,
) -> Result<AccuracyQuantities> {
    if q == 0 || q > model.order().degree() {
        return Err(Error::param(format!(
            "optimality order {q} not supported by a degree-{} model",
            model.order().degree()
        )));
    }
    let (_, grad) = model.value_and_gradient(s);
    let delta_t_f = model.delta_t_f(s)?;
    let model_grad_norm = norm(&grad);
    let mut products = usize::from(model.hessian.is_some()) * 2;
    let mut delta_t_min = delta_t_f.min(model_grad_norm);
    let mut any_nonzero = model_grad_norm > 0.0;
    let phi_model_2 = if q == 2 {
        let hess = model.hessian_operator_at(s);
        let r = phi_2(&grad, &hess, tr)?;
        products += r.products;
        delta_t_min = delta_t_min.min(r.value);
        any_nonzero |= r.value > 0.0;
        Some(r.value)
    } else {
        None
    };
    let ns = norm(s);
    let tau = if any_nonzero { ns.max(1.0) } else { ns };
    Ok(AccuracyQuantities {
        tau,
        delta_t_min,
        delta_t_f,
        model_grad_norm,
        phi_model_2,
        products,
    })
}
