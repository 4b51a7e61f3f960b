//! The finite-sum objective contract and exact full-sum evaluation.
//!
//! Every reduction here is a mean over components, accumulated in ascending
//! index order. Subsampled estimators in [`crate::sampling`] call the same
//! subset reductions, so an estimate over the full index set is bit-identical
//! to the exact value.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{norm, LinearOperator};

/// How a problem provides component Hessian-vector products.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HvpKind {
    /// `component_hvp` is an exact product.
    Exact,
    /// `component_hvp` is a forward difference of component gradients with
    /// the step from [`fd_step`]. Subset operators then cache the gradient
    /// sum at the base point and pay one gradient pass per product.
    FiniteDifference,
}

/// `f(x) = (1/N) Σ f_i(x)` over `N` components in `n` variables.
///
/// Component indices are zero-based. Implementations may assume `i < N` and
/// slices of length `n`; the checked entry points in this module and in
/// [`crate::sampling`] validate both.
pub trait FiniteSumProblem: Sync {
    /// Number of variables `n`.
    fn dim(&self) -> usize;

    /// Number of components `N`.
    fn num_components(&self) -> usize;

    fn component_value(&self, i: usize, x: &[f64]) -> f64;

    /// Adds `∇f_i(x)` into `out`.
    fn add_component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]);

    fn component_gradient(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.add_component_gradient(i, x, &mut g);
        g
    }

    fn hvp_kind(&self) -> HvpKind {
        HvpKind::FiniteDifference
    }

    /// `∇²f_i(x) v`. The default is the forward difference
    /// `(∇f_i(x + h v) - ∇f_i(x)) / h` with `h` from [`fd_step`].
    fn component_hvp(&self, i: usize, x: &[f64], v: &[f64]) -> Vec<f64> {
        let Some(h) = fd_step(x, v) else {
            return vec![0.0; x.len()];
        };
        let shifted: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| xi + h * vi).collect();
        let g1 = self.component_gradient(i, &shifted);
        let g0 = self.component_gradient(i, x);
        g1.iter().zip(&g0).map(|(a, b)| (a - b) / h).collect()
    }
}

/// Forward-difference step `√u (1 + ‖x‖) / max(‖v‖, u)`, `u` the machine
/// epsilon. `None` when `v = 0`.
pub fn fd_step(x: &[f64], v: &[f64]) -> Option<f64> {
    let vn = norm(v);
    if vn == 0.0 {
        return None;
    }
    let u = f64::EPSILON;
    Some(u.sqrt() * (1.0 + norm(x)) / vn.max(u))
}

/// Exact evaluation of `f` at a point.
pub struct ExactEvaluation<'a, P: FiniteSumProblem + ?Sized> {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Option<SubsetHessian<'a, P>>,
}

impl<'a, P: FiniteSumProblem + ?Sized> ExactEvaluation<'a, P> {
    pub fn new(problem: &'a P, x: &[f64], with_hessian: bool) -> Result<Self> {
        let value = full_value(problem, x)?;
        let gradient = full_gradient(problem, x)?;
        let hessian = if with_hessian {
            Some(SubsetHessian::new(problem, all_indices(problem), x)?)
        } else {
            None
        };
        Ok(Self {
            value,
            gradient,
            hessian,
        })
    }
}

pub fn all_indices<P: FiniteSumProblem + ?Sized>(problem: &P) -> Vec<usize> {
    (0..problem.num_components()).collect()
}

pub(crate) fn check_indices<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    indices: &[usize],
) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::EmptySample);
    }
    let len = problem.num_components();
    if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
        return Err(Error::IndexOutOfRange { index: bad, len });
    }
    Ok(())
}

/// Mean of `f_i(x)` over `indices`, in the order given.
pub fn subset_value<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    indices: &[usize],
    x: &[f64],
) -> Result<f64> {
    check_dim(problem.dim(), x.len())?;
    check_indices(problem, indices)?;
    let sum: f64 = indices.iter().map(|&i| problem.component_value(i, x)).sum();
    Ok(sum / indices.len() as f64)
}

fn gradient_sum<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    indices: &[usize],
    x: &[f64],
) -> Vec<f64> {
    let mut acc = vec![0.0; x.len()];
    for &i in indices {
        problem.add_component_gradient(i, x, &mut acc);
    }
    acc
}

/// Mean of `∇f_i(x)` over `indices`.
pub fn subset_gradient<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    indices: &[usize],
    x: &[f64],
) -> Result<Vec<f64>> {
    check_dim(problem.dim(), x.len())?;
    check_indices(problem, indices)?;
    let m = indices.len() as f64;
    let mut g = gradient_sum(problem, indices, x);
    g.iter_mut().for_each(|v| *v /= m);
    Ok(g)
}

/// The subset-mean Hessian at a fixed base point, exposed as an operator.
///
/// For finite-difference problems the gradient sum at the base point is
/// computed once on construction; each product then costs one gradient pass
/// over the subset.
pub struct SubsetHessian<'a, P: FiniteSumProblem + ?Sized> {
    problem: &'a P,
    indices: Vec<usize>,
    x: Vec<f64>,
    base_gradient_sum: Option<Vec<f64>>,
}

impl<'a, P: FiniteSumProblem + ?Sized> SubsetHessian<'a, P> {
    pub fn new(problem: &'a P, indices: Vec<usize>, x: &[f64]) -> Result<Self> {
        check_dim(problem.dim(), x.len())?;
        check_indices(problem, &indices)?;
        let base_gradient_sum = match problem.hvp_kind() {
            HvpKind::Exact => None,
            HvpKind::FiniteDifference => Some(gradient_sum(problem, &indices, x)),
        };
        Ok(Self {
            problem,
            indices,
            x: x.to_vec(),
            base_gradient_sum,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn base_point(&self) -> &[f64] {
        &self.x
    }
}

impl<P: FiniteSumProblem + ?Sized> LinearOperator for SubsetHessian<'_, P> {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.x.len());
        let m = self.indices.len() as f64;
        match &self.base_gradient_sum {
            None => {
                let mut acc = vec![0.0; v.len()];
                for &i in &self.indices {
                    let hv = self.problem.component_hvp(i, &self.x, v);
                    acc.iter_mut().zip(&hv).for_each(|(a, b)| *a += b);
                }
                acc.iter_mut().for_each(|a| *a /= m);
                acc
            }
            Some(base) => {
                let Some(h) = fd_step(&self.x, v) else {
                    return vec![0.0; v.len()];
                };
                let shifted: Vec<f64> = self.x.iter().zip(v).map(|(xi, vi)| xi + h * vi).collect();
                let moved = gradient_sum(self.problem, &self.indices, &shifted);
                moved
                    .iter()
                    .zip(base)
                    .map(|(a, b)| ((a - b) / h) / m)
                    .collect()
            }
        }
    }
}

/// `(1/N) Σ f_i(x)`.
pub fn full_value<P: FiniteSumProblem + ?Sized>(problem: &P, x: &[f64]) -> Result<f64> {
    subset_value(problem, &all_indices(problem), x)
}

/// `(1/N) Σ ∇f_i(x)`.
pub fn full_gradient<P: FiniteSumProblem + ?Sized>(problem: &P, x: &[f64]) -> Result<Vec<f64>> {
    subset_gradient(problem, &all_indices(problem), x)
}

/// `(1/N) Σ ∇²f_i(x) v`.
pub fn full_hvp<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    v: &[f64],
) -> Result<Vec<f64>> {
    check_dim(problem.dim(), v.len())?;
    Ok(SubsetHessian::new(problem, all_indices(problem), x)?.apply(v))
}
