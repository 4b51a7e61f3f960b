//! Inexact adaptive regularisation for finite-sum minimisation.
//!
//! The crate implements two members of the adaptive regularisation family for
//! objectives of the form `f(x) = (1/N) Σ f_i(x)`:
//!
//! - **IAR1**: a quadratic-regularisation method. Each step is
//!   `x - ḡ/σ`, i.e. gradient descent with a learning rate adapted through
//!   the acceptance ratio.
//! - **IAR2**: a cubic-regularisation method. The cubic model is minimised
//!   approximately by a Barzilai-Borwein iteration that only touches the
//!   Hessian through Hessian-vector products.
//!
//! Function values, gradients and Hessian actions are estimated by averaging
//! over uniformly drawn subsets of components. Subset sizes come from an
//! operator-Bernstein bound and adapt to the accuracy each iteration needs;
//! once a size reaches `N` the estimate is exact.
//!
//! Module map:
//!
//! - [`finite_sum`]: the problem contract and exact full-sum evaluations.
//! - [`problems`]: square loss over a sigmoid predictor or a tanh network,
//!   plus a quadratic test problem.
//! - [`sampling`]: Bernstein sample sizes, subsample draws, estimators.
//! - [`model`]: the regularised Taylor model and its accuracy quantities.
//! - [`subproblem`]: closed-form quadratic step and the cubic BB solver.
//! - [`optimality`]: first- and second-order optimality measures.
//! - [`solver`]: the outer loop, inner accuracy loops and cost accounting.
//! - [`harness`]: datasets, configuration, experiment execution, CSV output.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod finite_sum;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod optimality;
pub mod problems;
pub mod sampling;
pub mod solver;
pub mod subproblem;

pub use error::{Error, Result};
pub use finite_sum::{FiniteSumProblem, HvpKind};
pub use solver::{run, SolverConfig, SolverOutput, StopReason, TraceEvent};
