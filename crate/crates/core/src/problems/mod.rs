//! Concrete finite-sum objectives.
//!
//! [`NetworkProblem`] is the square loss `(y_i - net(a_i; x))^2` over a
//! feed-forward predictor with tanh hidden layers and a sigmoid output. With
//! no hidden layers it is the zero-bias sigmoid predictor `σ(aᵀx)`.
//!
//! [`QuadraticProblem`] has exact Hessian products and is used to check the
//! solver machinery on problems with known answers.

mod dataset;
mod network;
mod quadratic;

pub use dataset::Dataset;
pub use network::{
    classification_rate, predict, sigmoid, testing_loss, NetworkProblem, NetworkSpec,
    PredictionTrace, SIGMOID_CLAMP,
};
pub use quadratic::QuadraticProblem;
