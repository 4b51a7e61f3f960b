use crate::finite_sum::{FiniteSumProblem, HvpKind};
use crate::linalg::{DenseMatrix, LinearOperator};

/// `f_i(x) = ½ (x - c_i)ᵀ A (x - c_i)` with a shared symmetric `A`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    a: DenseMatrix,
    centers: Vec<Vec<f64>>,
}

impl QuadraticProblem {
    pub fn new(a: DenseMatrix, centers: Vec<Vec<f64>>) -> Self {
        assert!(!centers.is_empty(), "at least one component");
        assert!(centers.iter().all(|c| c.len() == a.dim()));
        Self { a, centers }
    }

    /// `N` copies of `‖x‖²`.
    pub fn squared_norm(n: usize, components: usize) -> Self {
        let a = DenseMatrix::diagonal(&vec![2.0; n]);
        Self::new(a, vec![vec![0.0; n]; components])
    }

    fn shifted(&self, i: usize, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.centers[i]).map(|(a, b)| a - b).collect()
    }
}

impl FiniteSumProblem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn num_components(&self) -> usize {
        self.centers.len()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let r = self.shifted(i, x);
        let ar = self.a.apply(&r);
        0.5 * crate::linalg::dot(&r, &ar)
    }

    fn add_component_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let ar = self.a.apply(&self.shifted(i, x));
        out.iter_mut().zip(&ar).for_each(|(o, g)| *o += g);
    }

    fn hvp_kind(&self) -> HvpKind {
        HvpKind::Exact
    }

    fn component_hvp(&self, _i: usize, _x: &[f64], v: &[f64]) -> Vec<f64> {
        self.a.apply(v)
    }
}
