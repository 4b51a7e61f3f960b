mod common;

use std::sync::Arc;

use iar::finite_sum::{full_gradient, full_hvp, full_value};
use iar::harness::synthesize_dataset;
use iar::linalg::DenseMatrix;
use iar::model::RegularisedModel;
use iar::optimality::{phi_2, TrustRegionOptions};
use iar::problems::{NetworkProblem, NetworkSpec};
use iar::subproblem::{cubic_step, BbConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn network(hidden: Vec<usize>, seed: u64) -> NetworkProblem {
    let data = synthesize_dataset(seed, 40, 5, 1.5).unwrap();
    NetworkProblem::new(NetworkSpec::new(5, hidden).unwrap(), Arc::new(data)).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

#[test]
fn backprop_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for hidden in [vec![], vec![5, 2]] {
        let p = network(hidden.clone(), 3);
        let n = p.spec().parameter_count();
        for _ in 0..5 {
            let x = random_point(&mut rng, n, 1.0);
            let f = |y: &[f64]| full_value(&p, y).unwrap();
            let g = full_gradient(&p, &x).unwrap();
            let fd = central_gradient(&f, &x, 1e-6);
            let err = relative_error(&g, &fd);
            assert!(err <= 1e-5, "net {hidden:?}: gradient error {err:e}");
        }
    }
}

#[test]
fn hvp_matches_mixed_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for hidden in [vec![], vec![5, 2]] {
        let p = network(hidden.clone(), 4);
        let n = p.spec().parameter_count();
        for _ in 0..5 {
            let x = random_point(&mut rng, n, 1.0);
            let v = random_point(&mut rng, n, 1.0);
            let f = |y: &[f64]| full_value(&p, y).unwrap();
            let hv = full_hvp(&p, &x, &v).unwrap();
            let oracle = mixed_difference_hvp(&f, &x, &v, 1e-4);
            let err = relative_error(&hv, &oracle);
            assert!(err <= 1e-3, "net {hidden:?}: hvp error {err:e}");
        }
    }
}

#[test]
fn phi2_matches_grid_oracle() {
    let opts = TrustRegionOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..15 {
        let a = rng.random_range(-3.0..3.0);
        let b = rng.random_range(-3.0..3.0);
        let c = rng.random_range(-2.0..2.0);
        let h = [[a, c], [c, b]];
        let g = if k % 3 == 0 {
            // Gradient orthogonal to the leftmost eigenvector.
            let v = leftmost(&h);
            let s = rng.random_range(-0.5..0.5);
            [-v[1] * s, v[0] * s]
        } else {
            [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]
        };
        let m = DenseMatrix::from_row_major(2, vec![a, c, c, b]);
        let got = phi_2(&g, &m, &opts).unwrap().value;
        let want = phi2_oracle_2d(g, h);
        assert!((got - want).abs() <= 1e-4, "case {k}: {got} vs {want}");
    }
}

fn leftmost(h: &[[f64; 2]; 2]) -> [f64; 2] {
    let (a, b, c) = (h[0][0], h[1][1], h[0][1]);
    let mean = 0.5 * (a + b);
    let rad = (0.25 * (a - b) * (a - b) + c * c).sqrt();
    let l = mean - rad;
    let v = if c.abs() > 1e-14 {
        [c, l - a]
    } else if a <= b {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    [v[0] / n, v[1] / n]
}

#[test]
fn cubic_step_reaches_grid_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = BbConfig::default();
    for k in 0..10 {
        let n = 1 + k % 3;
        let b: Vec<Vec<f64>> = (0..n).map(|_| random_point(&mut rng, n, 1.0)).collect();
        let h: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|l| b[l][i] * b[l][j]).sum())
                    .collect()
            })
            .collect();
        let g = random_point(&mut rng, n, 2.0);
        let sigma = rng.random_range(0.2..3.0);
        let m = DenseMatrix::from_row_major(n, h.concat());
        let model = RegularisedModel::cubic(g.clone(), &m, sigma).unwrap();
        let step = cubic_step(&model, &cfg, 1e-9, None).unwrap();
        let got = cubic_model(&g, &h, sigma, &step.s);
        let want = cubic_oracle(&g, &h, sigma);
        assert!(got - want <= 1e-6, "case {k}: {got} vs {want}");
    }
}
