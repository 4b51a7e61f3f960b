//! Optimality measures.
//!
//! `φ_1(g) = ‖g‖` is the largest decrease of a linear model over the unit
//! ball. `φ_2(g, H) = max_{‖d‖≤1} -gᵀd - ½ dᵀHd` adds curvature; it is zero
//! exactly when `g = 0` and `H ⪰ 0`, and it is computed by solving a
//! trust-region subproblem of radius one.
//!
//! Small problems materialise `H` column by column and solve the
//! subproblem in the eigenbasis (hard case included). Larger ones project
//! onto a block Krylov space started from `g` and a seeded random vector,
//! then solve the projected problem the same way.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, LinearOperator};
use crate::sampling::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionOptions {
    /// Problems with `n` at most this size are solved densely.
    pub dense_threshold: usize,
    /// Largest Krylov basis on the iterative path.
    pub max_krylov: usize,
    /// Seed of the random start vector on the iterative path.
    pub seed: u64,
}

impl Default for TrustRegionOptions {
    fn default() -> Self {
        Self {
            dense_threshold: 200,
            max_krylov: 120,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionResult {
    /// A maximiser with `‖d‖ ≤ 1`; diagnostic only.
    pub maximiser: Vec<f64>,
    /// `φ_2 ≥ 0`.
    pub value: f64,
    /// Multiplier of the norm constraint.
    pub multiplier: f64,
    pub on_boundary: bool,
    /// Operator products spent.
    pub products: usize,
}

pub fn phi_1(g: &[f64]) -> f64 {
    norm(g)
}

/// True iff `φ_j ≤ ε_j / j` for every supplied order `j = 1, 2, ...`.
pub fn check_termination(phi: &[f64], eps: &[f64]) -> bool {
    debug_assert_eq!(phi.len(), eps.len());
    phi.iter()
        .zip(eps)
        .enumerate()
        .all(|(j, (p, e))| *p <= e / (j + 1) as f64)
}

pub fn phi_2<H: LinearOperator + ?Sized>(
    g: &[f64],
    h: &H,
    opts: &TrustRegionOptions,
) -> Result<TrustRegionResult> {
    let n = g.len();
    check_dim(h.dim(), n)?;
    if n == 0 {
        return Ok(TrustRegionResult {
            maximiser: Vec::new(),
            value: 0.0,
            multiplier: 0.0,
            on_boundary: false,
            products: 0,
        });
    }
    if n <= opts.dense_threshold {
        phi_2_dense(g, h)
    } else {
        phi_2_krylov(g, h, opts)
    }
}

fn phi_2_dense<H: LinearOperator + ?Sized>(g: &[f64], h: &H) -> Result<TrustRegionResult> {
    let n = g.len();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = h.apply(&e);
        e[j] = 0.0;
        for (i, v) in col.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let asym = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .fold(0.0f64, |a, (i, j)| a.max((m[(i, j)] - m[(j, i)]).abs()));
    if asym > 1e-4 * scale + 1e-7 {
        return Err(Error::AsymmetricOperator(
            asym / scale.max(f64::MIN_POSITIVE),
        ));
    }
    let sym = (&m + m.transpose()) * 0.5;
    let sol = solve_projected(sym, g)?;
    Ok(TrustRegionResult {
        maximiser: sol.d,
        value: sol.value,
        multiplier: sol.multiplier,
        on_boundary: sol.on_boundary,
        products: n,
    })
}

fn orthonormalise(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
    }
    let nv = norm(v);
    if nv > 0.0 {
        v.iter_mut().for_each(|a| *a /= nv);
    }
    nv
}

fn phi_2_krylov<H: LinearOperator + ?Sized>(
    g: &[f64],
    h: &H,
    opts: &TrustRegionOptions,
) -> Result<TrustRegionResult> {
    let n = g.len();
    let mut rng = rng_from_seed(opts.seed);
    let mut products = 0usize;

    // Probabilistic symmetry check.
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let hu = h.apply(&u);
    let hw = h.apply(&w);
    products += 2;
    let (a, b) = (dot(&w, &hu), dot(&u, &hw));
    let asym = (a - b).abs();
    let scale = norm(&hu).max(norm(&hw)) * norm(&u).max(norm(&w));
    if asym > 1e-4 * scale + 1e-7 * n as f64 {
        return Err(Error::AsymmetricOperator(
            asym / scale.max(f64::MIN_POSITIVE),
        ));
    }

    let max_k = opts.max_krylov.min(n).max(2);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut images: Vec<Vec<f64>> = Vec::new();
    for start in [g.to_vec(), u] {
        let mut v = start;
        if orthonormalise(&mut v, &basis) > 1e-12 {
            basis.push(v);
        }
    }

    // Only the first `images.len()` basis vectors enter the projection; the
    // rest are directions already generated for the next expansion.
    let mut previous: Option<f64> = None;
    let mut target = 10usize;
    loop {
        while images.len() < basis.len() && images.len() < target {
            let img = h.apply(&basis[images.len()]);
            products += 1;
            if basis.len() < max_k {
                let mut v = img.clone();
                let scale = norm(&img).max(1e-300);
                if orthonormalise(&mut v, &basis) > 1e-10 * scale {
                    basis.push(v);
                }
            }
            images.push(img);
        }
        let k = images.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                t[(i, j)] = dot(&basis[i], &images[j]);
            }
        }
        let t = (&t + t.transpose()) * 0.5;
        let gp: Vec<f64> = basis[..k].iter().map(|q| dot(q, g)).collect();
        let sol = solve_projected(t, &gp)?;
        let change = previous.map(|p| (sol.value - p).abs());
        let converged = change.is_some_and(|c| c <= 1e-9 * (1.0 + sol.value.abs()));
        let invariant = images.len() == basis.len();
        if converged || invariant || k >= max_k {
            if !converged && !invariant {
                if let Some(c) = change.filter(|c| *c > 1e-3 * (1.0 + sol.value.abs())) {
                    return Err(Error::EigenStagnation(format!(
                        "projected value still moving by {c:.3e} with {k} basis vectors"
                    )));
                }
            }
            let mut d = vec![0.0; n];
            for (q, c) in basis.iter().zip(&sol.d) {
                d.iter_mut().zip(q).for_each(|(a, b)| *a += c * b);
            }
            return Ok(TrustRegionResult {
                maximiser: d,
                value: sol.value,
                multiplier: sol.multiplier,
                on_boundary: sol.on_boundary,
                products,
            });
        }
        previous = Some(sol.value);
        target = k + 10;
    }
}

struct ProjectedSolution {
    d: Vec<f64>,
    value: f64,
    multiplier: f64,
    on_boundary: bool,
}

/// Maximises `-gᵀd - ½ dᵀHd` over `‖d‖ ≤ 1` for a symmetric dense `H`.
fn solve_projected(h: DMatrix<f64>, g: &[f64]) -> Result<ProjectedSolution> {
    let n = g.len();
    let eig = SymmetricEigen::new(h);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "non-finite eigenvalue in trust-region solve".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lambda: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let gh: Vec<f64> = vectors.iter().map(|q| dot(q, g)).collect();
    let gnorm = norm(g);
    let lam_min = lambda[0];
    let lam_scale = lambda
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(1e-300);

    let step = |mu: f64| -> Vec<f64> {
        gh.iter()
            .zip(&lambda)
            .map(|(gi, li)| {
                let den = li + mu;
                if *gi == 0.0 {
                    0.0
                } else {
                    -gi / den
                }
            })
            .collect()
    };

    let (coords, multiplier, on_boundary) = if lam_min > 0.0 && norm(&step(0.0)) <= 1.0 {
        (step(0.0), 0.0, false)
    } else {
        let mu_low = (-lam_min).max(0.0);
        // Leftmost eigenspace and whether g is orthogonal to it.
        let cluster_tol = 1e-10 * lam_scale;
        let leftmost: Vec<usize> = (0..n)
            .filter(|&i| lambda[i] - lam_min <= cluster_tol)
            .collect();
        let g_tol = 1e-12 * gnorm.max(1e-300) + 1e-300;
        let orthogonal = leftmost.iter().all(|&i| gh[i].abs() <= g_tol);
        let partial = |mu: f64| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    if leftmost.contains(&i) || gh[i] == 0.0 {
                        0.0
                    } else {
                        -gh[i] / (lambda[i] + mu)
                    }
                })
                .collect()
        };
        if orthogonal && norm(&partial(mu_low)) <= 1.0 {
            // Hard case: complete to the boundary along the leftmost direction.
            let mut c = partial(mu_low);
            let rest = 1.0 - dot(&c, &c);
            c[leftmost[0]] = rest.max(0.0).sqrt();
            (c, mu_low, true)
        } else {
            let mu = secular_root(&gh, &lambda, mu_low, gnorm + mu_low + 1.0);
            let c = if orthogonal { partial(mu) } else { step(mu) };
            (c, mu, true)
        }
    };

    let q_value: f64 = coords
        .iter()
        .zip(&gh)
        .zip(&lambda)
        .map(|((c, gi), li)| gi * c + 0.5 * li * c * c)
        .sum();
    let value = (-q_value).max(0.0);
    let (d, on_boundary) = if -q_value <= 0.0 {
        (vec![0.0; n], false)
    } else {
        let mut d = vec![0.0; n];
        for (q, c) in vectors.iter().zip(&coords) {
            d.iter_mut().zip(q).for_each(|(a, b)| *a += c * b);
        }
        (d, on_boundary)
    };
    Ok(ProjectedSolution {
        d,
        value,
        multiplier,
        on_boundary,
    })
}

/// Root of `‖d(μ)‖ = 1` on `(low, high]`, where `‖d(μ)‖` decreases in `μ`.
/// Newton on `1/‖d‖ - 1` with a bisection safeguard.
fn secular_root(gh: &[f64], lambda: &[f64], low: f64, high: f64) -> f64 {
    let eval = |mu: f64| -> (f64, f64) {
        // Returns (‖d‖², d/dμ ‖d‖²).
        let mut s = 0.0;
        let mut ds = 0.0;
        for (gi, li) in gh.iter().zip(lambda) {
            if *gi == 0.0 {
                continue;
            }
            let den = li + mu;
            s += gi * gi / (den * den);
            ds += -2.0 * gi * gi / (den * den * den);
        }
        (s, ds)
    };
    let (mut lo, mut hi) = (low, high);
    while eval(hi).0 > 1.0 {
        hi = 2.0 * hi + 1.0;
    }
    let mut mu = hi;
    for _ in 0..200 {
        let (s, ds) = eval(mu);
        let nd = s.sqrt();
        if (nd - 1.0).abs() <= 1e-14 {
            break;
        }
        if nd > 1.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        // ψ(μ) = 1/‖d‖ - 1, ψ' = -½ s^{-3/2} ds
        let psi = 1.0 / nd - 1.0;
        let dpsi = -0.5 * ds / (s * nd);
        let mut next = mu - psi / dpsi;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (hi - lo) <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
        mu = next;
    }
    mu
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn phi2(g: &[f64], h: &DenseMatrix) -> TrustRegionResult {
        phi_2(g, h, &TrustRegionOptions::default()).unwrap()
    }

    #[test]
    fn phi_1_values() {
        assert_eq!(phi_1(&[3.0, 4.0]), 5.0);
        assert_eq!(phi_1(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn negative_curvature_without_gradient() {
        let r = phi2(&[0.0, 0.0], &DenseMatrix::diagonal(&[-2.0, 1.0]));
        assert!((r.value - 1.0).abs() < 1e-12);
        assert!((r.maximiser[0].abs() - 1.0).abs() < 1e-12);
        assert!(r.on_boundary);
    }

    #[test]
    fn positive_semidefinite_without_gradient() {
        let r = phi2(&[0.0, 0.0, 0.0], &DenseMatrix::diagonal(&[0.0, 1.0, 3.0]));
        assert_eq!(r.value, 0.0);
        assert_eq!(r.maximiser, vec![0.0; 3]);
    }

    #[test]
    fn gradient_and_negative_curvature() {
        let r = phi2(&[1.0, 0.0], &DenseMatrix::diagonal(&[-2.0, 1.0]));
        assert!((r.value - 2.0).abs() < 1e-10, "{}", r.value);
        assert!((r.maximiser[0] + 1.0).abs() < 1e-8);
        assert!((r.multiplier - 3.0).abs() < 1e-8);
    }

    #[test]
    fn interior_solution() {
        // H = 4I, g = (1, 0): d = -g/4 inside the ball, value = 1/8.
        let r = phi2(&[1.0, 0.0], &DenseMatrix::diagonal(&[4.0, 4.0]));
        assert!(!r.on_boundary);
        assert!((r.value - 0.125).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_operator_rejected() {
        let h = DenseMatrix::from_row_major(2, vec![1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            phi_2(&[1.0, 0.0], &h, &TrustRegionOptions::default()),
            Err(Error::AsymmetricOperator(_))
        ));
    }

    #[test]
    fn termination_rule() {
        assert!(check_termination(&[9e-4], &[1e-3]));
        assert!(!check_termination(&[0.0, 0.6], &[1.0, 1.0]));
        assert!(check_termination(&[1e-3, 0.5], &[1e-3, 1.0]));
        assert!(check_termination(&[0.0, 0.0], &[0.0, 0.0]));
        assert!(!check_termination(&[1e-300], &[0.0]));
    }

    #[test]
    fn krylov_path_matches_dense() {
        let n = 30;
        let mut rng = rng_from_seed(11);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.random_range(-1.0..1.0);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        let h = DenseMatrix::from_row_major(n, a);
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        let dense = phi_2(&g, &h, &TrustRegionOptions::default()).unwrap();
        let iterative = phi_2(
            &g,
            &h,
            &TrustRegionOptions {
                dense_threshold: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            (dense.value - iterative.value).abs() < 1e-6,
            "{} vs {}",
            dense.value,
            iterative.value
        );
    }
}
