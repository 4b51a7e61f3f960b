//! Independent numerical oracles shared by the integration and acceptance
//! tests. Nothing here calls into the solver internals.

#![allow(dead_code)]

/// Central differences of `f` at `x`.
pub fn central_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|j| {
            xp[j] = x[j] + h;
            let fp = f(&xp);
            xp[j] = x[j] - h;
            let fm = f(&xp);
            xp[j] = x[j];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `(H v)_j` from mixed second differences of `f` along `v` and `e_j`.
pub fn mixed_difference_hvp(f: &dyn Fn(&[f64]) -> f64, x: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    let shifted = |a: f64, j: usize, b: f64| -> f64 {
        let mut y: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| xi + a * vi).collect();
        y[j] += b;
        f(&y)
    };
    (0..x.len())
        .map(|j| {
            (shifted(h, j, h) - shifted(h, j, -h) - shifted(-h, j, h) + shifted(-h, j, -h))
                / (4.0 * h * h)
        })
        .collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-10)
}

fn quad_form(h: &[[f64; 2]; 2], d: [f64; 2]) -> f64 {
    d[0] * (h[0][0] * d[0] + h[0][1] * d[1]) + d[1] * (h[1][0] * d[0] + h[1][1] * d[1])
}

/// `max_{‖d‖≤1} -gᵀd - ½dᵀHd` in two dimensions by a polar grid over the
/// unit disc followed by a projected compass search from the best cells.
pub fn phi2_oracle_2d(g: [f64; 2], h: [[f64; 2]; 2]) -> f64 {
    const R: f64 = std::f64::consts::FRAC_1_SQRT_2;
    let value = |d: [f64; 2]| -(g[0] * d[0] + g[1] * d[1]) - 0.5 * quad_form(&h, d);
    let mut cells: Vec<(f64, [f64; 2])> = Vec::new();
    let radii = 200;
    let angles = 720;
    cells.push((value([0.0, 0.0]), [0.0, 0.0]));
    for i in 1..=radii {
        let r = i as f64 / radii as f64;
        for k in 0..angles {
            let a = std::f64::consts::TAU * k as f64 / angles as f64;
            let d = [r * a.cos(), r * a.sin()];
            cells.push((value(d), d));
        }
    }
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let project = |d: [f64; 2]| {
        let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if n > 1.0 {
            [d[0] / n, d[1] / n]
        } else {
            d
        }
    };
    let mut best = cells[0].0;
    for &(v0, d0) in cells.iter().take(8) {
        let (mut v, mut d) = (v0, d0);
        let mut step = 1e-2;
        while step > 1e-13 {
            let mut moved = false;
            for dir in [
                [1.0, 0.0],
                [-1.0, 0.0],
                [0.0, 1.0],
                [0.0, -1.0],
                [R, R],
                [-R, R],
                [R, -R],
                [-R, -R],
            ] {
                let cand = project([d[0] + step * dir[0], d[1] + step * dir[1]]);
                let vc = value(cand);
                if vc > v {
                    v = vc;
                    d = cand;
                    moved = true;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        // Tangential refinement on the boundary, where compass moves are
        // mostly cut off by the projection.
        let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if r > 1.0 - 1e-9 {
            let mut a = d[1].atan2(d[0]);
            let mut step = 1e-2;
            while step > 1e-14 {
                let vp = value([(a + step).cos(), (a + step).sin()]);
                let vm = value([(a - step).cos(), (a - step).sin()]);
                if vp > v && vp >= vm {
                    v = vp;
                    a += step;
                } else if vm > v {
                    v = vm;
                    a -= step;
                } else {
                    step *= 0.5;
                }
            }
        }
        best = best.max(v);
    }
    best.max(0.0)
}

/// `gᵀs + ½sᵀHs + σ/6‖s‖³` for a dense `H`.
pub fn cubic_model(g: &[f64], h: &[Vec<f64>], sigma: f64, s: &[f64]) -> f64 {
    let n = g.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += s[i] * h[i][j] * s[j];
        }
    }
    let ns = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    g.iter().zip(s).map(|(a, b)| a * b).sum::<f64>() + 0.5 * quad + sigma / 6.0 * ns.powi(3)
}

/// Global minimum of the cubic model for `n ≤ 3` by a grid over the box
/// that must contain every minimiser, then a compass search.
pub fn cubic_oracle(g: &[f64], h: &[Vec<f64>], sigma: f64) -> f64 {
    let n = g.len();
    assert!((1..=3).contains(&n));
    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lam_min = gershgorin_lower(h).min(0.0);
    // m(s) ≥ -‖g‖r + λ_min r²/2 + σr³/6, positive beyond this radius.
    let radius =
        3.0 * (-0.5 * lam_min + (0.25 * lam_min * lam_min + 2.0 * sigma * gn / 3.0).sqrt()) / sigma
            + 1e-3;
    let per_axis: usize = match n {
        1 => 4001,
        2 => 401,
        _ => 81,
    };
    let coord = |k: usize| -radius + 2.0 * radius * k as f64 / (per_axis - 1) as f64;
    let total = per_axis.pow(n as u32);
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut s = vec![0.0; n];
    for idx in 0..total {
        let mut rest = idx;
        for c in s.iter_mut() {
            *c = coord(rest % per_axis);
            rest /= per_axis;
        }
        candidates.push((cubic_model(g, h, sigma, &s), s.clone()));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = f64::INFINITY;
    for (v0, s0) in candidates.into_iter().take(6) {
        let (mut v, mut s) = (v0, s0);
        let mut step = 2.0 * radius / per_axis as f64;
        while step > 1e-14 {
            let mut moved = false;
            for j in 0..n {
                for sign in [1.0, -1.0] {
                    let mut c = s.clone();
                    c[j] += sign * step;
                    let vc = cubic_model(g, h, sigma, &c);
                    if vc < v {
                        v = vc;
                        s = c;
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        best = best.min(v);
    }
    best
}

fn gershgorin_lower(h: &[Vec<f64>]) -> f64 {
    h.iter()
        .enumerate()
        .map(|(i, row)| {
            row[i]
                - row
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, v)| v.abs())
                    .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}
