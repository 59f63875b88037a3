#![allow(dead_code)]

use minproc_core::solver::SolverTerms;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Powers log-uniform in [1e-4, 1e2]; cross terms `2 rho sqrt(at_one * at_zero)`
/// with `rho` uniform in [-1, 1], which keeps both quadratics non-negative.
pub fn random_terms(rng: &mut ChaCha8Rng, i_xi: f64) -> SolverTerms {
    let mut power = || 10f64.powf(rng.random_range(-4.0..=2.0));
    let (s_r, s_0, u_r, u_0, n2) = (power(), power(), power(), power(), power());
    let s_c = 2.0 * rng.random_range(-1.0..=1.0) * (s_r * s_0).sqrt();
    let u_c = 2.0 * rng.random_range(-1.0..=1.0) * (u_r * u_0).sqrt();
    SolverTerms::new([s_r, s_0, s_c], [u_r, u_0, u_c], n2, i_xi)
}

/// Grid point on [0, 1], listed from 1 down.
pub fn alpha_desc(n: usize) -> impl Iterator<Item = f64> {
    (0..n).rev().map(move |i| i as f64 / (n - 1) as f64)
}

/// Intelligibility margin written from the band powers, not the solver's D terms.
pub fn margin(t: &SolverTerms, a: f64) -> f64 {
    t.delta_s(a) - t.i_xi * t.delta_u(a)
}

pub fn cap(t: &SolverTerms, du_db: f64) -> f64 {
    t.sigma_n2 * 10f64.powf(du_db / 10.0)
}

/// C1 and C2 with relative slack `tol` (C3 and C4 hold by construction of the grid).
pub fn meets_c1_c2(t: &SolverTerms, a: f64, g: f64, du_db: f64, tol: f64) -> bool {
    let target = t.sigma_n2 * t.i_xi;
    g * g * margin(t, a) >= target * (1.0 - tol) && g * g * t.delta_u(a) <= cap(t, du_db) * (1.0 + tol)
}

/// Upper end of the gain sweep at `alpha`: the C2 boundary, or (no noise at
/// all) the gain that just reaches the target.
pub fn gain_ceiling(t: &SolverTerms, a: f64, du_db: f64) -> f64 {
    let u = t.delta_u(a);
    if u > 0.0 {
        (cap(t, du_db) / u).sqrt()
    } else {
        let p = margin(t, a);
        if p > 0.0 {
            (t.sigma_n2 * t.i_xi / p).sqrt().max(1.0)
        } else {
            1.0
        }
    }
}

/// Exhaustive `n x n` search of P0: `alpha` on a uniform grid, `g` on a
/// uniform grid over `[1, gain_ceiling]`. Returns `(alpha, g, penalty)`;
/// ties go to the larger `alpha`.
pub fn brute_force(t: &SolverTerms, du_db: f64, n: usize) -> Option<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for a in alpha_desc(n) {
        let hi = gain_ceiling(t, a, du_db);
        if hi < 1.0 {
            continue;
        }
        for m in 0..n {
            let g = 1.0 + (hi - 1.0) * m as f64 / (n - 1) as f64;
            if meets_c1_c2(t, a, g, du_db, 1e-12) {
                let pen = (1.0 - a).powi(2) + (1.0 - g).powi(2);
                if best.is_none_or(|(_, _, b)| pen < b) {
                    best = Some((a, g, pen));
                }
                // larger g only adds penalty at this alpha
                break;
            }
        }
    }
    best
}

/// Whether any point of the `n x n` grid satisfies C1-C4.
pub fn brute_feasible(t: &SolverTerms, du_db: f64, n: usize) -> bool {
    brute_force(t, du_db, n).is_some()
}
