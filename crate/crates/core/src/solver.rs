//! Per-band minimum-processing problem.
//!
//! For band `j` find `(alpha, g)` minimizing `(1 - alpha)^2 + (1 - g)^2` subject to
//!
//! * C1: `g^2 p_fse(alpha) >= sigma_N^2 I_xi` (subband SNR target),
//! * C2: `g^2 delta_U(alpha) <= sigma_N^2 10^(Delta_U / 10)` (processed far-end noise cap),
//! * C3: `0 <= alpha <= 1`,
//! * C4: `g >= 1`.
//!
//! For a fixed `alpha` the objective grows with `g` on `g >= 1`, so the best
//! gain is the smallest one meeting C1. That reduces the search to a 1-D grid
//! over `alpha` with a closed-form gain per grid point.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamform::BeamformerSet;
use crate::filterbank::Filterbank;
use crate::linalg::hermitian_power;
use crate::scene::SpectralStats;
use crate::{Error, Result};

/// Relative slack on the right-hand side of C2 inside the solver.
const CAP_TOL: f64 = 1e-12;
/// Relative band inside which two objective values count as tied.
const TIE_TOL: f64 = 1e-9;
/// Relative tolerance used when auditing a delivered solution.
pub const AUDIT_TOL: f64 = 1e-9;

/// Band-integrated powers of the two beamformers and their cross terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverTerms {
    pub delta_s_mu_r: f64,
    pub delta_s_mu0: f64,
    pub delta_s_cross: f64,
    pub delta_u_mu_r: f64,
    pub delta_u_mu0: f64,
    pub delta_u_cross: f64,
    pub sigma_n2: f64,
    pub i_xi: f64,
    pub d_mu_r: f64,
    pub d_mu0: f64,
    pub d_cross: f64,
}

#[inline]
fn quadratic(alpha: f64, at_one: f64, at_zero: f64, cross: f64) -> f64 {
    alpha * alpha * at_one + (1.0 - alpha) * (1.0 - alpha) * at_zero + alpha * (1.0 - alpha) * cross
}

impl SolverTerms {
    /// `speech` and `noise` are `[mu_R, mu_0, cross]` powers.
    pub fn new(speech: [f64; 3], noise: [f64; 3], sigma_n2: f64, i_xi: f64) -> Self {
        let [delta_s_mu_r, delta_s_mu0, delta_s_cross] = speech;
        let [delta_u_mu_r, delta_u_mu0, delta_u_cross] = noise;
        Self {
            delta_s_mu_r,
            delta_s_mu0,
            delta_s_cross,
            delta_u_mu_r,
            delta_u_mu0,
            delta_u_cross,
            sigma_n2,
            i_xi,
            d_mu_r: delta_s_mu_r - delta_u_mu_r * i_xi,
            d_mu0: delta_s_mu0 - delta_u_mu0 * i_xi,
            d_cross: delta_s_cross - delta_u_cross * i_xi,
        }
    }

    /// Same powers, different target SNR.
    pub fn with_target(&self, i_xi: f64) -> Self {
        Self::new(
            [self.delta_s_mu_r, self.delta_s_mu0, self.delta_s_cross],
            [self.delta_u_mu_r, self.delta_u_mu0, self.delta_u_cross],
            self.sigma_n2,
            i_xi,
        )
    }

    pub fn delta_s(&self, alpha: f64) -> f64 {
        quadratic(alpha, self.delta_s_mu_r, self.delta_s_mu0, self.delta_s_cross)
    }

    pub fn delta_u(&self, alpha: f64) -> f64 {
        quadratic(alpha, self.delta_u_mu_r, self.delta_u_mu0, self.delta_u_cross)
    }

    /// Right-hand side of C1, `sigma_N^2 I_xi`.
    pub fn target(&self) -> f64 {
        self.sigma_n2 * self.i_xi
    }

    /// Right-hand side of C2.
    pub fn noise_cap(&self, delta_u_db: f64) -> f64 {
        self.sigma_n2 * 10f64.powf(delta_u_db / 10.0)
    }

    /// Far-end SNR `delta_S(alpha) / delta_U(alpha)`.
    pub fn fe_snr(&self, alpha: f64) -> f64 {
        let s = self.delta_s(alpha);
        let u = self.delta_u(alpha);
        if u > 0.0 {
            s / u
        } else if s > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }

    /// Largest gain allowed by C2 at `alpha`.
    pub fn gain_cap(&self, alpha: f64, delta_u_db: f64) -> f64 {
        let u = self.delta_u(alpha);
        if u > 0.0 {
            (self.noise_cap(delta_u_db) / u).sqrt()
        } else {
            f64::INFINITY
        }
    }
}

pub fn p_fse(terms: &SolverTerms, alpha: f64) -> f64 {
    quadratic(alpha, terms.d_mu_r, terms.d_mu0, terms.d_cross)
}

/// Subband SNR at the listener, `g^2 delta_S / (g^2 delta_U + sigma_N^2)`;
/// zero when every power vanishes.
pub fn xi(terms: &SolverTerms, alpha: f64, g: f64) -> f64 {
    let g2 = g * g;
    let num = g2 * terms.delta_s(alpha);
    let den = g2 * terms.delta_u(alpha) + terms.sigma_n2;
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

pub fn band_terms(
    stats: &SpectralStats,
    bset: &BeamformerSet,
    fb: &Filterbank,
    j: usize,
    i_xi: f64,
) -> Result<SolverTerms> {
    let bins = fb.band_bins.get(j).ok_or(Error::EmptyBand(j))?;
    if bins.is_empty() {
        return Err(Error::EmptyBand(j));
    }
    let mut s = [0.0; 3];
    let mut u = [0.0; 3];
    let mut n = 0.0;
    for &k in bins {
        let om = fb.omega[j][k];
        let wr = &bset.w_mu_r[k];
        let w0 = &bset.w_mu0[k];
        let cu = &stats.c_u[k];
        let s2 = stats.sigma_s2[k];
        let a = wr.dotc(&stats.d[k]);
        let b = w0.dotc(&stats.d[k]);
        s[0] += om * s2 * a.norm_sqr();
        s[1] += om * s2 * b.norm_sqr();
        s[2] += om * s2 * 2.0 * (b * a.conj()).re;
        u[0] += om * hermitian_power(wr, cu);
        u[1] += om * hermitian_power(w0, cu);
        u[2] += om * 2.0 * w0.dotc(&(cu * wr)).re;
        n += om * stats.sigma_n2[k];
    }
    let clamp = |v: f64| v.max(0.0);
    Ok(SolverTerms::new(
        [clamp(s[0]), clamp(s[1]), s[2]],
        [clamp(u[0]), clamp(u[1]), u[2]],
        clamp(n),
        i_xi,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Feasible,
    C1Infeasible,
    C2Infeasible,
    BothInfeasible,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Feasible => "feasible",
            Status::C1Infeasible => "c1_infeasible",
            Status::C2Infeasible => "c2_infeasible",
            Status::BothInfeasible => "both_infeasible",
        })
    }
}

impl FromStr for Status {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feasible" => Ok(Status::Feasible),
            "c1_infeasible" => Ok(Status::C1Infeasible),
            "c2_infeasible" => Ok(Status::C2Infeasible),
            "both_infeasible" => Ok(Status::BothInfeasible),
            other => Err(Error::Config(format!("unknown status {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSolution {
    pub alpha: f64,
    pub g: f64,
    pub status: Status,
    pub penalty: f64,
    pub xi: f64,
}

impl BandSolution {
    pub fn new(terms: &SolverTerms, alpha: f64, g: f64, status: Status) -> Self {
        Self {
            alpha,
            g,
            status,
            penalty: penalty(alpha, g),
            xi: xi(terms, alpha, g),
        }
    }
}

pub fn penalty(alpha: f64, g: f64) -> f64 {
    (1.0 - alpha).powi(2) + (1.0 - g).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub delta_u_db: f64,
    pub delta_n_db: f64,
    pub grid_n: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            delta_u_db: 12.0,
            delta_n_db: 10.0,
            grid_n: 2001,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 2 {
            return Err(Error::Config(format!("grid_n = {} must be >= 2", self.grid_n)));
        }
        if !(self.delta_n_db > 0.0) || !self.delta_n_db.is_finite() {
            return Err(Error::Config("delta_n_db must be positive".into()));
        }
        if !self.delta_u_db.is_finite() {
            return Err(Error::Config("delta_u_db must be finite".into()));
        }
        Ok(())
    }
}

/// Uniform grid over `[0, 1]`, from `alpha = 1` downwards so that the first
/// of several tied candidates is the one closest to the reference.
fn alpha_grid_desc(n: usize) -> impl Iterator<Item = f64> {
    let last = (n - 1) as f64;
    (0..n).rev().map(move |i| i as f64 / last)
}

#[inline]
fn beats(candidate: f64, best: f64) -> bool {
    if candidate.is_infinite() || best.is_infinite() {
        candidate < best
    } else {
        candidate < best - TIE_TOL * best.abs()
    }
}

/// Argmin of `f` over the grid; ties go to the larger `alpha`.
fn grid_argmin(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let mut best: Option<(f64, f64)> = None;
    for a in alpha_grid_desc(n) {
        let v = f(a);
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| beats(v, b)) {
            best = Some((a, v));
        }
    }
    best.map_or(1.0, |(a, _)| a)
}

/// Smallest `g >= 1` meeting C1 at `alpha`, or `None` when no gain does.
fn min_gain_for_c1(terms: &SolverTerms, alpha: f64) -> Option<f64> {
    let p = p_fse(terms, alpha);
    let target = terms.target();
    if p >= target {
        Some(1.0)
    } else if p > 0.0 {
        Some((target / p).sqrt())
    } else {
        None
    }
}

fn within_cap(terms: &SolverTerms, alpha: f64, g: f64, cap: f64) -> bool {
    g * g * terms.delta_u(alpha) <= cap * (1.0 + CAP_TOL)
}

/// Optimal gain at a fixed `alpha`, if `alpha` admits a feasible point.
pub fn optimal_gain(terms: &SolverTerms, alpha: f64, delta_u_db: f64) -> Option<f64> {
    let cap = terms.noise_cap(delta_u_db);
    min_gain_for_c1(terms, alpha).filter(|&g| within_cap(terms, alpha, g, cap))
}

/// Check C1-C4 at relative tolerance `tol`.
pub fn satisfies_constraints(terms: &SolverTerms, alpha: f64, g: f64, delta_u_db: f64, tol: f64) -> bool {
    let c1 = g * g * p_fse(terms, alpha) >= terms.target() * (1.0 - tol);
    let c2 = g * g * terms.delta_u(alpha) <= terms.noise_cap(delta_u_db) * (1.0 + tol);
    let c3 = (0.0..=1.0).contains(&alpha);
    let c4 = g >= 1.0 - tol;
    c1 && c2 && c3 && c4
}

/// Closed-form boundary candidates: `alpha = 1` then `alpha = 0`, each with
/// the unit-gain case (i) before the boosted-gain case (ii).
pub fn lemma_boundary(terms: &SolverTerms, delta_u_db: f64) -> Option<BandSolution> {
    let cap = terms.noise_cap(delta_u_db);
    let target = terms.target();
    for (alpha, d, du) in [
        (1.0, terms.d_mu_r, terms.delta_u_mu_r),
        (0.0, terms.d_mu0, terms.delta_u_mu0),
    ] {
        if d >= target && du <= cap * (1.0 + CAP_TOL) {
            return Some(BandSolution::new(terms, alpha, 1.0, Status::Feasible));
        }
        if d > 0.0 && d < target {
            let g2 = target / d;
            if g2 * du <= cap * (1.0 + CAP_TOL) {
                return Some(BandSolution::new(terms, alpha, g2.sqrt(), Status::Feasible));
            }
        }
    }
    None
}

/// Which part of the constraint set is empty when no grid point is feasible.
fn classify_infeasible(terms: &SolverTerms, params: &SolverParams) -> Status {
    let cap = terms.noise_cap(params.delta_u_db);
    let target = terms.target();
    let mut c2_empty = true;
    let mut c1_unreachable = true;
    for a in alpha_grid_desc(params.grid_n) {
        let u = terms.delta_u(a);
        if u <= cap * (1.0 + CAP_TOL) {
            c2_empty = false;
        }
        let p = p_fse(terms, a);
        let best = if u > 0.0 {
            p * (cap / u)
        } else if p > 0.0 {
            f64::INFINITY
        } else {
            p.min(0.0)
        };
        if best >= target && (p > 0.0 || target <= 0.0) {
            c1_unreachable = false;
        }
    }
    match (c1_unreachable, c2_empty) {
        (true, false) => Status::C1Infeasible,
        (false, true) => Status::C2Infeasible,
        // both sets empty, or each non-empty but disjoint
        _ => Status::BothInfeasible,
    }
}

pub fn grid_solve(terms: &SolverTerms, params: &SolverParams) -> BandSolution {
    let mut best: Option<(f64, f64, f64)> = None;
    for a in alpha_grid_desc(params.grid_n) {
        if let Some(g) = optimal_gain(terms, a, params.delta_u_db) {
            let pen = penalty(a, g);
            if best.is_none_or(|(_, _, b)| beats(pen, b)) {
                best = Some((a, g, pen));
            }
        }
    }
    match best {
        Some((a, g, _)) => BandSolution::new(terms, a, g, Status::Feasible),
        None => match classify_infeasible(terms, params) {
            Status::C1Infeasible => fallback_c1(terms, params),
            Status::C2Infeasible => fallback_c2(terms, params.grid_n),
            _ => fallback_both(terms, params.delta_u_db, params.grid_n),
        },
    }
}

/// SNR target unreachable: take the beamformer with the best far-end SNR and
/// the smallest gain that keeps the near-end noise from eroding that SNR by
/// more than `Delta_N` dB, then clip to `[1, C2 cap]`. When the C2 cap is
/// below one the cap wins and the band is reported as doubly infeasible.
pub fn fallback_c1(terms: &SolverTerms, params: &SolverParams) -> BandSolution {
    let alpha = grid_argmin(params.grid_n, |a| -terms.fe_snr(a));
    let du = terms.delta_u(alpha);
    let theta = 10f64.powf(-params.delta_n_db / 10.0);
    let g_raw = if du > 0.0 {
        (theta * terms.sigma_n2 / ((1.0 - theta) * du)).sqrt()
    } else {
        1.0
    };
    let g_cap = terms.gain_cap(alpha, params.delta_u_db);
    if g_cap < 1.0 {
        BandSolution::new(terms, alpha, g_cap, Status::BothInfeasible)
    } else {
        BandSolution::new(terms, alpha, g_raw.clamp(1.0, g_cap), Status::C1Infeasible)
    }
}

/// Noise cap unreachable even at unit gain: keep `g = 1` and steer the
/// beamformer so the listener SNR lands as close to the target as possible.
pub fn fallback_c2(terms: &SolverTerms, grid_n: usize) -> BandSolution {
    let alpha = grid_argmin(grid_n, |a| (xi(terms, a, 1.0) - terms.i_xi).abs());
    BandSolution::new(terms, alpha, 1.0, Status::C2Infeasible)
}

/// No point meets both C1 and C2: sit on the C2 boundary (the SNR-maximizing
/// gain under the cap) and pick the `alpha` whose SNR there is closest to the
/// target. The gain may fall below one.
pub fn fallback_both(terms: &SolverTerms, delta_u_db: f64, grid_n: usize) -> BandSolution {
    let gain = |a: f64| {
        let cap = terms.gain_cap(a, delta_u_db);
        if cap.is_finite() {
            cap
        } else {
            1.0
        }
    };
    let alpha = grid_argmin(grid_n, |a| (xi(terms, a, gain(a)) - terms.i_xi).abs());
    BandSolution::new(terms, alpha, gain(alpha), Status::BothInfeasible)
}

pub fn solve_band(terms: &SolverTerms, params: &SolverParams) -> BandSolution {
    let grid = grid_solve(terms, params);
    match lemma_boundary(terms, params.delta_u_db) {
        Some(l) if grid.status != Status::Feasible || l.penalty <= grid.penalty => l,
        _ => grid,
    }
}

/// Dense band-power evaluation of a blended beamformer, used to cross-check
/// the quadratic expansion.
pub fn direct_noise_power(
    stats: &SpectralStats,
    bset: &BeamformerSet,
    fb: &Filterbank,
    j: usize,
    alpha: f64,
) -> f64 {
    fb.band_bins[j]
        .iter()
        .map(|&k| {
            let w = &bset.w_mu_r[k] * Complex64::new(alpha, 0.0)
                + &bset.w_mu0[k] * Complex64::new(1.0 - alpha, 0.0);
            fb.omega[j][k] * hermitian_power(&w, &stats.c_u[k])
        })
        .sum()
}
