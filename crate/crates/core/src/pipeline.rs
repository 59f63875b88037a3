//! End-to-end enhancement methods and recombination of band solutions.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamform::{apply, blend, BeamformerSet};
use crate::filterbank::{BandTargets, Filterbank};
use crate::linalg::CVector;
use crate::metrics::EvalReport;
use crate::scene::{SceneSignals, SpectralStats};
use crate::solver::{
    self, band_terms, solve_band, BandSolution, SolverParams, SolverTerms, Status, AUDIT_TOL,
};
use crate::stft::{synthesize, FrameParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Joint,
    #[serde(rename = "blind")]
    BlindConcat,
    Unprocessed,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Joint, Method::BlindConcat, Method::Unprocessed];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Joint => "joint",
            Method::BlindConcat => "blind",
            Method::Unprocessed => "unprocessed",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "joint" => Ok(Method::Joint),
            "blind" | "blind_concat" => Ok(Method::BlindConcat),
            "unprocessed" => Ok(Method::Unprocessed),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Solver limits, optionally overridden band by band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandLimits {
    pub base: SolverParams,
    pub delta_u_db_bands: Option<Vec<f64>>,
    pub delta_n_db_bands: Option<Vec<f64>>,
}

impl BandLimits {
    pub fn uniform(base: SolverParams) -> Self {
        Self {
            base,
            delta_u_db_bands: None,
            delta_n_db_bands: None,
        }
    }

    pub fn band(&self, j: usize) -> SolverParams {
        let mut p = self.base;
        if let Some(v) = &self.delta_u_db_bands {
            p.delta_u_db = v[j];
        }
        if let Some(v) = &self.delta_n_db_bands {
            p.delta_n_db = v[j];
        }
        p
    }

    pub fn validate(&self, bands: usize) -> Result<()> {
        self.base.validate()?;
        for v in [&self.delta_u_db_bands, &self.delta_n_db_bands].into_iter().flatten() {
            if v.len() != bands {
                return Err(Error::Config(format!(
                    "per-band override has {} entries for {bands} bands",
                    v.len()
                )));
            }
        }
        (0..bands).try_for_each(|j| self.band(j).validate())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    /// Far-end output `Y = w^H X`.
    pub y: Vec<f64>,
    /// Listener signal `Z = g Y + N`.
    pub z: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EnhancementResult {
    pub method: Method,
    /// Filter pair the band solutions blend; both are `e_1` for the unprocessed path.
    pub beamformers: BeamformerSet,
    pub w_mp: Vec<CVector>,
    pub g_mp: Vec<f64>,
    pub band_solutions: Vec<BandSolution>,
    pub band_terms: Vec<SolverTerms>,
    pub rendered: Option<Rendered>,
    pub report: Option<EvalReport>,
}

/// Per-bin filter and gain from per-band solutions:
/// `w_k = sum_j eta_jk (alpha_j w_ref + (1 - alpha_j) w_nr)` and `g_k = sum_j eta_jk g_j`.
/// Bins outside every band keep the reference filter at unit gain.
pub fn recombine(bset: &BeamformerSet, fb: &Filterbank, solutions: &[BandSolution]) -> (Vec<CVector>, Vec<f64>) {
    let nbins = bset.num_bins();
    let mut w = Vec::with_capacity(nbins);
    let mut g = Vec::with_capacity(nbins);
    for k in 0..nbins {
        let bands = &fb.bin_bands[k];
        if bands.is_empty() {
            w.push(bset.w_mu_r[k].clone());
            g.push(1.0);
            continue;
        }
        let mut wk = CVector::zeros(bset.w_mu_r[k].len());
        let mut gk = 0.0;
        for &j in bands {
            let eta = fb.eta[j][k];
            wk += blend(&bset.w_mu_r[k], &bset.w_mu0[k], solutions[j].alpha) * Complex64::new(eta, 0.0);
            gk += eta * solutions[j].g;
        }
        w.push(wk);
        g.push(gk);
    }
    (w, g)
}

fn all_terms(stats: &SpectralStats, bset: &BeamformerSet, fb: &Filterbank, targets: &BandTargets) -> Result<Vec<SolverTerms>> {
    (0..fb.num_bands())
        .map(|j| band_terms(stats, bset, fb, j, targets.snr[j]))
        .collect()
}

fn check_inputs(stats: &SpectralStats, bset: &BeamformerSet, fb: &Filterbank, targets: &BandTargets) -> Result<()> {
    if bset.num_bins() != stats.num_bins() || fb.num_bins() != stats.num_bins() {
        return Err(Error::Dimension("statistics, beamformers and filterbank disagree on bins".into()));
    }
    if targets.snr.len() != fb.num_bands() {
        return Err(Error::Dimension("one target per band required".into()));
    }
    Ok(())
}

/// Status describing which of C1/C2 hold at a delivered operating point.
fn audit_status(terms: &SolverTerms, alpha: f64, g: f64, delta_u_db: f64) -> Status {
    let c1 = g * g * solver::p_fse(terms, alpha) >= terms.target() * (1.0 - AUDIT_TOL);
    let c2 = g * g * terms.delta_u(alpha) <= terms.noise_cap(delta_u_db) * (1.0 + AUDIT_TOL);
    match (c1, c2) {
        (true, true) => Status::Feasible,
        (false, true) => Status::C1Infeasible,
        (true, false) => Status::C2Infeasible,
        (false, false) => Status::BothInfeasible,
    }
}

pub fn run_joint(
    stats: &SpectralStats,
    bset: &BeamformerSet,
    fb: &Filterbank,
    targets: &BandTargets,
    limits: &BandLimits,
) -> Result<EnhancementResult> {
    check_inputs(stats, bset, fb, targets)?;
    limits.validate(fb.num_bands())?;
    let terms = all_terms(stats, bset, fb, targets)?;
    let solutions: Vec<BandSolution> = terms
        .iter()
        .enumerate()
        .map(|(j, t)| solve_band(t, &limits.band(j)))
        .collect();
    let (w_mp, g_mp) = recombine(bset, fb, &solutions);
    Ok(EnhancementResult {
        method: Method::Joint,
        beamformers: bset.clone(),
        w_mp,
        g_mp,
        band_solutions: solutions,
        band_terms: terms,
        rendered: None,
        report: None,
    })
}

/// Far-end stage of the concatenated baseline: the smallest departure from
/// the reference filter whose clean-speech-to-MSE ratio meets the target,
/// ignoring the near end entirely.
fn blind_fse_alpha(stats: &SpectralStats, bset: &BeamformerSet, fb: &Filterbank, j: usize, terms: &SolverTerms, grid_n: usize) -> f64 {
    let mut clean = 0.0;
    let mut dist = [0.0; 3];
    for &k in &fb.band_bins[j] {
        let om = fb.omega[j][k];
        let s2 = stats.sigma_s2[k];
        let one = Complex64::new(1.0, 0.0);
        let er = one - bset.w_mu_r[k].dotc(&stats.d[k]);
        let e0 = one - bset.w_mu0[k].dotc(&stats.d[k]);
        clean += om * s2;
        dist[0] += om * s2 * er.norm_sqr();
        dist[1] += om * s2 * e0.norm_sqr();
        dist[2] += om * s2 * 2.0 * (e0 * er.conj()).re;
    }
    let mse = |a: f64| {
        a * a * (dist[0] + terms.delta_u_mu_r)
            + (1.0 - a) * (1.0 - a) * (dist[1] + terms.delta_u_mu0)
            + a * (1.0 - a) * (dist[2] + terms.delta_u_cross)
    };
    let last = (grid_n - 1) as f64;
    let grid = (0..grid_n).rev().map(|i| i as f64 / last);
    if let Some(a) = grid.clone().find(|&a| clean >= terms.i_xi * mse(a)) {
        return a;
    }
    let mut best = (1.0, f64::NEG_INFINITY);
    for a in grid {
        let e = mse(a);
        let ratio = if e > 0.0 { clean / e } else { f64::INFINITY };
        if ratio > best.1 * (1.0 + 1e-9) || best.1 == f64::NEG_INFINITY {
            best = (a, ratio);
        }
    }
    best.0
}

/// Concatenation of a far-end minimum-processing beamformer and a near-end
/// minimum-processing gain that each see only their own side. The gain stage
/// treats the whole beamformer output (speech plus residual far-end noise) as
/// speech and has no noise cap.
pub fn run_blind_concat(
    stats: &SpectralStats,
    bset: &BeamformerSet,
    fb: &Filterbank,
    targets: &BandTargets,
    limits: &BandLimits,
) -> Result<EnhancementResult> {
    check_inputs(stats, bset, fb, targets)?;
    limits.validate(fb.num_bands())?;
    let terms = all_terms(stats, bset, fb, targets)?;
    let solutions: Vec<BandSolution> = terms
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let alpha = blind_fse_alpha(stats, bset, fb, j, t, limits.base.grid_n);
            let received = t.delta_s(alpha) + t.delta_u(alpha);
            let g = nle_gain(received, t.sigma_n2, t.i_xi);
            let status = audit_status(t, alpha, g, limits.band(j).delta_u_db);
            BandSolution::new(t, alpha, g, status)
        })
        .collect();
    let (w_mp, g_mp) = recombine(bset, fb, &solutions);
    Ok(EnhancementResult {
        method: Method::BlindConcat,
        beamformers: bset.clone(),
        w_mp,
        g_mp,
        band_solutions: solutions,
        band_terms: terms,
        rendered: None,
        report: None,
    })
}

/// Near-end stage of the baseline: `g^2 = max(1, sigma_N^2 I_xi / received)`.
pub fn nle_gain(received: f64, sigma_n2: f64, i_xi: f64) -> f64 {
    if received > 0.0 {
        (sigma_n2 * i_xi / received).max(1.0).sqrt()
    } else {
        1.0
    }
}

/// Reference-microphone passthrough at unit gain.
pub fn run_unprocessed(
    stats: &SpectralStats,
    fb: &Filterbank,
    targets: &BandTargets,
    limits: &BandLimits,
) -> Result<EnhancementResult> {
    let bset = BeamformerSet::passthrough(stats);
    check_inputs(stats, &bset, fb, targets)?;
    let terms = all_terms(stats, &bset, fb, targets)?;
    let solutions: Vec<BandSolution> = terms
        .iter()
        .enumerate()
        .map(|(j, t)| BandSolution::new(t, 1.0, 1.0, audit_status(t, 1.0, 1.0, limits.band(j).delta_u_db)))
        .collect();
    let (w_mp, g_mp) = recombine(&bset, fb, &solutions);
    Ok(EnhancementResult {
        method: Method::Unprocessed,
        beamformers: bset,
        w_mp,
        g_mp,
        band_solutions: solutions,
        band_terms: terms,
        rendered: None,
        report: None,
    })
}

pub fn run_method(
    method: Method,
    stats: &SpectralStats,
    bset: &BeamformerSet,
    fb: &Filterbank,
    targets: &BandTargets,
    limits: &BandLimits,
) -> Result<EnhancementResult> {
    match method {
        Method::Joint => run_joint(stats, bset, fb, targets, limits),
        Method::BlindConcat => run_blind_concat(stats, bset, fb, targets, limits),
        Method::Unprocessed => run_unprocessed(stats, fb, targets, limits),
    }
}

/// `Y = synth(w^H X)` and `Z = synth(g w^H X) + N`, trimmed to a common length.
pub fn render(params: &FrameParams, signals: &SceneSignals, result: &EnhancementResult) -> Result<Rendered> {
    let ones = vec![1.0; result.g_mp.len()];
    let y = synthesize(&apply(&signals.noisy, &result.w_mp, &ones)?, params)?.remove(0);
    let gy = synthesize(&apply(&signals.noisy, &result.w_mp, &result.g_mp)?, params)?.remove(0);
    let n = &signals.ne_noise_time;
    let len = y.len().min(n.len());
    let z = gy[..len].iter().zip(&n[..len]).map(|(a, b)| a + b).collect();
    let mut y = y;
    y.truncate(len);
    Ok(Rendered { y, z })
}
