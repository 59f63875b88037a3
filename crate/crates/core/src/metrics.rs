//! Approximated speech intelligibility index and SNR bookkeeping.

use serde::{Deserialize, Serialize};

use crate::filterbank::{BandTargets, Filterbank};
use crate::linalg::hermitian_power;
use crate::pipeline::{EnhancementResult, Method};
use crate::scene::SpectralStats;
use crate::solver::{band_terms, xi, Status};
use crate::stft::one_sided_weight;
use crate::{Error, Result};

/// `sum_j gamma_j xi_j / (1 + xi_j)`. An infinite band SNR contributes its full weight.
pub fn asii(xi: &[f64], gamma: &[f64]) -> Result<f64> {
    if xi.len() != gamma.len() {
        return Err(Error::Dimension(format!("{} SNRs for {} bands", xi.len(), gamma.len())));
    }
    let mut total = 0.0;
    for (&x, &g) in xi.iter().zip(gamma) {
        if !(x >= 0.0) {
            return Err(Error::NegativeSnr(x));
        }
        total += g * if x.is_infinite() { 1.0 } else { x / (1.0 + x) };
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub xi: Vec<f64>,
    pub asii: f64,
    /// Far-end SNR `delta_S / delta_U` of the delivered filter, per band.
    pub fe_snr: Vec<f64>,
    pub broadband_out_snr_db: f64,
    pub per_band_status: Vec<Status>,
    /// Worst band of `g^2 delta_U / sigma_N^2` in dB.
    pub max_noise_boost_db: f64,
}

/// Model-based evaluation of a result against the true statistics.
pub fn evaluate(
    stats: &SpectralStats,
    result: &EnhancementResult,
    fb: &Filterbank,
    targets: &BandTargets,
) -> Result<EvalReport> {
    let mut xis = Vec::with_capacity(fb.num_bands());
    let mut fe = Vec::with_capacity(fb.num_bands());
    let mut boost = f64::NEG_INFINITY;
    for (j, s) in result.band_solutions.iter().enumerate() {
        let t = band_terms(stats, &result.beamformers, fb, j, targets.snr[j])?;
        xis.push(xi(&t, s.alpha, s.g));
        fe.push(t.fe_snr(s.alpha));
        if t.sigma_n2 > 0.0 {
            boost = boost.max(10.0 * (s.g * s.g * t.delta_u(s.alpha) / t.sigma_n2).log10());
        }
    }
    Ok(EvalReport {
        method: result.method,
        asii: asii(&xis, &fb.gamma)?,
        xi: xis,
        fe_snr: fe,
        broadband_out_snr_db: broadband_snr_db(stats, &result.w_mp, &result.g_mp),
        per_band_status: result.band_solutions.iter().map(|s| s.status).collect(),
        max_noise_boost_db: boost,
    })
}

/// Speech to (far-end plus near-end) noise ratio of `Z` over all bins, in dB.
pub fn broadband_snr_db(stats: &SpectralStats, w: &[crate::linalg::CVector], g: &[f64]) -> f64 {
    let bins = stats.num_bins();
    let (mut s, mut n) = (0.0, 0.0);
    for k in 0..bins {
        let c = one_sided_weight(k, bins);
        let g2 = g[k] * g[k];
        s += c * g2 * stats.sigma_s2[k] * w[k].dotc(&stats.d[k]).norm_sqr();
        n += c * (g2 * hermitian_power(&w[k], &stats.c_u[k]) + stats.sigma_n2[k]);
    }
    10.0 * (s / n).log10()
}

/// Empirical power ratio in dB between two equally long signals.
pub fn power_ratio_db(signal: &[f64], noise: &[f64]) -> f64 {
    let ps: f64 = signal.iter().map(|v| v * v).sum();
    let pn: f64 = noise.iter().map(|v| v * v).sum();
    10.0 * (ps / pn).log10()
}
