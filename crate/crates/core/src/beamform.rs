//! Speech-distortion-weighted multichannel Wiener filters and their blend.

use nalgebra::Cholesky;
use num_complex::Complex64;

use crate::linalg::{selector, trace_re, CVector};
use crate::scene::SpectralStats;
use crate::stft::Spectrogram;
use crate::{Error, Result};

/// Relative diagonal loading applied to `C_U` before factorization.
pub const DIAGONAL_LOADING: f64 = 1e-10;

/// Reference and noise-reducing filters at every bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub w_mu_r: Vec<CVector>,
    pub w_mu0: Vec<CVector>,
    pub mu_r: f64,
    pub mu_0: f64,
}

impl BeamformerSet {
    pub fn build(stats: &SpectralStats, mu_r: f64, mu_0: f64) -> Result<Self> {
        let w_mu_r = (0..stats.num_bins())
            .map(|k| mwf(stats, mu_r, k))
            .collect::<Result<_>>()?;
        let w_mu0 = (0..stats.num_bins())
            .map(|k| mwf(stats, mu_0, k))
            .collect::<Result<_>>()?;
        Ok(Self {
            w_mu_r,
            w_mu0,
            mu_r,
            mu_0,
        })
    }

    /// Both filters equal to the reference-microphone selector `e_1`.
    pub fn passthrough(stats: &SpectralStats) -> Self {
        let e1 = selector(stats.num_mics(), 0);
        let w = vec![e1; stats.num_bins()];
        Self {
            w_mu_r: w.clone(),
            w_mu0: w,
            mu_r: 0.0,
            mu_0: 0.0,
        }
    }

    pub fn num_bins(&self) -> usize {
        self.w_mu_r.len()
    }
}

/// `w = (sigma_S^2 d d^H + mu C_U)^{-1} sigma_S^2 d`, evaluated through the
/// matrix inversion lemma as `sigma_S^2 C_U^{-1} d / (mu + sigma_S^2 d^H C_U^{-1} d)`
/// so that `mu = 0` (rank-one speech covariance) is well defined.
pub fn mwf(stats: &SpectralStats, mu: f64, k: usize) -> Result<CVector> {
    let d = &stats.d[k];
    let s2 = stats.sigma_s2[k];
    let m = d.len();
    if s2 == 0.0 {
        return Ok(CVector::zeros(m));
    }
    let cu = &stats.c_u[k];
    let load = DIAGONAL_LOADING * trace_re(cu) / m as f64;
    let mut loaded = cu.clone();
    for i in 0..m {
        loaded[(i, i)] += Complex64::new(load, 0.0);
    }
    match Cholesky::new(loaded) {
        Some(chol) => {
            let v = chol.solve(d);
            let denom = Complex64::new(mu, 0.0) + d.dotc(&v) * s2;
            Ok(v * (Complex64::new(s2, 0.0) / denom))
        }
        None if mu > 0.0 && cu.iter().all(|z| *z == Complex64::new(0.0, 0.0)) => {
            // noise-free limit of the loaded form
            Ok(d / Complex64::new(d.norm_squared(), 0.0))
        }
        None => Err(Error::NoiseCovarianceSingular(k)),
    }
}

/// `alpha w_ref + (1 - alpha) w_nr` at bin `k`.
pub fn combine(bset: &BeamformerSet, alpha: f64, k: usize) -> Result<CVector> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    Ok(blend(&bset.w_mu_r[k], &bset.w_mu0[k], alpha))
}

pub(crate) fn blend(w_ref: &CVector, w_nr: &CVector, alpha: f64) -> CVector {
    w_ref * Complex64::new(alpha, 0.0) + w_nr * Complex64::new(1.0 - alpha, 0.0)
}

/// Single-channel output `g_k w_k^H x_k` for every frame.
pub fn apply(spec: &Spectrogram, w: &[CVector], g: &[f64]) -> Result<Spectrogram> {
    if w.len() != spec.bins || g.len() != spec.bins {
        return Err(Error::Dimension(format!(
            "{} bins in spectrogram, {} filters, {} gains",
            spec.bins,
            w.len(),
            g.len()
        )));
    }
    if w.iter().any(|wk| wk.len() != spec.channels) {
        return Err(Error::Dimension("filter length differs from channel count".into()));
    }
    let mut out = Spectrogram::zeros(1, spec.frames, spec.bins);
    for f in 0..spec.frames {
        for k in 0..spec.bins {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..spec.channels {
                acc += w[k][c].conj() * spec.get(c, f, k);
            }
            out.set(0, f, k, acc * g[k]);
        }
    }
    Ok(out)
}
