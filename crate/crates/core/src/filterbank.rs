//! Critical bands equispaced on the ERB-rate scale.
//!
//! Each band `j` weights bin `k` with a raised-cosine (cos^2) bump on the
//! ERB-rate axis that reaches zero at the neighbouring band centres, so the
//! weights of adjacent bands sum to one between the first and last centre.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::stft::FrameParams;
use crate::{Error, Result};

/// Glasberg & Moore ERB-rate in ERB units.
pub fn erb_rate(f: f64) -> Result<f64> {
    if f < 0.0 || f.is_nan() {
        return Err(Error::NegativeFrequency(f));
    }
    Ok(21.4 * (1.0 + 0.00437 * f).log10())
}

/// Inverse of [`erb_rate`].
pub fn erb_rate_inv(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) / 0.00437
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Filterbank {
    pub centers: Vec<f64>,
    /// `omega[j][k]`, dense over all one-sided bins.
    pub omega: Vec<Vec<f64>>,
    /// Bins with non-zero weight in band `j`.
    pub band_bins: Vec<Vec<usize>>,
    /// Bands containing bin `k`.
    pub bin_bands: Vec<Vec<usize>>,
    /// `eta[j][k] = omega[j][k] / sum_{j' in F_k} omega[j'][k]`.
    pub eta: Vec<Vec<f64>>,
    /// Band importance, sums to one.
    pub gamma: Vec<f64>,
}

impl Filterbank {
    pub fn num_bands(&self) -> usize {
        self.centers.len()
    }

    pub fn num_bins(&self) -> usize {
        self.bin_bands.len()
    }

    /// Replace the band importance with `table` (pairs of centre Hz and
    /// importance), linearly interpolated at the band centres and normalized.
    pub fn with_importance(mut self, table: &[(f64, f64)]) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::Config("empty importance table".into()));
        }
        let mut table = table.to_vec();
        table.sort_by(|a, b| a.0.total_cmp(&b.0));
        let raw: Vec<f64> = self
            .centers
            .iter()
            .map(|&f| interp(&table, f))
            .collect();
        if raw.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Config("importance values must be finite and >= 0".into()));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::Config("importance table sums to zero".into()));
        }
        self.gamma = raw.into_iter().map(|v| v / total).collect();
        Ok(self)
    }
}

fn interp(table: &[(f64, f64)], f: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if f <= first.0 {
        return first.1;
    }
    if f >= last.0 {
        return last.1;
    }
    let i = table.partition_point(|p| p.0 <= f);
    let (f0, v0) = table[i - 1];
    let (f1, v1) = table[i];
    v0 + (v1 - v0) * (f - f0) / (f1 - f0)
}

/// Read a two-column `(centre Hz, importance)` text table. Blank lines and
/// lines starting with `#` are skipped; columns may be separated by commas or
/// whitespace.
pub fn load_importance_table(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("{}:{}: bad number {s:?}", path.display(), lineno + 1)))
        };
        if cols.len() != 2 {
            return Err(Error::Config(format!(
                "{}:{}: expected two columns",
                path.display(),
                lineno + 1
            )));
        }
        out.push((parse(cols[0])?, parse(cols[1])?));
    }
    Ok(out)
}

pub fn build_filterbank(params: &FrameParams, bands: usize, f_lo: f64, f_hi: f64) -> Result<Filterbank> {
    if bands < 2 {
        return Err(Error::Config(format!("need at least 2 bands, got {bands}")));
    }
    if !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= params.nyquist()) {
        return Err(Error::Config(format!(
            "band edges must satisfy 0 <= f_lo < f_hi <= {} Hz",
            params.nyquist()
        )));
    }
    let e_lo = erb_rate(f_lo)?;
    let e_hi = erb_rate(f_hi)?;
    let spacing = (e_hi - e_lo) / (bands - 1) as f64;
    let centers_erb: Vec<f64> = (0..bands).map(|j| e_lo + spacing * j as f64).collect();
    let nbins = params.bins();
    let bin_erb: Vec<f64> = (0..nbins)
        .map(|k| erb_rate(params.bin_freq(k)))
        .collect::<Result<_>>()?;

    let mut omega = vec![vec![0.0; nbins]; bands];
    let mut band_bins = vec![Vec::new(); bands];
    let mut bin_bands = vec![Vec::new(); nbins];
    for (j, &ej) in centers_erb.iter().enumerate() {
        for (k, &ek) in bin_erb.iter().enumerate() {
            let x = (ek - ej) / spacing;
            if x.abs() < 1.0 {
                let w = (FRAC_PI_2 * x).cos().powi(2);
                if w > 0.0 {
                    omega[j][k] = w;
                    band_bins[j].push(k);
                    bin_bands[k].push(j);
                }
            }
        }
        if band_bins[j].is_empty() {
            return Err(Error::EmptyBand(j));
        }
    }

    let mut eta = vec![vec![0.0; nbins]; bands];
    for (k, js) in bin_bands.iter().enumerate() {
        let total: f64 = js.iter().map(|&j| omega[j][k]).sum();
        for &j in js {
            eta[j][k] = omega[j][k] / total;
        }
    }

    Ok(Filterbank {
        centers: centers_erb.iter().map(|&e| erb_rate_inv(e)).collect(),
        omega,
        band_bins,
        bin_bands,
        eta,
        gamma: vec![1.0 / bands as f64; bands],
    })
}

/// Per-band intelligibility targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTargets {
    /// ASII band target `I_j`.
    pub intelligibility: Vec<f64>,
    /// Equivalent target SNR `I_j / (1 - I_j)`.
    pub snr: Vec<f64>,
}

/// Spread a total ASII target uniformly: `I_j = A*` in every band, so
/// `sum_j gamma_j I_j = A*`.
pub fn allocate_targets(a_star: f64, fb: &Filterbank) -> Result<BandTargets> {
    if !(a_star < 1.0) {
        return Err(Error::TargetUnbounded(a_star));
    }
    if a_star < 0.0 {
        return Err(Error::Config(format!("A* = {a_star} must be >= 0")));
    }
    let j = fb.num_bands();
    Ok(BandTargets {
        intelligibility: vec![a_star; j],
        snr: vec![a_star / (1.0 - a_star); j],
    })
}
