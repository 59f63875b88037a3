//! WAV, CSV and JSON artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::filterbank::Filterbank;
use crate::pipeline::EnhancementResult;
use crate::solver::{p_fse, Status};
use crate::{Error, Result};

/// Writes mono 32-bit float samples.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample(s as f32)?;
    }
    w.finalize()?;
    Ok(())
}

/// Reads any PCM or float WAV into per-channel samples; integers are scaled to [-1, 1).
pub fn read_wav(path: &Path) -> Result<(Vec<Vec<f64>>, u32)> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    let ch = spec.channels as usize;
    let flat: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => r.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let mut out = vec![Vec::with_capacity(flat.len() / ch.max(1)); ch];
    for (i, v) in flat.into_iter().enumerate() {
        out[i % ch].push(v);
    }
    Ok((out, spec.sample_rate))
}

/// One row of the per-band solution table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub j: usize,
    pub center_hz: f64,
    pub alpha: f64,
    pub g: f64,
    pub status: Status,
    pub xi: f64,
    pub target_xi: f64,
    pub penalty: f64,
    /// `g^2 p_FSE(alpha)`, left-hand side of C1.
    pub c1_lhs: f64,
    /// `sigma_N^2 I_xi`, right-hand side of C1.
    pub c1_rhs: f64,
    /// `g^2 delta_U(alpha)`, left-hand side of C2.
    pub c2_lhs: f64,
    /// `sigma_N^2 10^(Delta_U / 10)`, right-hand side of C2.
    pub c2_rhs: f64,
}

pub fn band_rows(result: &EnhancementResult, fb: &Filterbank, delta_u_db: impl Fn(usize) -> f64) -> Vec<BandRow> {
    result
        .band_solutions
        .iter()
        .zip(&result.band_terms)
        .enumerate()
        .map(|(j, (s, t))| {
            let g2 = s.g * s.g;
            BandRow {
                j,
                center_hz: fb.centers[j],
                alpha: s.alpha,
                g: s.g,
                status: s.status,
                xi: s.xi,
                target_xi: t.i_xi,
                penalty: s.penalty,
                c1_lhs: g2 * p_fse(t, s.alpha),
                c1_rhs: t.target(),
                c2_lhs: g2 * t.delta_u(s.alpha),
                c2_rhs: t.noise_cap(delta_u_db(j)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub k: usize,
    pub freq_hz: f64,
    pub w_norm: f64,
    pub g: f64,
}

pub fn bin_rows(result: &EnhancementResult, bin_freq: impl Fn(usize) -> f64) -> Vec<BinRow> {
    result
        .w_mp
        .iter()
        .zip(&result.g_mp)
        .enumerate()
        .map(|(k, (w, &g))| BinRow {
            k,
            freq_hz: bin_freq(k),
            w_norm: w.norm(),
            g,
        })
        .collect()
}

/// Summary row of the method-by-scenario table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub point: String,
    pub method: String,
    pub asii: f64,
    pub broadband_out_snr_db: f64,
    pub max_noise_boost_db: f64,
    pub feasible_bands: usize,
    pub total_penalty: f64,
}

/// Per-band metric row (method x scenario x band).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMetricRow {
    pub point: String,
    pub method: String,
    pub j: usize,
    pub xi: f64,
    pub fe_snr: f64,
    pub status: Status,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(Error::Io)
}
