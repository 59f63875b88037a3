//! Far-end/near-end scene synthesis and second-order statistics.
//!
//! The mixture is built bin by bin in the STFT domain, `X_k = d_k S_k + U_k`,
//! so the narrowband model holds exactly for every frame. Far-end noise comes
//! from point sources with anechoic transfer functions plus spatially white
//! microphone self-noise. Noise covariances returned by [`synthesize_scene`]
//! are the exact expected STFT bin powers of the generating processes; the
//! speech level is the long-term average of the realized source spectrum.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{outer, CMatrix, CVector};
use crate::stft::{self, analyze, long_term_psd, synthesize, FrameParams, Spectrogram};
use crate::{Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;

const SPEECH_CORNER_HZ: f64 = 500.0;
const CAR_CORNER_HZ: f64 = 200.0;
const BABBLE_TALKERS: usize = 8;
const BABBLE_AM_HZ: f64 = 4.0;
const BABBLE_AM_DEPTH: f64 = 0.5;

pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    SpeechShaped,
    BabbleLike,
    CarLike,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(Self::White),
            "speech_shaped" => Ok(Self::SpeechShaped),
            "babble_like" => Ok(Self::BabbleLike),
            "car_like" => Ok(Self::CarLike),
            other => Err(Error::Config(format!("unknown noise kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub room_dims: Point,
    pub talker_pos: Point,
    pub noise_positions: Vec<Point>,
    pub mic_positions: Vec<Point>,
    pub mic_selfnoise_snr_db: f64,
    pub fe_snr_db: f64,
    pub ne_snr_db: f64,
    pub fe_noise_kind: NoiseKind,
    pub ne_noise_kind: NoiseKind,
    pub duration: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            room_dims: [3.0, 4.0, 3.0],
            talker_pos: [1.50, 3.00, 1.0],
            noise_positions: vec![[0.50, 1.00, 1.0], [0.75, 3.00, 1.0], [3.00, 1.60, 1.0]],
            mic_positions: vec![[1.50, 2.00, 1.0], [1.50, 2.02, 1.0]],
            mic_selfnoise_snr_db: 60.0,
            fe_snr_db: 0.0,
            ne_snr_db: 0.0,
            fe_noise_kind: NoiseKind::BabbleLike,
            ne_noise_kind: NoiseKind::CarLike,
            duration: 10.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    /// SNRs may be `+inf` to switch the corresponding noise off.
    pub fn validate(&self) -> Result<()> {
        if self.mic_positions.is_empty() {
            return Err(Error::Config("at least one microphone is required".into()));
        }
        let all = self
            .mic_positions
            .iter()
            .chain(self.noise_positions.iter())
            .chain(std::iter::once(&self.talker_pos));
        if all.clone().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("positions must be finite".into()));
        }
        for (i, a) in self.mic_positions.iter().enumerate() {
            for b in &self.mic_positions[i + 1..] {
                if distance(a, b) == 0.0 {
                    return Err(Error::Config("microphone positions must be distinct".into()));
                }
            }
        }
        for (name, v) in [
            ("mic_selfnoise_snr_db", self.mic_selfnoise_snr_db),
            ("fe_snr_db", self.fe_snr_db),
            ("ne_snr_db", self.ne_snr_db),
        ] {
            if v.is_nan() || v == f64::NEG_INFINITY {
                return Err(Error::Config(format!("{name} must be a number or +inf")));
            }
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config("duration must be positive".into()));
        }
        Ok(())
    }
}

/// Second-order statistics of the signal model at every one-sided bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralStats {
    pub sigma_s2: Vec<f64>,
    pub d: Vec<CVector>,
    pub c_u: Vec<CMatrix>,
    pub sigma_n2: Vec<f64>,
}

impl SpectralStats {
    pub fn num_bins(&self) -> usize {
        self.sigma_s2.len()
    }

    pub fn num_mics(&self) -> usize {
        self.d.first().map_or(0, |d| d.len())
    }

    /// Speech covariance `sigma_S^2 d d^H`.
    pub fn c_s(&self, k: usize) -> CMatrix {
        outer(&self.d[k], &self.d[k]) * Complex64::new(self.sigma_s2[k], 0.0)
    }
}

fn distance(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Anechoic direct-path response `e^{-i 2 pi f r / c} / (4 pi r)`.
pub fn transfer_function(src: &Point, mic: &Point, freq: f64, c: f64) -> Result<Complex64> {
    let r = distance(src, mic);
    if r == 0.0 {
        return Err(Error::ZeroDistance);
    }
    let phase = -2.0 * PI * freq * r / c;
    Ok(Complex64::from_polar(1.0 / (4.0 * PI * r), phase))
}

/// Transfer functions to all microphones relative to the reference
/// microphone, so `d[0] = 1`. The source signal is then the talker as heard at
/// microphone 1.
pub fn steering_vector(src: &Point, mics: &[Point], freq: f64) -> Result<CVector> {
    let h: Vec<Complex64> = mics
        .iter()
        .map(|m| transfer_function(src, m, freq, SPEED_OF_SOUND))
        .collect::<Result<_>>()?;
    let r = h[0];
    Ok(CVector::from_iterator(h.len(), h.into_iter().map(|z| z / r)))
}

fn one_pole_coeff(corner_hz: f64, fs: f64) -> f64 {
    (-2.0 * PI * corner_hz / fs).exp()
}

/// Unit-variance stationary first-order lowpass noise.
fn lowpass_noise(rng: &mut ChaCha8Rng, len: usize, corner_hz: f64, fs: f64) -> Vec<f64> {
    let a = one_pole_coeff(corner_hz, fs);
    // y[n] = a y[n-1] + sqrt(1 - a^2) x[n] has unit variance; start in steady state.
    let b = (1.0 - a * a).sqrt();
    let mut y: f64 = rng.sample(StandardNormal);
    (0..len)
        .map(|_| {
            let x: f64 = rng.sample(StandardNormal);
            y = a * y + b * x;
            y
        })
        .collect()
}

fn white_noise(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn babble_noise(rng: &mut ChaCha8Rng, len: usize, fs: f64) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let norm = 1.0 / (BABBLE_TALKERS as f64).sqrt();
    for _ in 0..BABBLE_TALKERS {
        let phase = rng.random_range(0.0..2.0 * PI);
        let talker = lowpass_noise(rng, len, SPEECH_CORNER_HZ, fs);
        for (n, (o, t)) in out.iter_mut().zip(talker).enumerate() {
            let m = 1.0 + BABBLE_AM_DEPTH * (2.0 * PI * BABBLE_AM_HZ * n as f64 / fs + phase).sin();
            *o += norm * m * t;
        }
    }
    out
}

pub fn noise_signal(kind: NoiseKind, rng: &mut ChaCha8Rng, len: usize, fs: f64) -> Vec<f64> {
    match kind {
        NoiseKind::White => white_noise(rng, len),
        NoiseKind::SpeechShaped => lowpass_noise(rng, len, SPEECH_CORNER_HZ, fs),
        NoiseKind::CarLike => lowpass_noise(rng, len, CAR_CORNER_HZ, fs),
        NoiseKind::BabbleLike => babble_noise(rng, len, fs),
    }
}

/// Autocorrelation at lag `l` of the unit-variance process generated for `kind`.
fn autocorrelation(kind: NoiseKind, l: usize, fs: f64) -> f64 {
    match kind {
        NoiseKind::White => (l == 0) as u8 as f64,
        NoiseKind::SpeechShaped => one_pole_coeff(SPEECH_CORNER_HZ, fs).powi(l as i32),
        NoiseKind::CarLike => one_pole_coeff(CAR_CORNER_HZ, fs).powi(l as i32),
        NoiseKind::BabbleLike => {
            let am = 1.0
                + 0.5 * BABBLE_AM_DEPTH * BABBLE_AM_DEPTH * (2.0 * PI * BABBLE_AM_HZ * l as f64 / fs).cos();
            am * one_pole_coeff(SPEECH_CORNER_HZ, fs).powi(l as i32)
        }
    }
}

/// Expected `E|X_k|^2` of the analysis of a unit-variance `kind` process:
/// `sum_l R(l) r_w(l) e^{-i w_k l}` with `r_w` the window autocorrelation.
pub fn expected_bin_power(kind: NoiseKind, params: &FrameParams) -> Vec<f64> {
    let n = params.frame_len;
    let fs = params.sample_rate as f64;
    let w = params.window();
    let lagged: Vec<f64> = (0..n)
        .map(|l| {
            let rw: f64 = (0..n - l).map(|i| w[i] * w[i + l]).sum();
            rw * autocorrelation(kind, l, fs)
        })
        .collect();
    (0..params.bins())
        .map(|k| {
            let omega = 2.0 * PI * k as f64 / params.fft_len as f64;
            lagged[0]
                + 2.0
                    * lagged[1..]
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v * (omega * (i + 1) as f64).cos())
                        .sum::<f64>()
        })
        .collect()
}

/// Harmonic source with drifting pitch, shaped by a -6 dB/octave envelope
/// above 500 Hz. Unit variance.
pub fn speech_signal(rng: &mut ChaCha8Rng, len: usize, fs: f64) -> Vec<f64> {
    let nyq = fs / 2.0;
    let ph1 = rng.random_range(0.0..2.0 * PI);
    let ph2 = rng.random_range(0.0..2.0 * PI);
    let base = rng.random_range(120.0..180.0);
    let max_h = (nyq / 90.0) as usize;
    let offsets: Vec<f64> = (0..max_h).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let breath = white_noise(rng, len);
    let mut fund = 0.0f64;
    let mut exc = Vec::with_capacity(len);
    for (n, b) in breath.into_iter().enumerate() {
        let t = n as f64 / fs;
        let f0 = base
            * 2f64.powf(
                0.35 * (2.0 * PI * 0.23 * t + ph1).sin() + 0.15 * (2.0 * PI * 0.71 * t + ph2).sin(),
            );
        fund = (fund + 2.0 * PI * f0 / fs) % (2.0 * PI);
        let mut v = 0.0;
        for (h, off) in offsets.iter().enumerate() {
            let fh = (h + 1) as f64 * f0;
            if fh >= 0.95 * nyq {
                break;
            }
            // fade the top harmonics in and out as the pitch moves
            let taper = ((0.95 * nyq - fh) / (0.05 * nyq)).min(1.0);
            v += taper * ((h + 1) as f64 * fund + off).cos();
        }
        exc.push(v + 0.1 * b);
    }
    let a = one_pole_coeff(SPEECH_CORNER_HZ, fs);
    let mut y = 0.0;
    let mut out: Vec<f64> = exc
        .into_iter()
        .map(|x| {
            y = a * y + (1.0 - a) * x;
            y
        })
        .collect();
    let var = out.iter().map(|v| v * v).sum::<f64>() / len as f64;
    let s = 1.0 / var.sqrt();
    out.iter_mut().for_each(|v| *v *= s);
    out
}

/// Everything the synthesizer produced, in both domains.
#[derive(Debug, Clone)]
pub struct SceneSignals {
    /// Source speech `S` (1 channel).
    pub source: Spectrogram,
    /// Speech at the microphones, `d S`.
    pub clean: Spectrogram,
    /// Far-end noise `U` at the microphones.
    pub fe_noise: Spectrogram,
    /// `X = d S + U`.
    pub noisy: Spectrogram,
    /// Near-end noise `N` (1 channel).
    pub ne_noise: Spectrogram,
    pub noisy_time: Vec<Vec<f64>>,
    pub ne_noise_time: Vec<f64>,
    pub seed: u64,
}

/// Gain `g >= 0` with `energy(g p + m) = target`, solving the quadratic in `g`.
fn solve_mix_gain(p: &Spectrogram, m: &Spectrogram, c: usize, target: f64, fft_len: usize) -> Result<f64> {
    let a = stft::spectral_energy(p, c, fft_len);
    let e_m = stft::spectral_energy(m, c, fft_len);
    let mut b = 0.0;
    for f in 0..p.frames {
        for k in 0..p.bins {
            b += stft::one_sided_weight(k, p.bins) * (p.get(c, f, k) * m.get(c, f, k).conj()).re;
        }
    }
    b /= fft_len as f64;
    if target < e_m {
        return Err(Error::Config(
            "far-end SNR is above the microphone self-noise limit".into(),
        ));
    }
    if a == 0.0 {
        return Ok(0.0);
    }
    let disc = b * b + a * (target - e_m);
    Ok((-b + disc.sqrt()) / a)
}

pub fn synthesize_scene(cfg: &SceneConfig, params: &FrameParams) -> Result<(SceneSignals, SpectralStats)> {
    cfg.validate()?;
    let fs = params.sample_rate as f64;
    let len = (cfg.duration * fs).round() as usize;
    let m = cfg.mic_positions.len();
    let bins = params.bins();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let s_time = speech_signal(&mut rng, len, fs);
    let source = analyze(&[s_time], params)?;
    let frames = source.frames;

    let d: Vec<CVector> = (0..bins)
        .map(|k| steering_vector(&cfg.talker_pos, &cfg.mic_positions, params.bin_freq(k)))
        .collect::<Result<_>>()?;
    let noise_steer: Vec<Vec<CVector>> = cfg
        .noise_positions
        .iter()
        .map(|p| {
            (0..bins)
                .map(|k| steering_vector(p, &cfg.mic_positions, params.bin_freq(k)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut clean = Spectrogram::zeros(m, frames, bins);
    for c in 0..m {
        for f in 0..frames {
            for k in 0..bins {
                clean.set(c, f, k, d[k][c] * source.get(0, f, k));
            }
        }
    }
    let speech_energy = stft::spectral_energy(&clean, 0, params.fft_len);

    let mut point = Spectrogram::zeros(m, frames, bins);
    for steer in &noise_steer {
        let v = analyze(&[noise_signal(cfg.fe_noise_kind, &mut rng, len, fs)], params)?;
        for c in 0..m {
            for f in 0..frames {
                for k in 0..bins {
                    let z = point.get(c, f, k) + steer[k][c] * v.get(0, f, k);
                    point.set(c, f, k, z);
                }
            }
        }
    }
    let mic_chans: Vec<Vec<f64>> = (0..m).map(|_| white_noise(&mut rng, len)).collect();
    let mut mic = analyze(&mic_chans, params)?;
    let ne_raw = analyze(&[noise_signal(cfg.ne_noise_kind, &mut rng, len, fs)], params)?;

    let mic_gain = if cfg.fe_snr_db.is_infinite() || cfg.mic_selfnoise_snr_db.is_infinite() {
        0.0
    } else {
        let e = stft::spectral_energy(&mic, 0, params.fft_len);
        (speech_energy / (10f64.powf(cfg.mic_selfnoise_snr_db / 10.0) * e)).sqrt()
    };
    mic.scale(mic_gain);
    let point_gain = if cfg.fe_snr_db.is_infinite() || cfg.noise_positions.is_empty() {
        0.0
    } else {
        let target = speech_energy / 10f64.powf(cfg.fe_snr_db / 10.0);
        solve_mix_gain(&point, &mic, 0, target, params.fft_len)?
    };

    let mut fe_noise = point;
    for (u, mn) in fe_noise.data.iter_mut().zip(&mic.data) {
        *u = *u * point_gain + mn;
    }
    let mut noisy = clean.clone();
    for (x, u) in noisy.data.iter_mut().zip(&fe_noise.data) {
        *x += u;
    }

    let ne_gain = if cfg.ne_snr_db.is_infinite() {
        0.0
    } else {
        let e = stft::spectral_energy(&ne_raw, 0, params.fft_len);
        (speech_energy / (10f64.powf(cfg.ne_snr_db / 10.0) * e)).sqrt()
    };
    let mut ne_noise = ne_raw;
    ne_noise.scale(ne_gain);

    let fe_psd = expected_bin_power(cfg.fe_noise_kind, params);
    let ne_psd = expected_bin_power(cfg.ne_noise_kind, params);
    let white_psd = params.window_energy();
    let c_u: Vec<CMatrix> = (0..bins)
        .map(|k| {
            let mut cu = CMatrix::identity(m, m) * Complex64::new(mic_gain * mic_gain * white_psd, 0.0);
            for steer in &noise_steer {
                cu += outer(&steer[k], &steer[k])
                    * Complex64::new(point_gain * point_gain * fe_psd[k], 0.0);
            }
            cu
        })
        .collect();
    let sigma_s2: Vec<f64> = long_term_psd(&source)?.iter().map(|c| c[(0, 0)].re).collect();
    let sigma_n2: Vec<f64> = ne_psd.iter().map(|p| ne_gain * ne_gain * p).collect();

    let noisy_time = synthesize(&noisy, params)?;
    let ne_noise_time = synthesize(&ne_noise, params)?.remove(0);

    Ok((
        SceneSignals {
            source,
            clean,
            fe_noise,
            noisy,
            ne_noise,
            noisy_time,
            ne_noise_time,
            seed: cfg.seed,
        },
        SpectralStats {
            sigma_s2,
            d,
            c_u,
            sigma_n2,
        },
    ))
}

/// Statistics measured from component spectrograms; transfer functions are
/// taken from geometry.
pub fn estimate_stats(
    source: &Spectrogram,
    fe_noise: &Spectrogram,
    ne_noise: &Spectrogram,
    d: &[CVector],
) -> Result<SpectralStats> {
    if source.bins != fe_noise.bins || source.bins != ne_noise.bins || d.len() != source.bins {
        return Err(Error::Dimension("statistics inputs disagree on bin count".into()));
    }
    if source.frames != fe_noise.frames || source.frames != ne_noise.frames {
        return Err(Error::Dimension("statistics inputs are not frame aligned".into()));
    }
    let sigma_s2 = long_term_psd(source)?.iter().map(|c| c[(0, 0)].re).collect();
    let c_u = long_term_psd(fe_noise)?;
    let sigma_n2 = long_term_psd(ne_noise)?.iter().map(|c| c[(0, 0)].re).collect();
    Ok(SpectralStats {
        sigma_s2,
        d: d.to_vec(),
        c_u,
        sigma_n2,
    })
}
