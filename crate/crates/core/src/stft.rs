//! Short-time Fourier analysis and overlap-add synthesis.
//!
//! Frames use a periodic square-root Hann window for both analysis and
//! synthesis. At 50% overlap the squared window sums to exactly one, so an
//! untouched spectrogram resynthesizes the interior of the signal.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::linalg::CMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameParams {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub fft_len: usize,
}

impl FrameParams {
    /// Frames of `frame_ms` milliseconds with 50% overlap.
    pub fn new(sample_rate: u32, frame_ms: f64) -> Result<Self> {
        let frame_len = (sample_rate as f64 * frame_ms / 1000.0).round() as usize;
        if frame_len < 4 || frame_len % 2 != 0 {
            return Err(Error::Config(format!(
                "frame length {frame_len} must be even and >= 4"
            )));
        }
        Ok(Self {
            sample_rate,
            frame_len,
            hop: frame_len / 2,
            fft_len: frame_len,
        })
    }

    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn bin_freq(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.fft_len as f64
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    pub fn num_frames(&self, samples: usize) -> usize {
        if samples < self.frame_len {
            0
        } else {
            (samples - self.frame_len) / self.hop + 1
        }
    }

    /// Length of the signal produced by [`synthesize`] for `frames` frames.
    pub fn output_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.frame_len
        }
    }

    /// Sample range where the squared windows of neighbouring frames sum to one.
    pub fn interior(&self, frames: usize) -> std::ops::Range<usize> {
        if frames < 2 {
            return 0..0;
        }
        self.hop..(frames - 1) * self.hop + self.hop
    }

    pub fn window(&self) -> Vec<f64> {
        sqrt_hann(self.frame_len)
    }

    /// `sum_n w[n]^2`, the power gain of one analysis frame.
    pub fn window_energy(&self) -> f64 {
        self.window().iter().map(|w| w * w).sum()
    }
}

/// Periodic square-root Hann window.
pub fn sqrt_hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| (PI * i as f64 / n as f64).sin()).collect()
}

/// One-sided multichannel spectrogram indexed `(channel, frame, bin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub channels: usize,
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn zeros(channels: usize, frames: usize, bins: usize) -> Self {
        Self {
            channels,
            frames,
            bins,
            data: vec![Complex64::new(0.0, 0.0); channels * frames * bins],
        }
    }

    #[inline]
    fn idx(&self, c: usize, f: usize, k: usize) -> usize {
        (c * self.frames + f) * self.bins + k
    }

    #[inline]
    pub fn get(&self, c: usize, f: usize, k: usize) -> Complex64 {
        self.data[self.idx(c, f, k)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, f: usize, k: usize, v: Complex64) {
        let i = self.idx(c, f, k);
        self.data[i] = v;
    }

    pub fn frame(&self, c: usize, f: usize) -> &[Complex64] {
        let i = self.idx(c, f, 0);
        &self.data[i..i + self.bins]
    }

    pub fn frame_mut(&mut self, c: usize, f: usize) -> &mut [Complex64] {
        let i = self.idx(c, f, 0);
        &mut self.data[i..i + self.bins]
    }

    /// Single-channel view copied out of channel `c`.
    pub fn channel(&self, c: usize) -> Spectrogram {
        let start = self.idx(c, 0, 0);
        Spectrogram {
            channels: 1,
            frames: self.frames,
            bins: self.bins,
            data: self.data[start..start + self.frames * self.bins].to_vec(),
        }
    }

    pub fn same_shape(&self, other: &Spectrogram) -> bool {
        self.channels == other.channels && self.frames == other.frames && self.bins == other.bins
    }

    pub fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }
}

fn check_channels(signal: &[Vec<f64>]) -> Result<usize> {
    let len = signal.first().map(Vec::len).ok_or(Error::ChannelMismatch)?;
    if signal.iter().any(|ch| ch.len() != len) {
        return Err(Error::ChannelMismatch);
    }
    Ok(len)
}

pub fn analyze(signal: &[Vec<f64>], params: &FrameParams) -> Result<Spectrogram> {
    let len = check_channels(signal)?;
    if len < params.frame_len {
        return Err(Error::InsufficientSamples {
            got: len,
            need: params.frame_len,
        });
    }
    let frames = params.num_frames(len);
    let bins = params.bins();
    let n = params.fft_len;
    let window = params.window();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut out = Spectrogram::zeros(signal.len(), frames, bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (c, ch) in signal.iter().enumerate() {
        for f in 0..frames {
            let start = f * params.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(ch[start + i] * window[i], 0.0);
            }
            fft.process(&mut buf);
            let dst = out.frame_mut(c, f);
            dst.copy_from_slice(&buf[..bins]);
            dst[0].im = 0.0;
            dst[bins - 1].im = 0.0;
        }
    }
    Ok(out)
}

pub fn synthesize(spec: &Spectrogram, params: &FrameParams) -> Result<Vec<Vec<f64>>> {
    if spec.bins != params.bins() {
        return Err(Error::Dimension(format!(
            "spectrogram has {} bins, frame parameters expect {}",
            spec.bins,
            params.bins()
        )));
    }
    let n = params.fft_len;
    let bins = spec.bins;
    let window = params.window();
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let len = params.output_len(spec.frames);
    let mut out = vec![vec![0.0; len]; spec.channels];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let norm = 1.0 / n as f64;
    for (c, ch) in out.iter_mut().enumerate() {
        for f in 0..spec.frames {
            let half = spec.frame(c, f);
            buf[0] = Complex64::new(half[0].re, 0.0);
            buf[bins - 1] = Complex64::new(half[bins - 1].re, 0.0);
            for k in 1..bins - 1 {
                buf[k] = half[k];
                buf[n - k] = half[k].conj();
            }
            ifft.process(&mut buf);
            let start = f * params.hop;
            for (i, b) in buf.iter().enumerate() {
                ch[start + i] += b.re * norm * window[i];
            }
        }
    }
    Ok(out)
}

/// Long-term average of per-frame outer products `x x^H`, one `M x M` matrix per bin.
pub fn long_term_psd(spec: &Spectrogram) -> Result<Vec<CMatrix>> {
    if spec.frames == 0 {
        return Err(Error::Dimension("spectrogram has no frames".into()));
    }
    let m = spec.channels;
    let scale = 1.0 / spec.frames as f64;
    let mut out = Vec::with_capacity(spec.bins);
    for k in 0..spec.bins {
        let mut acc = CMatrix::zeros(m, m);
        for f in 0..spec.frames {
            for a in 0..m {
                let xa = spec.get(a, f, k);
                for b in a..m {
                    let v = xa * spec.get(b, f, k).conj();
                    acc[(a, b)] += v;
                }
            }
        }
        for a in 0..m {
            acc[(a, a)].im = 0.0;
            for b in a + 1..m {
                acc[(b, a)] = acc[(a, b)].conj();
            }
        }
        out.push(acc * Complex64::new(scale, 0.0));
    }
    Ok(out)
}

/// Weight of bin `k` in a one-sided power sum.
#[inline]
pub fn one_sided_weight(k: usize, bins: usize) -> f64 {
    if k == 0 || k == bins - 1 {
        1.0
    } else {
        2.0
    }
}

/// Total power of channel `c` summed over frames: `sum_f sum_k c_k |X|^2 / N`.
///
/// Equals the windowed time-domain energy `sum_n x[n]^2 sum_f w[n - f hop]^2`.
pub fn spectral_energy(spec: &Spectrogram, c: usize, fft_len: usize) -> f64 {
    let mut acc = 0.0;
    for f in 0..spec.frames {
        for (k, z) in spec.frame(c, f).iter().enumerate() {
            acc += one_sided_weight(k, spec.bins) * z.norm_sqr();
        }
    }
    acc / fft_len as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> FrameParams {
        FrameParams::new(16_000, 32.0).unwrap()
    }

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn paper_frame_sizes() {
        let p = params();
        assert_eq!(p.frame_len, 512);
        assert_eq!(p.hop, 256);
        assert_eq!(p.bins(), 257);
    }

    #[test]
    fn squared_window_is_cola() {
        let p = params();
        let w = p.window();
        for n in 0..p.hop {
            let s = w[n] * w[n] + w[n + p.hop] * w[n + p.hop];
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn short_signal_rejected() {
        let err = analyze(&[vec![0.0; 100]], &params()).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { .. }));
        assert!(err.to_string().contains("insufficient samples"));
    }

    #[test]
    fn ragged_channels_rejected() {
        let err = analyze(&[vec![0.0; 1000], vec![0.0; 999]], &params()).unwrap_err();
        assert!(matches!(err, Error::ChannelMismatch));
    }

    #[test]
    fn zero_in_zero_out() {
        let p = params();
        let s = analyze(&[vec![0.0; 4096]], &p).unwrap();
        assert!(s.data.iter().all(|z| z.norm() == 0.0));
        let y = synthesize(&s, &p).unwrap();
        assert!(y[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tone_concentrates_in_its_bin() {
        // sqrt-Hann spectrum of a bin-centred tone: mainlobe covers k0 +- 1,
        // and |W(k0 +- 1)| / |W(k0)| = 1/3 for the sine window.
        let p = params();
        let k0 = 40;
        let f0 = p.bin_freq(k0);
        let x: Vec<f64> = (0..8192)
            .map(|n| (2.0 * PI * f0 * n as f64 / p.sample_rate as f64).cos())
            .collect();
        let s = analyze(&[x], &p).unwrap();
        let frame = s.frame(0, 3);
        let total: f64 = frame.iter().map(|z| z.norm_sqr()).sum();
        let lobe: f64 = frame[k0 - 1..=k0 + 1].iter().map(|z| z.norm_sqr()).sum();
        assert!(lobe / total > 0.99);
        let ratio = frame[k0 + 1].norm() / frame[k0].norm();
        assert!((ratio - 1.0 / 3.0).abs() < 1e-3, "{ratio}");
    }

    #[test]
    fn roundtrip_interior() {
        let p = params();
        let x = noise(10_000, 1);
        let s = analyze(&[x.clone()], &p).unwrap();
        let y = synthesize(&s, &p).unwrap();
        let r = p.interior(s.frames);
        let num: f64 = r.clone().map(|n| (y[0][n] - x[n]).powi(2)).sum();
        let den: f64 = r.map(|n| x[n].powi(2)).sum();
        assert!((num / den).sqrt() < 1e-8);
    }

    #[test]
    fn gain_scales_output() {
        let p = params();
        let x = noise(6000, 2);
        let mut s = analyze(&[x.clone()], &p).unwrap();
        s.scale(2.0);
        let y = synthesize(&s, &p).unwrap();
        for n in p.interior(s.frames) {
            assert!((y[0][n] - 2.0 * x[n]).abs() < 1e-9);
        }
    }

    #[test]
    fn synthesize_rejects_wrong_bins() {
        let s = Spectrogram::zeros(1, 3, 100);
        assert!(synthesize(&s, &params()).is_err());
    }

    #[test]
    fn parseval_per_frame() {
        let p = params();
        let x = noise(5000, 3);
        let s = analyze(&[x.clone()], &p).unwrap();
        let w = p.window();
        let mut weighted = 0.0;
        for f in 0..s.frames {
            for i in 0..p.frame_len {
                weighted += (x[f * p.hop + i] * w[i]).powi(2);
            }
        }
        let spec = spectral_energy(&s, 0, p.fft_len);
        assert!((spec - weighted).abs() / weighted < 1e-10);
    }

    #[test]
    fn constant_magnitude_variance() {
        let mut s = Spectrogram::zeros(1, 5, 3);
        for f in 0..5 {
            for k in 0..3 {
                let ph = 0.7 * f as f64 + k as f64;
                s.set(0, f, k, Complex64::from_polar(2.0, ph));
            }
        }
        let c = long_term_psd(&s).unwrap();
        for m in c {
            assert!((m[(0, 0)].re - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_channel_rank_one() {
        let p = params();
        let x = noise(4000, 4);
        let s = analyze(&[x.clone(), x], &p).unwrap();
        for c in long_term_psd(&s).unwrap() {
            assert!((c[(0, 1)] - c[(0, 0)]).norm() <= 1e-12 * c[(0, 0)].re.max(1e-300));
            let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
            assert!(det.norm() <= 1e-9 * c[(0, 0)].norm_sqr().max(1e-300));
        }
    }

    #[test]
    fn white_noise_flat_spectrum() {
        // 1e4 frames of unit-variance noise; expected bin power is sum w^2.
        let p = FrameParams::new(16_000, 2.0).unwrap(); // 32-sample frames keep this fast
        let frames = 10_000;
        let len = p.output_len(frames);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = rand_distr::StandardNormal;
        let x: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(normal)).collect();
        let s = analyze(&[x], &p).unwrap();
        let expect = p.window_energy();
        for c in long_term_psd(&s).unwrap() {
            let v = c[(0, 0)].re;
            assert!((v - expect).abs() / expect < 0.1, "{v} vs {expect}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn covariance_hermitian_psd(seed in 0u64..1000, m in 1usize..4) {
                let p = FrameParams::new(16_000, 4.0).unwrap();
                let chans: Vec<Vec<f64>> = (0..m).map(|c| noise(1024, seed * 7 + c as u64)).collect();
                let s = analyze(&chans, &p).unwrap();
                for c in long_term_psd(&s).unwrap() {
                    let h = c.adjoint();
                    prop_assert!((&c - &h).norm() <= 1e-12 * c.norm());
                    let eig = nalgebra::linalg::SymmetricEigen::new(c.clone());
                    let tr = crate::linalg::trace_re(&c);
                    prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10 * tr));
                }
            }
        }
    }
}
