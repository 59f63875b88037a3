//! Joint far-end beamforming and near-end listening enhancement under the
//! minimum-processing principle.
//!
//! The signal chain is `X = d S + U` at the microphones, `Y = w^H X` after the
//! beamformer and `Z = g Y + N` at the listener. Per critical band, the
//! beamformer is a blend `alpha * w_ref + (1 - alpha) * w_nr` of two
//! speech-distortion-weighted multichannel Wiener filters and `g` is a playout
//! gain. [`solver::solve_band`] picks the `(alpha, g)` closest to the reference
//! `(1, 1)` that still meets a subband SNR target and a cap on the processed
//! far-end noise.

pub mod beamform;
pub mod cli;
pub mod config;
pub mod error;
pub mod filterbank;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod scene;
pub mod solver;
pub mod stft;

pub use error::{Error, Result};
pub use num_complex::Complex64;
