//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::filterbank::{build_filterbank, load_importance_table, Filterbank};
use crate::pipeline::{BandLimits, Method};
use crate::scene::{NoiseKind, Point, SceneConfig};
use crate::solver::SolverParams;
use crate::stft::FrameParams;
use crate::{Error, Result};

/// One scenario. Every key is optional; missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // scene
    pub fe_noise: NoiseKind,
    pub ne_noise: NoiseKind,
    pub fe_snr_db: f64,
    pub ne_snr_db: f64,
    pub mic_selfnoise_snr_db: f64,
    pub duration: f64,
    pub room_dims: Point,
    pub talker_pos: Point,
    pub noise_positions: Vec<Point>,
    pub mic_positions: Vec<Point>,
    // analysis
    pub sample_rate: u32,
    pub frame_ms: f64,
    pub bands: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    pub importance_table: Option<PathBuf>,
    // optimization
    pub mu_r: f64,
    pub mu_0: f64,
    pub a_star: f64,
    pub delta_u_db: f64,
    pub delta_n_db: f64,
    pub delta_u_db_bands: Option<Vec<f64>>,
    pub delta_n_db_bands: Option<Vec<f64>>,
    pub grid_n: usize,
    // run
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub write_wavs: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let scene = SceneConfig::default();
        let solver = SolverParams::default();
        Self {
            fe_noise: scene.fe_noise_kind,
            ne_noise: scene.ne_noise_kind,
            fe_snr_db: scene.fe_snr_db,
            ne_snr_db: scene.ne_snr_db,
            mic_selfnoise_snr_db: scene.mic_selfnoise_snr_db,
            duration: scene.duration,
            room_dims: scene.room_dims,
            talker_pos: scene.talker_pos,
            noise_positions: scene.noise_positions,
            mic_positions: scene.mic_positions,
            sample_rate: 16_000,
            frame_ms: 32.0,
            bands: 30,
            f_lo: 150.0,
            f_hi: 8000.0,
            importance_table: None,
            mu_r: 0.0,
            mu_0: 5.0,
            a_star: 0.7,
            delta_u_db: solver.delta_u_db,
            delta_n_db: solver.delta_n_db,
            delta_u_db_bands: None,
            delta_n_db_bands: None,
            grid_n: solver.grid_n,
            methods: Method::ALL.to_vec(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            write_wavs: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file, or the config echoed inside a run manifest (`.json`).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let echo = v
                .get("config")
                .and_then(|c| c.as_str())
                .ok_or_else(|| Error::Config(format!("{}: no config echo", path.display())))?;
            return Self::from_toml_str(echo);
        }
        Self::from_toml_str(&text)
    }

    /// Copy with a single key replaced, e.g. `("fe_snr_db", 10.0)`.
    /// `fe_snr` and `ne_snr` are accepted for the dB keys.
    pub fn with_override(&self, key: &str, value: f64) -> Result<Self> {
        let key = match key {
            "fe_snr" => "fe_snr_db",
            "ne_snr" => "ne_snr_db",
            k => k,
        };
        let mut table: toml::Table = toml::from_str(&self.to_toml_string()?).map_err(|e| Error::Config(e.to_string()))?;
        let known = toml::Table::try_from(RunConfig::default()).map_err(|e| Error::Config(e.to_string()))?;
        let slot = match (table.get(key), known.get(key)) {
            (Some(v), _) | (None, Some(v)) => v.clone(),
            (None, None) if key.ends_with("_bands") => toml::Value::Array(vec![]),
            (None, None) => return Err(Error::Config(format!("unknown key {key:?}"))),
        };
        let v = match slot {
            toml::Value::Integer(_) if value.fract() == 0.0 && value >= 0.0 => toml::Value::Integer(value as i64),
            toml::Value::Integer(_) => {
                return Err(Error::Config(format!("{key} needs a non-negative integer, got {value}")))
            }
            toml::Value::Float(_) => toml::Value::Float(value),
            _ => return Err(Error::Config(format!("{key} cannot be swept"))),
        };
        table.insert(key.to_string(), v);
        let text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene().validate()?;
        if !(self.mu_r < self.mu_0) || self.mu_r < 0.0 {
            return Err(Error::Config(format!(
                "need 0 <= mu_r < mu_0, got mu_r = {}, mu_0 = {}",
                self.mu_r, self.mu_0
            )));
        }
        if !(0.0..1.0).contains(&self.a_star) {
            return Err(Error::Config(format!("a_star = {} must lie in [0, 1)", self.a_star)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        self.limits().validate(self.bands)
    }

    pub fn scene(&self) -> SceneConfig {
        SceneConfig {
            room_dims: self.room_dims,
            talker_pos: self.talker_pos,
            noise_positions: self.noise_positions.clone(),
            mic_positions: self.mic_positions.clone(),
            mic_selfnoise_snr_db: self.mic_selfnoise_snr_db,
            fe_snr_db: self.fe_snr_db,
            ne_snr_db: self.ne_snr_db,
            fe_noise_kind: self.fe_noise,
            ne_noise_kind: self.ne_noise,
            duration: self.duration,
            seed: self.seed,
        }
    }

    pub fn frame(&self) -> Result<FrameParams> {
        FrameParams::new(self.sample_rate, self.frame_ms)
    }

    pub fn solver(&self) -> SolverParams {
        SolverParams {
            delta_u_db: self.delta_u_db,
            delta_n_db: self.delta_n_db,
            grid_n: self.grid_n,
        }
    }

    pub fn limits(&self) -> BandLimits {
        BandLimits {
            base: self.solver(),
            delta_u_db_bands: self.delta_u_db_bands.clone(),
            delta_n_db_bands: self.delta_n_db_bands.clone(),
        }
    }

    /// Filterbank for `params`; relative importance-table paths resolve against `base_dir`.
    pub fn filterbank(&self, params: &FrameParams, base_dir: &Path) -> Result<Filterbank> {
        let fb = build_filterbank(params, self.bands, self.f_lo, self.f_hi)?;
        match &self.importance_table {
            Some(p) => fb.with_importance(&load_importance_table(&base_dir.join(p))?),
            None => Ok(fb),
        }
    }
}

/// `key=lo:step:hi`, inclusive of `hi` up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<f64>,
    /// The text it was parsed from.
    pub spec: String,
}

impl std::str::FromStr for Sweep {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("sweep {s:?} is not key=lo:step:hi"));
        let (key, range) = s.split_once('=').ok_or_else(bad)?;
        let parts: Vec<f64> = range
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [lo, step, hi] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(bad());
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        Ok(Sweep {
            key: key.trim().to_string(),
            values: (0..n).map(|i| lo + i as f64 * step).collect(),
            spec: s.to_string(),
        })
    }
}
