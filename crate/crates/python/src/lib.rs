use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use minproc_core::cli;
use minproc_core::config;
use minproc_core::filterbank;
use minproc_core::metrics;
use minproc_core::solver;
use minproc_core::stft::FrameParams;

fn err(e: minproc_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyfunction]
fn erb_rate(f: f64) -> PyResult<f64> {
    filterbank::erb_rate(f).map_err(err)
}

#[pyfunction]
fn asii(xi: Vec<f64>, gamma: Vec<f64>) -> PyResult<f64> {
    metrics::asii(&xi, &gamma).map_err(err)
}

#[pyclass(frozen)]
struct Filterbank {
    inner: filterbank::Filterbank,
}

#[pymethods]
impl Filterbank {
    #[new]
    #[pyo3(signature = (bands=30, f_lo=150.0, f_hi=8000.0, sample_rate=16000, frame_ms=32.0))]
    fn new(bands: usize, f_lo: f64, f_hi: f64, sample_rate: u32, frame_ms: f64) -> PyResult<Self> {
        let params = FrameParams::new(sample_rate, frame_ms).map_err(err)?;
        let inner = filterbank::build_filterbank(&params, bands, f_lo, f_hi).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn centers(&self) -> Vec<f64> {
        self.inner.centers.clone()
    }

    #[getter]
    fn gamma(&self) -> Vec<f64> {
        self.inner.gamma.clone()
    }

    /// Recombination weights, `eta[j][k]`.
    #[getter]
    fn eta(&self) -> Vec<Vec<f64>> {
        self.inner.eta.clone()
    }

    fn band_bins(&self, j: usize) -> PyResult<Vec<usize>> {
        self.inner
            .band_bins
            .get(j)
            .cloned()
            .ok_or_else(|| PyValueError::new_err(format!("no band {j}")))
    }

    fn __len__(&self) -> usize {
        self.inner.num_bands()
    }
}

#[pyclass(frozen)]
struct SolverTerms {
    inner: solver::SolverTerms,
}

#[pymethods]
impl SolverTerms {
    /// `speech` and `noise` are `(at alpha=1, at alpha=0, cross)` band powers.
    #[new]
    fn new(speech: [f64; 3], noise: [f64; 3], sigma_n2: f64, i_xi: f64) -> Self {
        Self {
            inner: solver::SolverTerms::new(speech, noise, sigma_n2, i_xi),
        }
    }

    fn delta_s(&self, alpha: f64) -> f64 {
        self.inner.delta_s(alpha)
    }

    fn delta_u(&self, alpha: f64) -> f64 {
        self.inner.delta_u(alpha)
    }

    fn fe_snr(&self, alpha: f64) -> f64 {
        self.inner.fe_snr(alpha)
    }

    fn xi(&self, alpha: f64, g: f64) -> f64 {
        solver::xi(&self.inner, alpha, g)
    }
}

#[pyclass(frozen)]
struct BandSolution {
    #[pyo3(get)]
    alpha: f64,
    #[pyo3(get)]
    g: f64,
    #[pyo3(get)]
    status: String,
    #[pyo3(get)]
    penalty: f64,
    #[pyo3(get)]
    xi: f64,
}

impl From<solver::BandSolution> for BandSolution {
    fn from(s: solver::BandSolution) -> Self {
        Self {
            alpha: s.alpha,
            g: s.g,
            status: s.status.to_string(),
            penalty: s.penalty,
            xi: s.xi,
        }
    }
}

#[pymethods]
impl BandSolution {
    fn __repr__(&self) -> String {
        format!(
            "BandSolution(alpha={}, g={}, status={})",
            self.alpha, self.g, self.status
        )
    }
}

#[pyfunction]
#[pyo3(signature = (terms, delta_u_db=12.0, delta_n_db=10.0, grid_n=2001))]
fn solve_band(terms: &SolverTerms, delta_u_db: f64, delta_n_db: f64, grid_n: usize) -> PyResult<BandSolution> {
    let params = solver::SolverParams {
        delta_u_db,
        delta_n_db,
        grid_n,
    };
    params.validate().map_err(err)?;
    Ok(solver::solve_band(&terms.inner, &params).into())
}

#[pyfunction]
#[pyo3(signature = (terms, delta_u_db=12.0))]
fn lemma_boundary(terms: &SolverTerms, delta_u_db: f64) -> Option<BandSolution> {
    solver::lemma_boundary(&terms.inner, delta_u_db).map(Into::into)
}

#[pyclass(frozen)]
struct RunConfig {
    inner: config::RunConfig,
}

#[pymethods]
impl RunConfig {
    #[new]
    #[pyo3(signature = (toml=""))]
    fn new(toml: &str) -> PyResult<Self> {
        let inner = config::RunConfig::from_toml_str(toml).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = config::RunConfig::load(&path).map_err(err)?;
        Ok(Self { inner })
    }

    /// Copy with one numeric field replaced.
    fn with_value(&self, key: &str, value: f64) -> PyResult<Self> {
        let inner = self.inner.with_override(key, value).map_err(err)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(err)
    }
}

#[pyclass(frozen)]
struct MethodResult {
    #[pyo3(get)]
    method: String,
    #[pyo3(get)]
    asii: f64,
    #[pyo3(get)]
    broadband_out_snr_db: f64,
    #[pyo3(get)]
    max_noise_boost_db: f64,
    #[pyo3(get)]
    xi: Vec<f64>,
    #[pyo3(get)]
    alpha: Vec<f64>,
    #[pyo3(get)]
    g: Vec<f64>,
    #[pyo3(get)]
    status: Vec<String>,
    /// Output waveform at the listener.
    #[pyo3(get)]
    z: Vec<f64>,
}

/// Synthesize the configured scene and run every configured method.
#[pyfunction]
#[pyo3(signature = (config, base_dir=None))]
fn run_scenario(py: Python<'_>, config: &RunConfig, base_dir: Option<PathBuf>) -> PyResult<Vec<MethodResult>> {
    let dir = base_dir.unwrap_or_else(|| PathBuf::from("."));
    let cfg = config.inner.clone();
    let sc = py.detach(|| cli::run_scenario(&cfg, &dir)).map_err(err)?;
    Ok(sc
        .results
        .into_iter()
        .map(|r| {
            let rep = r.report.expect("evaluated");
            MethodResult {
                method: r.method.to_string(),
                asii: rep.asii,
                broadband_out_snr_db: rep.broadband_out_snr_db,
                max_noise_boost_db: rep.max_noise_boost_db,
                xi: rep.xi,
                alpha: r.band_solutions.iter().map(|b| b.alpha).collect(),
                g: r.band_solutions.iter().map(|b| b.g).collect(),
                status: r.band_solutions.iter().map(|b| b.status.to_string()).collect(),
                z: r.rendered.map(|x| x.z).unwrap_or_default(),
            }
        })
        .collect())
}

#[pymodule]
fn minproc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(erb_rate, m)?)?;
    m.add_function(wrap_pyfunction!(asii, m)?)?;
    m.add_function(wrap_pyfunction!(solve_band, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_boundary, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_class::<Filterbank>()?;
    m.add_class::<SolverTerms>()?;
    m.add_class::<BandSolution>()?;
    m.add_class::<RunConfig>()?;
    m.add_class::<MethodResult>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
