//! Batch driver behind the `minproc` binary.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::beamform::BeamformerSet;
use crate::config::{RunConfig, Sweep};
use crate::filterbank::{allocate_targets, BandTargets, Filterbank};
use crate::io::{self, BandMetricRow, BandRow, MetricRow};
use crate::metrics::evaluate;
use crate::pipeline::{render, run_method, EnhancementResult, Method};
use crate::scene::{synthesize_scene, SceneSignals, SpectralStats};
use crate::solver::Status;
use crate::stft::FrameParams;
use crate::Error;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(name = "minproc", version = VERSION, about = "Joint far-end beamforming and near-end listening enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario (or a sweep) and write artifacts.
    Run {
        /// Config file, or a manifest.json from an earlier run.
        config: PathBuf,
        /// Override one key over a grid, `key=lo:step:hi`.
        #[arg(long)]
        sweep: Option<Sweep>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize a band-solution CSV.
    Explain { csv: PathBuf },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match &e {
            Error::Io(_) | Error::Wav(_) => CliError::Io(e.to_string()),
            Error::Csv(c) if c.is_io_error() => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Run {
            config,
            sweep,
            methods,
            out,
            seed,
        } => run(&config, sweep, methods, out, seed).map(|s| print_lines(&s.lines)),
        Command::Explain { csv } => explain(&csv).map(|lines| print_lines(&lines)),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("minproc: {e}");
            e.exit_code()
        }
    }
}

fn print_lines(lines: &[String]) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    for line in lines {
        // a closed pipe (e.g. `| head`) is not an error for us
        if writeln!(out, "{line}").is_err() {
            break;
        }
    }
}

/// Everything produced for one scenario.
pub struct Scenario {
    pub params: FrameParams,
    pub fb: Filterbank,
    pub targets: BandTargets,
    pub signals: SceneSignals,
    pub stats: SpectralStats,
    pub results: Vec<EnhancementResult>,
}

/// Synthesizes the scene and runs, renders and evaluates every configured method.
pub fn run_scenario(cfg: &RunConfig, base_dir: &Path) -> crate::Result<Scenario> {
    cfg.validate()?;
    let params = cfg.frame()?;
    let fb = cfg.filterbank(&params, base_dir)?;
    let targets = allocate_targets(cfg.a_star, &fb)?;
    let (signals, stats) = synthesize_scene(&cfg.scene(), &params)?;
    let bset = BeamformerSet::build(&stats, cfg.mu_r, cfg.mu_0)?;
    let limits = cfg.limits();
    let results = cfg
        .methods
        .iter()
        .map(|&m| {
            let mut r = run_method(m, &stats, &bset, &fb, &targets, &limits)?;
            r.rendered = Some(render(&params, &signals, &r)?);
            r.report = Some(evaluate(&stats, &r, &fb, &targets)?);
            Ok(r)
        })
        .collect::<crate::Result<_>>()?;
    Ok(Scenario {
        params,
        fb,
        targets,
        signals,
        stats,
        results,
    })
}

#[derive(Debug, Serialize)]
struct MethodEntry {
    method: String,
    asii: f64,
    broadband_out_snr_db: f64,
    bands_csv: String,
    bins_csv: String,
    wavs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct PointEntry {
    label: String,
    value: Option<f64>,
    dir: String,
    config: String,
    methods: Vec<MethodEntry>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    version: &'static str,
    seed: u64,
    /// Echo of the effective config; `minproc run manifest.json` reruns it.
    config: String,
    sweep: Option<String>,
    points: Vec<PointEntry>,
    metrics_csv: String,
    band_metrics_csv: String,
}

pub struct RunSummary {
    pub out_dir: PathBuf,
    pub lines: Vec<String>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn sweep_from_manifest(path: &Path) -> Option<Sweep> {
    let text = std::fs::read_to_string(path).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.get("sweep")?.as_str()?.parse().ok()
}

pub fn run(
    config_path: &Path,
    sweep: Option<Sweep>,
    methods: Option<Vec<Method>>,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<RunSummary, CliError> {
    let mut cfg = RunConfig::load(config_path)?;
    let base_dir = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let sweep = match sweep {
        Some(s) => Some(s),
        None if config_path.extension().is_some_and(|e| e == "json") => sweep_from_manifest(config_path),
        None => None,
    };
    if let Some(m) = methods {
        cfg.methods = m;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = &cfg.importance_table {
        // pin to an absolute path so the echoed config reruns from anywhere
        let abs = std::fs::canonicalize(base_dir.join(t)).map_err(|e| CliError::Usage(format!("{}: {e}", t.display())))?;
        cfg.importance_table = Some(abs);
    }
    cfg.validate()?;

    let points: Vec<(String, Option<f64>, RunConfig)> = match &sweep {
        None => vec![("base".to_string(), None, cfg.clone())],
        Some(s) => s
            .values
            .iter()
            .map(|&v| Ok((format!("{}={v}", s.key), Some(v), cfg.with_override(&s.key, v)?)))
            .collect::<Result<_, CliError>>()?,
    };

    let out_dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let mut metric_rows = Vec::new();
    let mut band_metric_rows = Vec::new();
    let mut entries = Vec::new();
    let mut lines = Vec::new();

    for (label, value, pcfg) in points {
        let sc = run_scenario(&pcfg, &base_dir)?;
        let dir_name = label.replace(['=', '/'], "_");
        let dir = out_dir.join(&dir_name);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let sr = sc.params.sample_rate;
        if pcfg.write_wavs {
            io::write_wav(&dir.join("x_ref.wav"), &sc.signals.noisy_time[0], sr)?;
        }
        let mut methods = Vec::new();
        for r in &sc.results {
            let report = r.report.as_ref().expect("evaluated");
            let rendered = r.rendered.as_ref().expect("rendered");
            let m = r.method.to_string();
            let limits = pcfg.limits();
            let rows = io::band_rows(r, &sc.fb, |j| limits.band(j).delta_u_db);
            let bands_csv = format!("{m}_bands.csv");
            let bins_csv = format!("{m}_bins.csv");
            io::write_csv(&dir.join(&bands_csv), &rows)?;
            io::write_csv(&dir.join(&bins_csv), &io::bin_rows(r, |k| sc.params.bin_freq(k)))?;
            let mut wavs = Vec::new();
            if pcfg.write_wavs {
                for (suffix, sig) in [("y", &rendered.y), ("z", &rendered.z)] {
                    let name = format!("{m}_{suffix}.wav");
                    io::write_wav(&dir.join(&name), sig, sr)?;
                    wavs.push(format!("{dir_name}/{name}"));
                }
            }
            let feasible = report.per_band_status.iter().filter(|&&s| s == Status::Feasible).count();
            let total_penalty: f64 = r.band_solutions.iter().map(|s| s.penalty).sum();
            metric_rows.push(MetricRow {
                point: label.clone(),
                method: m.clone(),
                asii: report.asii,
                broadband_out_snr_db: report.broadband_out_snr_db,
                max_noise_boost_db: report.max_noise_boost_db,
                feasible_bands: feasible,
                total_penalty,
            });
            for j in 0..report.xi.len() {
                band_metric_rows.push(BandMetricRow {
                    point: label.clone(),
                    method: m.clone(),
                    j,
                    xi: report.xi[j],
                    fe_snr: report.fe_snr[j],
                    status: report.per_band_status[j],
                });
            }
            lines.push(format!(
                "{label:>16} {m:>12}  asii {:.3}  out snr {:+7.2} dB  feasible {feasible:>2}/{}",
                report.asii,
                report.broadband_out_snr_db,
                report.xi.len()
            ));
            methods.push(MethodEntry {
                method: m.clone(),
                asii: report.asii,
                broadband_out_snr_db: report.broadband_out_snr_db,
                bands_csv: format!("{dir_name}/{bands_csv}"),
                bins_csv: format!("{dir_name}/{bins_csv}"),
                wavs,
            });
        }
        entries.push(PointEntry {
            label,
            value,
            dir: dir_name,
            config: pcfg.to_toml_string()?,
            methods,
        });
    }

    io::write_csv(&out_dir.join("metrics.csv"), &metric_rows)?;
    io::write_csv(&out_dir.join("band_metrics.csv"), &band_metric_rows)?;
    let manifest = Manifest {
        version: VERSION,
        seed: cfg.seed,
        config: cfg.to_toml_string()?,
        sweep: sweep.map(|s| s.spec),
        points: entries,
        metrics_csv: "metrics.csv".into(),
        band_metrics_csv: "band_metrics.csv".into(),
    };
    io::write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(RunSummary { out_dir, lines })
}

/// Relative slack under which a constraint counts as tight.
const TIGHT_TOL: f64 = 1e-6;

pub fn explain(path: &Path) -> Result<Vec<String>, CliError> {
    let rows: Vec<BandRow> = io::read_csv(path)?;
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{}: no bands", path.display())));
    }
    Ok(rows.iter().map(explain_row).collect())
}

pub fn explain_row(r: &BandRow) -> String {
    let mut s = format!(
        "band {:2} ({:6.0} Hz): alpha {:.4}  g {:.4}  {}  penalty {:.3e}  ",
        r.j, r.center_hz, r.alpha, r.g, r.status, r.penalty
    );
    if r.status == Status::Feasible && r.alpha == 1.0 && r.g == 1.0 {
        s.push_str("minimum processing: reference passthrough");
        return s;
    }
    let mut notes = Vec::new();
    if r.c1_rhs > 0.0 {
        let q = r.c1_lhs / r.c1_rhs;
        let kind = if (1.0 - 1e-9..=1.0 + TIGHT_TOL).contains(&q) {
            "tight"
        } else if q > 1.0 {
            "slack"
        } else {
            "violated"
        };
        notes.push(format!("C1 {kind} (g^2 p_FSE / sigma_N^2 I = {q:.9})"));
    } else {
        notes.push("C1 trivially met (no near-end noise)".to_string());
    }
    if r.c2_rhs > 0.0 {
        let q = r.c2_lhs / r.c2_rhs;
        let kind = if (q - 1.0).abs() <= TIGHT_TOL {
            "at equality"
        } else if q < 1.0 {
            "slack"
        } else {
            "violated"
        };
        notes.push(format!("C2 {kind} (g^2 delta_U / cap = {q:.9})"));
    }
    let _ = write!(s, "{}", notes.join("; "));
    s
}
