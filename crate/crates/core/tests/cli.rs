use std::path::Path;
use std::process::{Command, Output};

use minproc_core::io::{read_csv, write_csv, BandRow, MetricRow};
use minproc_core::solver::{fallback_both, p_fse, SolverTerms, Status};

fn minproc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minproc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) {
    std::fs::write(dir.join(name), format!("duration = 2\nwrite_wavs = false\n{body}")).unwrap();
}

const TABLE_ROW: &str = "fe_noise = \"babble_like\"\nfe_snr_db = 0\nne_noise = \"car_like\"\nne_snr_db = -30\n";

#[test]
fn run_writes_artifacts_and_orders_methods() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.toml"), format!("duration = 2\n{TABLE_ROW}")).unwrap();
    let o = minproc(&["run", "s.toml", "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let base = dir.path().join("out/base");
    for f in ["x_ref.wav", "joint_y.wav", "joint_z.wav", "blind_z.wav", "unprocessed_z.wav", "joint_bands.csv", "joint_bins.csv"] {
        assert!(base.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["version"], "v0.1.0");
    assert_eq!(manifest["seed"], 0);
    let methods = manifest["points"][0]["methods"].as_array().unwrap();
    let asii: Vec<f64> = methods.iter().map(|m| m["asii"].as_f64().unwrap()).collect();
    let names: Vec<&str> = methods.iter().map(|m| m["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["joint", "blind", "unprocessed"]);
    assert!(asii[0] >= asii[1] && asii[1] >= asii[2], "{asii:?}");
    let bins: Vec<minproc_core::io::BinRow> = read_csv(&base.join("joint_bins.csv")).unwrap();
    assert_eq!(bins.len(), 257);
}

#[test]
fn sweep_gives_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "s.toml", "");
    let o = minproc(
        &["run", "s.toml", "--sweep", "fe_snr=-20:10:20", "--methods", "joint", "--out", "o"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<MetricRow> = read_csv(&dir.path().join("o/metrics.csv")).unwrap();
    let points: Vec<&str> = rows.iter().map(|r| r.point.as_str()).collect();
    assert_eq!(
        points,
        ["fe_snr=-20", "fe_snr=-10", "fe_snr=0", "fe_snr=10", "fe_snr=20"]
    );
    assert!(rows.iter().all(|r| r.method == "joint"));
    // more far-end noise never helps
    for w in rows.windows(2) {
        assert!(w[1].asii >= w[0].asii - 1e-9);
    }
}

#[test]
fn deterministic_and_reproducible_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "s.toml", "fe_noise = \"car_like\"\nfe_snr_db = -5\n");
    for out in ["a", "b"] {
        assert!(minproc(&["run", "s.toml", "--seed", "7", "--out", out], dir.path()).status.success());
    }
    let o = minproc(&["run", "a/manifest.json", "--out", "c"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "band_metrics.csv", "base/joint_bands.csv", "base/blind_bins.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
        assert_eq!(a, std::fs::read(dir.path().join("c").join(f)).unwrap(), "{f}");
    }
    let seed = minproc(&["run", "s.toml", "--seed", "8", "--out", "d"], dir.path());
    assert!(seed.status.success());
    assert_ne!(
        std::fs::read(dir.path().join("a/metrics.csv")).unwrap(),
        std::fs::read(dir.path().join("d/metrics.csv")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(minproc(&["run", "missing.toml"], dir.path()).status.code(), Some(2));
    write_config(dir.path(), "bad.toml", "no_such_key = 1\n");
    assert_eq!(minproc(&["run", "bad.toml"], dir.path()).status.code(), Some(2));
    write_config(dir.path(), "bad2.toml", "mu_r = 9\n");
    assert_eq!(minproc(&["run", "bad2.toml"], dir.path()).status.code(), Some(2));
    write_config(dir.path(), "ok.toml", "");
    let sweep = minproc(&["run", "ok.toml", "--sweep", "fe_snr=1:2"], dir.path());
    assert_eq!(sweep.status.code(), Some(2));
    std::fs::write(dir.path().join("blocker"), "file").unwrap();
    let o = minproc(&["run", "ok.toml", "--out", "blocker/sub"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::write(dir.path().join("m.csv"), "j,alpha\n0,zz\n").unwrap();
    assert_eq!(minproc(&["explain", "m.csv"], dir.path()).status.code(), Some(2));
    assert_eq!(minproc(&["explain", "gone.csv"], dir.path()).status.code(), Some(3));
    assert_eq!(minproc(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn explain_reports_passthrough_and_tight_c1() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "easy.toml", "fe_snr_db = 30\nne_snr_db = 30\nmethods = [\"joint\"]\n");
    write_config(dir.path(), "hard.toml", &format!("{TABLE_ROW}methods = [\"joint\"]\n"));
    assert!(minproc(&["run", "easy.toml", "--out", "e"], dir.path()).status.success());
    assert!(minproc(&["run", "hard.toml", "--out", "h"], dir.path()).status.success());

    let o = minproc(&["explain", "e/base/joint_bands.csv"], dir.path());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 30);
    assert!(text.lines().all(|l| l.ends_with("minimum processing: reference passthrough")));

    let csv = dir.path().join("h/base/joint_bands.csv");
    let rows: Vec<BandRow> = read_csv(&csv).unwrap();
    let o = minproc(&["explain", "h/base/joint_bands.csv"], dir.path());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut tight = 0;
    for (row, line) in rows.iter().zip(text.lines()) {
        if row.status == Status::Feasible && row.g > 1.0 {
            tight += 1;
            let ratio = row.c1_lhs / row.c1_rhs;
            assert!((1.0..=1.0 + 1e-6).contains(&ratio) || (ratio - 1.0).abs() < 1e-12, "{ratio}");
            assert!(line.contains("C1 tight"), "{line}");
        }
    }
    assert!(tight > 0);
}

#[test]
fn explain_reports_c2_equality_when_both_infeasible() {
    // target unreachable and the noise cap forces g below one
    let t = SolverTerms::new([1.0, 0.5, 0.0], [2.0, 4.0, 0.0], 1.0, 7.0 / 3.0);
    let s = fallback_both(&t, 0.0, 2001);
    assert_eq!(s.status, Status::BothInfeasible);
    let row = BandRow {
        j: 0,
        center_hz: 150.0,
        alpha: s.alpha,
        g: s.g,
        status: s.status,
        xi: s.xi,
        target_xi: t.i_xi,
        penalty: s.penalty,
        c1_lhs: s.g * s.g * p_fse(&t, s.alpha),
        c1_rhs: t.target(),
        c2_lhs: s.g * s.g * t.delta_u(s.alpha),
        c2_rhs: t.noise_cap(0.0),
    };
    let dir = tempfile::tempdir().unwrap();
    write_csv(&dir.path().join("b.csv"), &[row]).unwrap();
    let o = minproc(&["explain", "b.csv"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("both_infeasible") && text.contains("C2 at equality"), "{text}");
}
