use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use zencli::{classify_regime, run_config, run_figure, Command as RunCmd, ExperimentReport, Regime};
use zenodyn::model::{DetectorSpec, LorentzianDosSpec};

fn zenodyn(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_zenodyn"));
    cmd.args(args);
    if let Some(n) = threads {
        cmd.env("ZENODYN_THREADS", n);
    }
    cmd.output().expect("binary runs")
}

/// Header and numeric rows of a CSV written by the driver.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn write_config(dir: &Path, json: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path
}

#[test]
fn figures_pass_their_checks() {
    let dir = tempfile::tempdir().unwrap();
    for id in zencli::FIGURES {
        let out = dir.path().join(id);
        let report = run_figure(id, &out).unwrap();
        assert!(report.passed(), "{id}: {:?}", report.failed());
        assert!(!report.flags.is_empty());
        for f in &report.files {
            assert!(out.join(f).exists(), "{id}: missing {f}");
        }
        let saved: ExperimentReport =
            serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        assert_eq!(saved, report);
    }
    assert_eq!(run_figure("fig9", dir.path()).unwrap_err().exit_code(), 2);
}

#[test]
fn ordering_flags_follow_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    run_figure("fig5a", dir.path()).unwrap();
    let (header, rows) = read_csv(&dir.path().join("fig5a.csv"));
    assert_eq!(&header[..3], ["t", "sigma00_gd0", "sigma00_gd10"]);
    assert!(rows
        .iter()
        .filter(|r| (0.5..=10.0).contains(&r[0]))
        .all(|r| r[2] > r[1]));

    run_figure("fig5b", dir.path()).unwrap();
    let (_, rows) = read_csv(&dir.path().join("fig5b.csv"));
    assert!(rows
        .iter()
        .filter(|r| (3.0..=30.0).contains(&r[0]))
        .all(|r| r[2] < r[1]));
    assert!(rows.iter().filter(|r| r[0] > 0.0 && r[0] <= 0.3).all(|r| r[2] > r[1]));
}

#[test]
fn peak_swap_follows_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    run_figure("fig8", dir.path()).unwrap();
    let (header, rows) = read_csv(&dir.path().join("fig8.csv"));
    assert_eq!(header, ["E_alpha", "P_gd0", "P_gd0.5", "P_gd10"]);
    let argmax = |col: usize| rows.iter().max_by(|a, b| a[col].total_cmp(&b[col])).unwrap()[0];
    assert!(argmax(1).abs() < 1.0);
    assert!((argmax(3) - 5.0).abs() < 1.0);
}

#[test]
fn regimes() {
    let det = DetectorSpec::with_decoherence(10.0).unwrap();
    let aligned = LorentzianDosSpec::new(0.0, 0.0, 1.0, 10.0, 0.0).unwrap();
    let detuned = LorentzianDosSpec::new(0.0, 10.0, 1.0, 10.0, 0.0).unwrap();
    assert_eq!(classify_regime(&aligned, &det).unwrap(), Regime::Zeno);
    assert_eq!(classify_regime(&detuned, &det).unwrap(), Regime::AntiZeno);
    assert_eq!(
        classify_regime(&detuned, &DetectorSpec::off()).unwrap(),
        Regime::Neutral
    );
    let background = LorentzianDosSpec::with_background_width(0.0, 0.0, 1.0, 10.0, 1.0).unwrap();
    assert!(classify_regime(&background, &det).is_err());
}

#[test]
fn decay_run_hits_half_life() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{"model": {{"kind": "constant", "Gamma0": 1.0}}, "time": {{"t_max": {}, "n_samples": 3}}}}"#,
            2.0 * std::f64::consts::LN_2
        ),
    );
    let report = run_config(&cfg, RunCmd::Decay, dir.path()).unwrap();
    let (_, rows) = read_csv(&dir.path().join("decay.csv"));
    assert!((rows[1][0] - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((rows[1][1] - 0.5).abs() < 1e-9);
    assert!(report.passed());
}

#[test]
fn decay_time_table() {
    let dir = tempfile::tempdir().unwrap();
    for (e1, gd, expected) in [(0.0, 0.0, 2.6), (0.0, 10.0, 5.1), (10.0, 0.0, 12.6), (10.0, 10.0, 10.1)] {
        // Γ_d = (√D − √D')² with D' = 0.
        let cfg = write_config(
            dir.path(),
            &format!(
                r#"{{"model": {{"kind": "lorentzian", "E1": {e1}, "Gamma1": 10}}, "detector": {{"D": {gd}, "Dprime": 0}}}}"#
            ),
        );
        let report = run_config(&cfg, RunCmd::DecayTime, dir.path()).unwrap();
        assert!(report.passed());
        for key in ["T_closed_form", "T_time_integrated_block", "T_linear_solve"] {
            let v = report.summary[key];
            assert!((v - expected).abs() < 1e-9 * expected, "{key}: {v} vs {expected}");
        }
    }
}

#[test]
fn spectrum_and_ladder_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"kind": "lorentzian", "E1": 5, "Gamma1": 0.5}, "detector": {"D": 0.25, "Dprime": 0}}"#,
    );
    let report = run_config(&cfg, RunCmd::Spectrum, dir.path()).unwrap();
    assert!(report.passed(), "{report}");
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"kind": "constant", "Gamma0": 1.0}, "detector": {"D": 2, "Dprime": 0.5},
            "grid": {"e_min": -5, "e_max": 5, "n_modes": 40}, "time": {"t_max": 4, "n_samples": 41}}"#,
    );
    let report = run_config(&cfg, RunCmd::Ladder, dir.path()).unwrap();
    assert!(report.passed(), "{report}");
    let (header, rows) = read_csv(&dir.path().join("ladder.csv"));
    assert_eq!(header, ["t", "sigma00", "trace", "mean_count", "current", "top_rung"]);
    // σ₀₀ = e^{−t}: ⟨n⟩ = D t + (D' − D)(1 − e^{−t}).
    let last = rows.last().unwrap();
    let expected = 2.0 * 4.0 - 1.5 * (1.0 - (-4.0f64).exp());
    assert!((last[3] - expected).abs() < 1e-6, "{} vs {expected}", last[3]);
}

#[test]
fn bad_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let cfg = write_config(dir.path(), "{\"model\": {\"kind\": \"constant\",\n \"Gamma0\": 1.0,}}");
    let o = zenodyn(
        &["run", "--config", cfg.to_str().unwrap(), "--cmd", "decay", "--out", out],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2 column"));

    let cfg = write_config(
        dir.path(),
        r#"{"model": {"kind": "constant", "Gamma0": 1.0, "Gamma": 2}}"#,
    );
    let o = zenodyn(
        &["run", "--config", cfg.to_str().unwrap(), "--cmd", "decay", "--out", out],
        None,
    );
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(
        dir.path(),
        r#"{"model": {"kind": "lorentzian", "E1": 0, "Gamma1": -1}}"#,
    );
    let o = zenodyn(
        &["run", "--config", cfg.to_str().unwrap(), "--cmd", "decay", "--out", out],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Gamma1 must be positive"));

    let o = zenodyn(
        &["run", "--config", cfg.to_str().unwrap(), "--cmd", "dance", "--out", out],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_exit_codes() {
    let o = zenodyn(&["validate", "--quick"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));

    // A narrow oracle grid cannot reach the tolerance.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"kind": "constant", "Gamma0": 1.0}, "grid": {"e_min": -5, "e_max": 5, "n_modes": 400}}"#,
    );
    let out = dir.path().join("out");
    let o = zenodyn(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--cmd",
            "validate",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(4));
    let report: ExperimentReport = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.failed(), ["oracle_vs_rate"]);
}

#[test]
fn analytic_command() {
    let o = zenodyn(
        &[
            "analytic",
            "classify_regime",
            "--params",
            "E1=10",
            "Gamma1=10",
            "GammaD=10",
        ],
        None,
    );
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "anti-zeno");
    let o = zenodyn(
        &[
            "analytic",
            "measured_decay_time",
            "--params",
            "eps01=0",
            "Gamma1=10",
            "GammaD=10",
        ],
        None,
    );
    let v: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!((v - 5.1).abs() < 1e-12);
    let o = zenodyn(&["analytic", "decoherence_rate", "--params", "D=4", "Dprime=1"], None);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim().parse::<f64>().unwrap(), 1.0);
    let o = zenodyn(&["analytic", "survival_constant", "--params", "Gamma0=1"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"kind": "lorentzian", "E1": 3, "Gamma1": 2}, "detector": {"D": 3, "Dprime": 1},
            "grid": {"e_min": -40, "e_max": 40, "n_modes": 2000}, "time": {"t_max": 5, "n_samples": 11}}"#,
    );
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = zenodyn(
            &[
                "run",
                "--config",
                cfg.to_str().unwrap(),
                "--cmd",
                "decay",
                "--out",
                out.to_str().unwrap(),
            ],
            Some(threads),
        );
        assert!(o.status.success());
        let o = zenodyn(&["figure", "fig8", "--out", out.to_str().unwrap()], Some(threads));
        assert!(o.status.success());
        outputs.push((
            fs::read(out.join("decay.csv")).unwrap(),
            fs::read(out.join("fig8.csv")).unwrap(),
        ));
    }
    assert!(outputs[0] == outputs[1]);
}
