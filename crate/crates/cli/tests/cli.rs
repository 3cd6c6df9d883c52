use std::process::Command;

use serde_json::Value;
use srsync_cli::schema::{read_csv, Fig2Row, OracleRow, PhaseRow, ScalingRow, SpectrumRow};
use srsync_cli::{run_with, Io};

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Outcome {
    run_env(args, None)
}

fn run_env(args: &[&str], workers: Option<&str>) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("srsync").chain(args.iter().copied());
    let code = run_with(
        argv,
        workers,
        &mut Io {
            stdout: &mut out,
            stderr: &mut err,
        },
    );
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|e| panic!("not JSON ({e}): {text}"))
}

fn error_kind(o: &Outcome) -> String {
    let v = json(o.stderr.trim());
    assert_eq!(v["schema_version"], 1);
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn steady_large_n_zero_detuning() {
    let o = run(&["steady", "--n", "1000000", "--w", "500000", "--delta", "0"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let v = json(&o.stdout);
    assert_eq!(v["schema_version"], 1);
    assert!((v["sz"].as_f64().unwrap() - 0.25).abs() < 1e-4);
    assert_eq!(v["delta_mod"].as_f64().unwrap(), 0.0);
    assert_eq!(v["synchronized"], true);
}

#[test]
fn negative_pump_is_a_validation_error() {
    let o = run(&["steady", "--n", "100", "--w", "-1", "--delta", "0"]);
    assert_eq!(o.code, 1);
    assert_eq!(error_kind(&o), "validation");
    assert!(o.stdout.is_empty());
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        &["steady", "--n", "100", "--w", "1", "--delta", "0", "--unknown"][..],
        &["steady", "--n", "0.5", "--w", "1", "--delta", "0"][..],
        &["no-such-command"][..],
    ] {
        let o = run(args);
        assert_eq!(o.code, 1, "{args:?}");
        assert_eq!(error_kind(&o), "usage");
    }
    assert_eq!(run(&["steady", "--n", "0", "--w", "1", "--delta", "0"]).code, 1);
    assert_eq!(run(&["--gamma-c", "0", "steady", "--n", "1", "--w", "1", "--delta", "0"]).code, 1);
}

#[test]
fn help_goes_to_stdout_with_success() {
    let o = run(&["--help"]);
    assert_eq!(o.code, 0);
    assert!(o.stdout.contains("phase-diagram"));
}

#[test]
fn gamma_c_scales_rates_only() {
    let base = json(&run(&["steady", "--n", "50", "--w", "30", "--delta", "40"]).stdout);
    let scaled = json(&run(&["--gamma-c", "2.5", "steady", "--n", "50", "--w", "30", "--delta", "40"]).stdout);
    assert_eq!(base["sz"], scaled["sz"]);
    for key in ["gamma", "delta_mod", "w", "delta"] {
        let (a, b) = (base[key].as_f64().unwrap(), scaled[key].as_f64().unwrap());
        assert!((b - 2.5 * a).abs() <= 1e-12 * b.abs().max(1.0), "{key}: {a} vs {b}");
    }
}

#[test]
fn fig2_tail_approaches_detuning() {
    let o = run(&[
        "fig2",
        "--n",
        "1000000",
        "--w-rule",
        "half-n-gamma",
        "--delta-max",
        "2e6",
        "--points",
        "200",
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.starts_with("delta,sz,gamma,delta_mod\n"));
    let rows: Vec<Fig2Row> = read_csv(o.stdout.as_bytes()).unwrap();
    assert_eq!(rows.len(), 200);
    assert_eq!(rows[0].delta_mod, Some(0.0));
    let last = rows.last().unwrap();
    assert_eq!(last.delta, 2e6);
    let ratio = last.delta_mod.unwrap() / last.delta;
    // sqrt(1 − (w/δ)²) at δ = 4w
    assert!((ratio - (1.0f64 - 1.0 / 16.0).sqrt()).abs() < 0.01, "{ratio}");
    assert!(rows.windows(2).all(|w| w[1].delta_mod.unwrap() >= w[0].delta_mod.unwrap()));
}

#[test]
fn fig2_needs_a_pump() {
    let o = run(&["fig2", "--n", "100", "--delta-max", "10"]);
    assert_eq!(o.code, 1);
}

#[test]
fn reruns_are_bit_identical_and_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let args = |out: &str, workers: &str| {
        vec![
            "--workers".to_string(),
            workers.to_string(),
            "-o".to_string(),
            out.to_string(),
            "phase-diagram".into(),
            "--n".into(),
            "1000".into(),
            "--w-min".into(),
            "20".into(),
            "--w-max".into(),
            "980".into(),
            "--w-points".into(),
            "12".into(),
            "--y-min".into(),
            "30".into(),
            "--y-max".into(),
            "1500".into(),
            "--y-points".into(),
            "7".into(),
        ]
    };
    let (a, b) = (path("a.csv"), path("b.csv"));
    for (out, workers) in [(&a, "1"), (&b, "3")] {
        let argv = args(out, workers);
        let o = run(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(o.code, 0, "{}", o.stderr);
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);

    let rows: Vec<PhaseRow> = read_csv(&ta[..]).unwrap();
    assert_eq!(rows.len(), 84);
    // grid order: w fastest
    assert_eq!((rows[0].w, rows[0].delta), (20.0, 30.0));
    assert_eq!((rows[1].w, rows[1].delta), (20.0 + 960.0 / 11.0, 30.0));
    assert_eq!(rows[12].delta, 30.0 + (1500.0 - 30.0) / 6.0);
    assert!(rows.iter().all(|r| r.n == 1000 && r.sz.is_some()));
    // no locking beyond Nγc
    assert!(rows.iter().filter(|r| r.delta > 1000.0).all(|r| r.synchronized == Some(false)));

    let mut rewritten = Vec::new();
    srsync_cli::schema::write_csv(&rows, &mut rewritten).unwrap();
    assert_eq!(rewritten, ta);
}

#[test]
fn workers_env_overrides_flag() {
    let args = ["--workers", "2", "steady", "--n", "10", "--w", "5", "--delta", "1"];
    assert_eq!(run_env(&args, Some("1")).code, 0);
    let bad = run_env(&args, Some("many"));
    assert_eq!(bad.code, 1);
    assert!(bad.stderr.contains("SRSYNC_WORKERS"));
    assert_eq!(run_env(&args, Some("0")).code, 1);
}

#[test]
fn spectrum_is_symmetric_with_header() {
    let o = run(&["spectrum", "--n", "1000", "--w", "500", "--delta", "700", "--points", "101"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let rows: Vec<SpectrumRow> = read_csv(o.stdout.as_bytes()).unwrap();
    assert_eq!(rows.len(), 101);
    for k in 0..50 {
        let (l, r) = (&rows[k], &rows[100 - k]);
        assert!((l.omega + r.omega).abs() < 1e-9 * l.omega.abs().max(1.0));
        assert!((l.intensity - r.intensity).abs() < 1e-12);
    }
    let o = run(&["spectrum", "--n", "10", "--w", "5", "--delta", "1", "--omega-min", "3", "--omega-max", "1"]);
    assert_eq!(o.code, 1);
}

#[test]
fn scaling_csv_and_fit_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("scaling.csv");
    let fit_path = dir.path().join("fit.json");
    let o = run(&[
        "-o",
        csv_path.to_str().unwrap(),
        "scaling",
        "--n-values",
        "100,1000,10000",
        "--fit-output",
        fit_path.to_str().unwrap(),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let rows: Vec<ScalingRow> = read_csv(std::fs::File::open(&csv_path).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![100, 1000, 10000]);
    assert!(rows.windows(2).all(|w| w[1].offset_rel < w[0].offset_rel));
    assert!(rows.iter().all(|r| r.w_n > r.w_c));

    let fit = json(&std::fs::read_to_string(&fit_path).unwrap());
    assert_eq!(fit["schema_version"], 1);
    assert_eq!(fit["criterion"], "gamma-peak");
    assert!(fit["offset"]["exponent"].as_f64().unwrap() < 0.0);
    assert!(fit["gamma_peak"]["exponent"].as_f64().unwrap() > 0.0);
    assert_eq!(fit["cross_check"]["w_n"].as_array().unwrap().len(), 3);

    let o = run(&["scaling", "--n-values", "100,1000"]);
    assert_eq!(o.code, 1);
}

#[test]
fn beta_reports_window_and_rejects_bad_windows() {
    let o = run(&["beta", "--n", "100000", "--points", "8"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let v = json(&o.stdout);
    assert_eq!(v["w_c"].as_f64().unwrap(), 50_000.0);
    assert_eq!(v["points"].as_array().unwrap().len(), 8);
    assert!(v["w_onset"].as_f64().unwrap() > 50_000.0);
    let e = v["exponent"].as_f64().unwrap();
    assert!(e > 0.3 && e < 0.7, "{e}");

    let o = run(&["beta", "--n", "1000", "--window-lo", "0.9", "--window-hi", "1.2"]);
    assert_eq!(o.code, 1, "{}", o.stderr);
}

#[test]
fn oracle_compare_table() {
    let o = run(&["oracle-compare", "--n-values", "1,2"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let rows: Vec<OracleRow> = read_csv(o.stdout.as_bytes()).unwrap();
    assert_eq!(rows.len(), 2);
    // N = 1 inversion from the exact two-atom master equation
    assert!((rows[0].sz_oracle - -0.22105263157894728).abs() < 1e-9);
    assert_eq!((rows[1].w, rows[1].delta), (1.0, 0.5));

    let o = run(&["oracle-compare", "--n-values", "1,5"]);
    assert_eq!(o.code, 1);
    assert!(o.stdout.is_empty());
}

#[test]
fn regime_check_flags_failed_inequalities() {
    let base = [
        "regime-check", "--n", "10000", "--w", "1000", "--delta", "10", "--omega", "1000", "--kappa", "1e6",
        "--gamma-s", "1", "--t2-inv", "1",
    ];
    let v = json(&run(&base).stdout);
    assert_eq!(v["ok"], true);
    assert_eq!(v["gamma_c"].as_f64().unwrap(), 1.0);

    let mut args = base.to_vec();
    args[6] = "5e5";
    let v = json(&run(&args).stdout);
    assert_eq!(v["ok"], false);
    assert_eq!(v["warnings"][0]["condition"], "kappa >> |delta|");

    let mut args = base.to_vec();
    args[10] = "0";
    assert_eq!(run(&args).code, 1);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_srsync");
    let ok = Command::new(bin)
        .args(["steady", "--n", "10", "--w", "5", "--delta", "1"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(json(&String::from_utf8_lossy(&ok.stdout))["n"], 10);

    let bad = Command::new(bin)
        .args(["steady", "--n", "100", "--w", "-1", "--delta", "0"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(json(String::from_utf8_lossy(&bad.stderr).trim())["error"]["kind"], "validation");

    let env = Command::new(bin)
        .env("SRSYNC_WORKERS", "zero")
        .args(["steady", "--n", "10", "--w", "5", "--delta", "1"])
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(1));
}
