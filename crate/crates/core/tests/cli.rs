//! Command-line surface tests: exit codes, artifact schemas, error texts.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_kgs-lab")
}

fn run(args: &[&str]) -> (i32, String, String) {
    let output = Command::new(bin()).args(args).output().unwrap();
    (
        output.status.code().unwrap(),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_success_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{ "n": 64, "t_final": 0.5, "output_every": 0.25, "dt": 0.005 }"#,
    );
    let out = dir.path().join("out");
    let (code, stdout, _) = run(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(out.join("run.json").exists());
    let csv = std::fs::read_to_string(out.join("series.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "t,sigma_u,sigma_nplus,sigma_nminus,charge,M_0.05,M_0.025,M_0.0125,N_0.05,N_0.025,N_0.0125,residual_u"
    );
    assert_eq!(csv.lines().count(), 4); // header + 3 rows
}

#[test]
fn simulate_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // Misaligned output spacing.
    let config = write_config(
        dir.path(),
        r#"{ "n": 64, "t_final": 1.0, "output_every": 0.3, "dt": 0.004 }"#,
    );
    let (code, _, stderr) = run(&["simulate", "--config", &config]);
    assert_eq!(code, 2);
    assert!(stderr.contains("not a multiple"), "stderr: {stderr}");

    // Unknown field.
    let config = write_config(dir.path(), r#"{ "n": 64, "bogus": 1 }"#);
    let (code, _, _) = run(&["simulate", "--config", &config]);
    assert_eq!(code, 2);

    // Missing file.
    let (code, _, _) = run(&["simulate", "--config", "/nonexistent/config.json"]);
    assert_eq!(code, 2);
}

#[test]
fn simulate_divergence_exits_3_with_partial_record() {
    let dir = tempfile::tempdir().unwrap();
    // Large amplitudes with a coarse step blow up the nonlinear substep.
    let config = write_config(
        dir.path(),
        r#"{ "n": 64, "t_final": 50.0, "output_every": 0.5, "dt": 0.5,
             "initial": { "sigma0": 0.3, "amp_u": 50.0, "amp_n0": 25.0, "amp_n1": 25.0,
                          "shape": "ell1-exponential", "seed": 7 } }"#,
    );
    let out = dir.path().join("out");
    let (code, stdout, _) = run(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3, "stdout: {stdout}");
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert!(!record["failure"].is_null(), "failure marker missing");
    let step = record["failure"]["step"].as_u64().unwrap();
    let time = record["failure"]["time"].as_f64().unwrap();
    assert!(step > 0);
    assert!((time - step as f64 * 0.5).abs() < 1e-9, "time {time} vs step {step}");
    assert!(out.join("series.csv").exists());
}

#[test]
fn picard_check_nonconvergence_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{ "n": 64, "t_final": 0.5, "output_every": 0.25, "dt": 0.005,
             "picard_sigma": 0.15, "lifespan_c": 1e9, "picard_max_iter": 6 }"#,
    );
    let out = dir.path().join("out");
    let (code, stdout, _) =
        run(&["picard-check", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 5, "stdout: {stdout}");
    assert!(stdout.contains("retry with delta"), "stdout: {stdout}");
    assert!(out.join("picard_report.json").exists());
}

#[test]
fn picard_check_zero_data_converges_in_one_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{ "n": 64, "t_final": 0.5, "output_every": 0.25, "dt": 0.005,
             "initial": { "sigma0": 0.3, "amp_u": 0.0, "amp_n0": 0.0, "amp_n1": 0.0,
                          "shape": "ell1-exponential", "seed": 7 } }"#,
    );
    let out = dir.path().join("out");
    let (code, stdout, _) =
        run(&["picard-check", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "stdout: {stdout}");
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("picard_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["report"]["iterations"].as_u64().unwrap(), 1);
    assert!(report["report"]["converged"].as_bool().unwrap());
}

#[test]
fn probe_bilinear_window_validation_and_exploratory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // d=3, s=0 caps b' at 0.75: rejected with the inequality named.
    let args_base = [
        "probe", "bilinear", "--tag", "estimate1", "--d", "3", "--b", "0.51", "--bprime", "0.8",
        "--samples", "100", "--cutoffs", "4", "--out", out,
    ];
    let (code, _, stderr) = run(&args_base);
    assert_eq!(code, 2);
    assert!(stderr.contains("b' < min"), "stderr: {stderr}");

    // Exploratory mode runs the same parameters and reports without asserting.
    let mut args = args_base.to_vec();
    args.push("--exploratory");
    let (code, stdout, _) = run(&args);
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(dir.path().join("probe_estimate1.csv").exists());
}

#[test]
fn probe_resonance_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, _) = run(&["probe", "resonance", "--samples", "500", "--dim", "1", "--out", out]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(dir.path().join("probe_resonance.csv")).unwrap();
    assert!(csv.starts_with("branch,dim,samples,max_residual,seed\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn fit_radius_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");

    // Constant sigma: p_hat = 0, verdict PASS.
    let mut csv = String::from("t,sigma_u\n");
    for t in [2.0, 4.0, 8.0, 16.0] {
        csv.push_str(&format!("{t},0.25\n"));
    }
    std::fs::write(&series, &csv).unwrap();
    let (code, stdout, _) = run(&[
        "fit-radius", "--series", series.to_str().unwrap(), "--dim", "1",
    ]);
    assert_eq!(code, 0);
    assert!(stdout.contains("PASS"));

    // Too-fast synthetic decay: verdict FAIL, exit 4.
    let mut csv = String::from("t,sigma_u\n");
    for t in [2.0f64, 4.0, 8.0, 16.0] {
        csv.push_str(&format!("{t},{}\n", t.powi(-9)));
    }
    std::fs::write(&series, &csv).unwrap();
    let (code, stdout, _) = run(&[
        "fit-radius", "--series", series.to_str().unwrap(), "--dim", "1",
    ]);
    assert_eq!(code, 4);
    assert!(stdout.contains("FAIL"));

    // Too few rows: exit 2.
    std::fs::write(&series, "t,sigma_u\n2.0,0.1\n").unwrap();
    let (code, _, _) = run(&[
        "fit-radius", "--series", series.to_str().unwrap(), "--dim", "1",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn probe_commutator_exploratory_skips_assertion() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // cutoff 12 drifts beyond 2x at sigma = 0.1 (outside the linear-response
    // window); assertion mode refuses, exploratory mode reports.
    let args_base = [
        "probe", "commutator", "--d", "1", "--b", "0.51", "--bprime", "0.6", "--cutoff", "12",
        "--out", out,
    ];
    let (code, _, _) = run(&args_base);
    assert_eq!(code, 4);
    let mut args = args_base.to_vec();
    args.push("--exploratory");
    let (code, _, _) = run(&args);
    assert_eq!(code, 0);
    assert!(dir.path().join("probe_commutator.csv").exists());
}
