use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dkspec(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dkspec"));
    c.args(args).env_remove("DKSPEC_OUT");
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn ok(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON report on stdout")
}

fn failure(out: &Output) -> Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let last = text.lines().last().expect("error line");
    serde_json::from_str(last).expect("error JSON")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn spectrum_depths_are_ordered_and_plotted() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let report = ok(&dkspec(&["spectrum", "--activations", "exp,square,square", "--dim", "3", "--out", out.to_str().unwrap()], &[]));
    assert_eq!(report["summary"]["depth_ordering"]["holds"], true);
    assert_eq!(report["summary"]["depths"].as_array().unwrap().len(), 3);
    let svg = read(&out, "spectrum.svg");
    assert_eq!(svg.matches("<polyline").count(), 3);
    let sorted = read(&out, "spectrum_depth2_sorted.csv");
    assert_eq!(sorted.lines().next(), Some("i,eta_i"));
    assert_eq!(sorted.lines().count(), 201);
    let manifest: Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(manifest["command"], "spectrum");
    assert_eq!(manifest["inputs"]["dim"], 3);
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn single_depth_gives_one_curve() {
    let dir = tempfile::tempdir().unwrap();
    let report = ok(&dkspec(&["spectrum", "--activations", "exp", "--out", dir.path().to_str().unwrap()], &[]));
    assert!(report["summary"]["depth_ordering"].is_null());
    assert_eq!(read(dir.path(), "spectrum.svg").matches("<polyline").count(), 1);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&dkspec(&["spectrum", "--activations", "inverse_poly", "--seed", "3", "--out", d.to_str().unwrap()], &[]));
        ok(&dkspec(&["oracle", "--dim", "3", "--samples", "300", "--replicates", "2", "--out", d.join("o").to_str().unwrap()], &[]));
    }
    for name in ["spectrum_depth1_distinct.csv", "spectrum_depth1_sorted.csv", "spectrum.svg", "o/oracle.csv"] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
}

#[test]
fn invalid_activation_fails_without_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let res = dkspec(&["spectrum", "--activations", "exp,relu", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(res.status.code(), Some(2));
    let e = failure(&res);
    assert_eq!(e["error"]["kind"], "config");
    assert!(e["error"]["message"].as_str().unwrap().contains("relu"));
    assert!(!out.exists());
}

#[test]
fn computation_failure_leaves_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    // count beyond what degree 3 covers
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[spectrum]\ncount = 15\n").unwrap();
    let res = dkspec(
        &["spectrum", "--activations", "exp,exp", "--max-degree", "3", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &[],
    );
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(failure(&res)["error"]["kind"], "computation");
    assert!(!out.exists());
}

#[test]
fn usage_errors_are_reported() {
    let res = dkspec(&[], &[]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(failure(&res)["error"]["kind"], "usage");
    let res = dkspec(&["spectrum", "--dim"], &[]);
    assert_eq!(failure(&res)["error"]["kind"], "usage");
    let res = dkspec(&["ratio", "--beta", "1.0"], &[]);
    assert!(failure(&res)["error"]["message"].as_str().unwrap().contains("--beta"));
    let res = dkspec(&["mlp-bound"], &[]);
    assert!(failure(&res)["error"]["message"].as_str().unwrap().contains("weight"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[df]\nlambda = [0.1]\n").unwrap();
    let res = dkspec(&["df", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], &[]);
    assert!(failure(&res)["error"]["message"].as_str().unwrap().contains("df.lambda"));
}

#[test]
fn ratio_of_exp_is_reciprocal_and_gaps_are_marked() {
    let dir = tempfile::tempdir().unwrap();
    ok(&dkspec(&["ratio", "--activations", "exp", "--max-degree", "20", "--out", dir.path().to_str().unwrap()], &[]));
    for line in read(dir.path(), "ratio.csv").lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        let m: f64 = f[0].parse().unwrap();
        let r: f64 = f[2].parse().unwrap();
        assert!((r - 1.0 / m).abs() < 1e-14 / m, "{line}");
    }

    let gaps = dir.path().join("g");
    let report = ok(&dkspec(&["ratio", "--activations", "erf_sigmoid", "--out", gaps.to_str().unwrap()], &[]));
    assert!(!report["summary"]["gaps"].as_array().unwrap().is_empty());
    let svg = read(&gaps, "ratio.svg");
    assert!(svg.contains("undefined") && svg.contains("m^(-1/5)") && svg.contains("m^(-1/3)"));
    assert!(read(&gaps, "ratio.csv").lines().nth(3).unwrap().ends_with(','));
}

#[test]
fn double_exponential_sits_below_one_fifth_reference() {
    let dir = tempfile::tempdir().unwrap();
    let report = ok(&dkspec(&["ratio", "--out", dir.path().to_str().unwrap()], &[]));
    let refs = report["summary"]["references"].as_array().unwrap();
    let fifth = refs.iter().find(|r| (r["delta"].as_f64().unwrap() - 0.2).abs() < 1e-12).unwrap();
    assert!(fifth["m0"].as_u64().is_some());
}

#[test]
fn circle_oracle_reports_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let report = ok(&dkspec(&["oracle", "--dim", "2", "--out", dir.path().to_str().unwrap()], &[]));
    let r = &report["summary"]["result"];
    assert!((r["kappa"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!(r["max_rel_err"].as_f64().unwrap() < 1e-8);
}

#[test]
fn df_and_sandwich_commands() {
    let dir = tempfile::tempdir().unwrap();
    let report = ok(&dkspec(&["df", "--out", dir.path().to_str().unwrap()], &[]));
    assert_eq!(report["summary"]["df_within_bound"], true);
    assert_eq!(read(dir.path(), "df.csv").lines().count(), 10);

    let report = ok(&dkspec(&["sandwich", "--dim", "2", "--out", dir.path().to_str().unwrap()], &[]));
    assert_eq!(report["summary"]["report"]["pass"], true);
    let res = dkspec(&["sandwich", "--activations", "exp", "--out", dir.path().to_str().unwrap()], &[]);
    assert!(failure(&res)["error"]["message"].as_str().unwrap().contains("explicit rate"));
}

#[test]
fn learning_curve_with_default_config() {
    let dir = tempfile::tempdir().unwrap();
    let report = ok(&dkspec(&["learning-curve", "--out", dir.path().to_str().unwrap()], &[]));
    let exponent = report["summary"]["rate_exponent"].as_f64().unwrap();
    assert!(exponent < 0.0);
    let csv = read(dir.path(), "learning_curve.csv");
    assert!(csv.starts_with("ell,lambda,risk_median,risk_iqr\n"));
    assert!(csv.lines().last().unwrap().starts_with("rate_exponent,"));
}

#[test]
fn environment_sets_default_output_and_formats_filter() {
    let dir = tempfile::tempdir().unwrap();
    let env_out = dir.path().join("from-env");
    ok(&dkspec(&["ratio", "--format", "csv"], &[("DKSPEC_OUT", &env_out)]));
    let mut names: Vec<String> =
        std::fs::read_dir(&env_out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "ratio.csv"]);
}

#[test]
fn mlp_bound_and_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("w.json");
    std::fs::write(
        &weights,
        r#"{"d": 3, "activations": [{"kind": "exp"}],
            "layers": [{"rows": 3, "cols": 3, "data": [1,0,0, 0,1,0, 0,0,1]},
                       {"rows": 1, "cols": 3, "data": [0,1,0]}]}"#,
    )
    .unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "x1,x2,x3,y\n1,0,0,1.0\n0,1,0,2.7\n0,0,1,1.0\n").unwrap();
    let out = dir.path().join("o");
    let report = ok(&dkspec(&["mlp-bound", "--weights", weights.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]));
    assert_eq!(report["summary"]["rkhs_norm_sq_bound"].as_f64().unwrap(), std::f64::consts::E);
    assert!(report["summary"]["certificate"].is_null());

    let res = dkspec(&["mlp-bound", "--weights", weights.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(failure(&res)["error"]["kind"], "config");

    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[mlp_bound]\ng = 1.0\nb = 1.0\nm = 1.0\n").unwrap();
    let report = ok(&dkspec(
        &["mlp-bound", "--config", cfg.to_str().unwrap(), "--weights", weights.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &[],
    ));
    let cert = &report["summary"]["certificate"];
    let total = cert["total"].as_f64().unwrap();
    let parts = cert["empirical_risk"].as_f64().unwrap() + cert["complexity_term"].as_f64().unwrap() + cert["slack_terms"].as_f64().unwrap();
    assert!((total - parts).abs() <= 1e-12 * total);
}
