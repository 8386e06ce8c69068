use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsl"))
        .args(args)
        .env("FSL_THREADS", "2")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(config: &Path, out: &Path) -> Output {
    fsl(&["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

const IDENTICAL_KL: &str = r#"{
    "experiment": "verify_kl",
    "pairs": [{"name": "same",
               "p": [{"weight": 1, "mean": [0.2], "covariance": [[1.0]]}],
               "q": [{"weight": 1, "mean": [0.2], "covariance": [[1.0]]}]}],
    "fd": {"directions": [[[1.0]]]}
}"#;

#[test]
fn identical_sources_exit_zero_with_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", IDENTICAL_KL);
    let out = dir.path().join("out");
    let o = run(&cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(out.join("verify_kl.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# schema=fsl-results/1 config_hash="));
    let hash = header.rsplit('=').next().unwrap();
    let rows: Vec<&str> = lines.skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with(hash));

    let json: Value = serde_json::from_str(&std::fs::read_to_string(out.join("verify_kl.json")).unwrap()).unwrap();
    let row = &json["rows"][0];
    assert_eq!(row["passed"], true);
    assert!(row["residual"].as_f64().unwrap() < 1e-9);

    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], hash);
    assert_eq!(manifest["summary"]["passed"], 1);
    assert_eq!(manifest["status"], "ok");
    assert!(manifest["started_at"].as_str().unwrap().contains('T'));
}

#[test]
fn invalid_alpha_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = IDENTICAL_KL
        .replace("verify_kl", "verify_theorem1")
        .replace("\"fd\"", "\"generators\": [\"alpha:1\"], \"fd\"");
    let cfg = write_config(dir.path(), "c.json", &text);
    let o = run(&cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("InvalidAlpha") && err.contains("generators[0]"), "{err}");
}

#[test]
fn unknown_key_and_missing_file_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &IDENTICAL_KL.replace("\"pairs\"", "\"extra\": 1, \"pairs\""));
    let o = run(&cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field `extra`"));

    let o = run(&dir.path().join("nope.json"), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_verification_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // A step this large leaves a truncation error far above the quadrature
    // tolerance.
    let text = r#"{
        "experiment": "verify_theorem1",
        "pairs": [{"name": "g",
                   "p": [{"weight": 1, "mean": [0.3], "covariance": [[0.4]]}],
                   "q": [{"weight": 1, "mean": [-0.2], "covariance": [[1.5]]}]}],
        "channel": {"sigma": [[0.5]]},
        "fd": {"directions": [[[1.0]]], "step": 0.2}
    }"#;
    let cfg = write_config(dir.path(), "c.json", text);
    let o = run(&cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stdout));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "failed");
}

fn mixture_pairs_json() -> &'static str {
    r#"[
        {"name": "gauss2",
         "p": [{"weight": 1, "mean": [0.3, -0.2], "covariance": [[1.0, 0.3], [0.3, 0.8]]}],
         "q": [{"weight": 1, "mean": [0.0, 0.1], "covariance": [[1.5, 0.0], [0.0, 1.2]]}]},
        {"name": "mix1",
         "p": [{"weight": 0.4, "mean": [-1.0], "covariance": [[0.5]]}, {"weight": 0.6, "mean": [1.0], "covariance": [[0.7]]}],
         "q": [{"weight": 0.5, "mean": [-0.5], "covariance": [[1.2]]}, {"weight": 0.5, "mean": [0.8], "covariance": [[1.0]]}]},
        {"name": "mix2",
         "p": [{"weight": 0.5, "mean": [-1.0, 0.0], "covariance": [[0.6, 0.1], [0.1, 0.5]]},
               {"weight": 0.5, "mean": [1.0, 0.5], "covariance": [[0.5, -0.1], [-0.1, 0.7]]}],
         "q": [{"weight": 0.3, "mean": [-0.5, 0.2], "covariance": [[1.2, 0.0], [0.0, 1.2]]},
               {"weight": 0.7, "mean": [0.6, 0.0], "covariance": [[1.1, 0.2], [0.2, 1.0]]}]}
    ]"#
}

#[test]
fn theorem_matrix_has_54_passing_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{
            "experiment": "verify_theorem1",
            "pairs": {},
            "generators": ["kl", "reverse_kl", "js", "hellinger2", "chi2", "alpha:1.5"],
            "estimator": {{"method": "quadrature", "nodes_per_axis": 48}},
            "fd": {{"directions": "random:3"}}
        }}"#,
        mixture_pairs_json()
    );
    let cfg = write_config(dir.path(), "c.json", &text);
    let out = dir.path().join("out");
    let o = run(&cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let json: Value = serde_json::from_str(&std::fs::read_to_string(out.join("verify_theorem1.json")).unwrap()).unwrap();
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 54);
    assert!(rows.iter().all(|r| r["passed"] == true));
}

#[test]
fn heat_sweep_plot_reports_second_order_slope() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "experiment": "verify_heat",
        "pairs": [{"name": "mix",
                   "p": [{"weight": 0.3, "mean": [-1.0], "covariance": [[0.4]]}, {"weight": 0.7, "mean": [0.8], "covariance": [[0.9]]}]}],
        "channel": {"sigma": [[0.7]]},
        "points": [[0.3]],
        "fd": {"directions": [[[1.0]]], "steps": [1e-2, 1e-3, 1e-4, 1e-5]}
    }"#;
    let cfg = write_config(dir.path(), "c.json", text);
    let out = dir.path().join("out");
    assert_eq!(run(&cfg, &out).status.code(), Some(0));
    let results = out.join("verify_heat.csv");
    let o = fsl(&["plot", results.to_str().unwrap(), "--kind", "residual_vs_h"]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let slope: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("slope mix/d0/y0: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope - 2.0).abs() < 0.3, "{stdout}");
    let series = std::fs::read_to_string(out.join("verify_heat.residual_vs_h.csv")).unwrap();
    assert_eq!(series.lines().count(), 5);
}

#[test]
fn descent_plot_is_monotone_and_empty_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "experiment": "fit_covariance",
        "pairs": [{"name": "g",
                   "p": [{"weight": 1, "mean": [0.0], "covariance": [[1.0]]}],
                   "q": [{"weight": 1, "mean": [0.0], "covariance": [[2.0]]}]}],
        "channel": {"sigma": [[0.5]]},
        "optimizer": {"step_size": 2.0, "max_iters": 10, "consistency_every": 5}
    }"#;
    let cfg = write_config(dir.path(), "c.json", text);
    let out = dir.path().join("out");
    let o = run(&cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("fit_covariance.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 11);
    let o = fsl(&["plot", out.join("fit_covariance.csv").to_str().unwrap(), "--kind", "objective_vs_iteration"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("monotone: true"));

    let empty = write_config(dir.path(), "empty.csv", "");
    let o = fsl(&["plot", empty.to_str().unwrap(), "--kind", "constant_vs_case"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing column"));
}

#[test]
fn debruijn_constants_and_fit_model_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "experiment": "verify_debruijn",
        "pairs": [{"name": "mix",
                   "p": [{"weight": 0.5, "mean": [-1.0], "covariance": [[0.5]]}, {"weight": 0.5, "mean": [1.0], "covariance": [[0.5]]}]}],
        "fd": {"directions": [[[1.0]]]}
    }"#;
    let cfg = write_config(dir.path(), "c.json", text);
    let out = dir.path().join("out");
    assert_eq!(run(&cfg, &out).status.code(), Some(0));
    let o = fsl(&["plot", out.join("verify_debruijn.csv").to_str().unwrap(), "--kind", "constant_vs_case"]);
    assert_eq!(o.status.code(), Some(0));
    let series = std::fs::read_to_string(out.join("verify_debruijn.constant_vs_case.csv")).unwrap();
    let c: f64 = series.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((c - 0.5).abs() < 1e-4);

    let text = r#"{
        "experiment": "fit_model",
        "pairs": [{"name": "target", "p": [{"weight": 1, "mean": [0.4], "covariance": [[0.8]]}]}],
        "estimator": {"method": "quadrature", "nodes_per_axis": 32},
        "optimizer": {"step_size": 0.2, "max_iters": 300, "stop_tol": 1e-7},
        "init": {"mean": [-0.3], "covariance": [[1.4]]}
    }"#;
    let cfg = write_config(dir.path(), "fit.json", text);
    let o = run(&cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{
            "experiment": "estimate",
            "pairs": {},
            "generators": ["kl", "hellinger2"],
            "estimator": {{"method": "mc_q", "n": 20000, "seed": 5}}
        }}"#,
        mixture_pairs_json()
    );
    let cfg = write_config(dir.path(), "c.json", &text);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&cfg, &a).status.code(), Some(0));
    let o = Command::new(env!("CARGO_BIN_EXE_fsl"))
        .args(["run", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()])
        .env("FSL_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    for f in ["estimate.csv", "estimate.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}
