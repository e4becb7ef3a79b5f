mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::assert_schema;
use projpost_cli::artifact::Artifact;
use serde_json::Value;

fn projpost(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_projpost"))
        .args(args)
        .current_dir(dir)
        .env_remove("PROJPOST_THREADS")
        .output()
        .unwrap()
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = projpost(args, dir);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str], dir: &Path) -> i32 {
    projpost(args, dir).status.code().unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Toy dataset and a flat fit with σ = 1 in a fresh directory.
fn toy_fit() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["simulate", "toy", "--seed", "4", "-o", "toy.csv"],
        dir.path(),
    );
    ok(
        &[
            "fit", "toy.csv", "--sigma", "1", "--draws", "2000", "--seed", "9", "-o", "toy.ppd",
        ],
        dir.path(),
    );
    dir
}

#[test]
fn flat_fit_without_noise_scale_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "toy", "-o", "toy.csv"], dir.path());
    let out = projpost(&["fit", "toy.csv", "--model", "flat"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--sigma"));
    assert_eq!(
        code(
            &["fit", "toy.csv", "--sigma", "1", "--sample-sigma"],
            dir.path()
        ),
        3
    );
    assert_eq!(code(&["fit", "toy.csv", "--sigma", "-1"], dir.path()), 3);
}

#[test]
fn usage_errors_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["fit", "--no-such-flag"], dir.path()), 3);
    assert_eq!(code(&["frobnicate"], dir.path()), 3);
    assert_eq!(code(&["--help"], dir.path()), 0);
    assert_eq!(code(&["--version"], dir.path()), 0);
}

#[test]
fn bad_thread_cap_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_projpost"))
        .args(["simulate", "toy", "-o", "t.csv"])
        .current_dir(dir.path())
        .env("PROJPOST_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn input_errors_exit_one() {
    let dir = toy_fit();
    let p = dir.path();
    std::fs::write(p.join("bad.json"), r#"[{"label":"x","include":["X99"]}]"#).unwrap();
    let out = projpost(&["project", "toy.ppd", "bad.json"], p);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("X99"));

    assert_eq!(code(&["fit", "missing.csv", "--sigma", "1"], p), 1);
    assert_eq!(
        code(
            &["fit", "toy.csv", "--sigma", "1", "--controls", "X1,nope"],
            p
        ),
        1
    );
    std::fs::write(p.join("junk.ppd"), b"not an artifact").unwrap();
    assert_eq!(code(&["stepwise", "junk.ppd"], p), 1);
}

#[test]
fn rank_deficient_design_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("y,z,a,b\n");
    for i in 0..40 {
        let a = (i as f64 * 0.37).sin();
        text.push_str(&format!(
            "{},{},{a},{}\n",
            (i as f64).cos(),
            (i as f64 * 1.3).sin(),
            2.0 * a
        ));
    }
    std::fs::write(dir.path().join("dup.csv"), text).unwrap();
    assert_eq!(code(&["fit", "dup.csv", "--sigma", "1"], dir.path()), 2);
}

#[test]
fn fit_writes_artifact_summary_and_draws() {
    let dir = toy_fit();
    let p = dir.path();
    let summary = json(p.join("toy.summary.json"));
    assert_schema("fit_summary", &summary);
    assert_eq!(summary["p"], 6);
    assert_eq!(summary["coefficients"][0]["name"], "tau");

    ok(
        &[
            "fit",
            "toy.csv",
            "--sigma",
            "1",
            "--draws",
            "50",
            "-o",
            "b.ppd",
            "--draws-csv",
            "b.csv",
        ],
        p,
    );
    let csv = std::fs::read_to_string(p.join("b.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "tau,beta_1,beta_2,beta_3,beta_4,beta_5,beta_6,sigma_eps,chain,iter"
    );
    assert_eq!(lines.count(), 50);
}

#[test]
fn reruns_are_byte_identical_and_round_trip() {
    let dir = toy_fit();
    let p = dir.path();
    ok(
        &[
            "fit",
            "toy.csv",
            "--sigma",
            "1",
            "--draws",
            "2000",
            "--seed",
            "9",
            "-o",
            "again.ppd",
        ],
        p,
    );
    let a = std::fs::read(p.join("toy.ppd")).unwrap();
    assert!(
        a == std::fs::read(p.join("again.ppd")).unwrap(),
        "rerun changed the artifact bytes"
    );

    let art = Artifact::load(&p.join("toy.ppd")).unwrap();
    let mut buf = Vec::new();
    art.write_to(&mut buf).unwrap();
    assert!(buf == a, "reload and rewrite changed the artifact bytes");
    assert_eq!(art.draws.n_draws(), 2000);

    std::fs::write(p.join("s.json"), r#"[{"label":"a","include":["X2","X3"]}]"#).unwrap();
    ok(&["project", "toy.ppd", "s.json", "-o", "r1.json"], p);
    ok(&["project", "again.ppd", "s.json", "-o", "r2.json"], p);
    assert!(std::fs::read(p.join("r1.json")).unwrap() == std::fs::read(p.join("r2.json")).unwrap());
}

#[test]
fn truncated_artifact_is_rejected() {
    let dir = toy_fit();
    let p = dir.path();
    let bytes = std::fs::read(p.join("toy.ppd")).unwrap();
    std::fs::write(p.join("cut.ppd"), &bytes[..bytes.len() - 3]).unwrap();
    let out = projpost(&["stepwise", "cut.ppd"], p);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncated"));
}

#[test]
fn project_rows_match_schema_and_full_subset_is_unchanged() {
    let dir = toy_fit();
    let p = dir.path();
    std::fs::write(
        p.join("s.json"),
        r#"[{"label":"full","include":["X1","X2","X3","X4","X5","X6"]},
            {"label":"drop X1","include":["X2","X3","X4","X5","X6"]},
            {"label":"none"}]"#,
    )
    .unwrap();
    ok(
        &[
            "project",
            "toy.ppd",
            "s.json",
            "--compare-refit",
            "--dump-dir",
            "dump",
            "-o",
            "rows.json",
        ],
        p,
    );
    let rows = json(p.join("rows.json"));
    assert_schema("projection_rows", &rows);
    assert_eq!(rows[0]["d_m"], 0.0);
    assert_eq!(rows[2]["q"], 0);
    assert!(rows[1]["refit"]["sigma_refit"].as_f64().unwrap() > 1.0);

    let art = Artifact::load(&p.join("toy.ppd")).unwrap();
    let full: Vec<f64> = std::fs::read_to_string(p.join("dump/full.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(full, art.draws.tau());
    assert!(p.join("dump/drop_X1.csv").exists());
}

#[test]
fn stepwise_on_simulated_design_keeps_requested_count() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["simulate", "wang", "--seed", "2", "-o", "sim.csv"], p);
    ok(
        &[
            "fit", "sim.csv", "--sigma", "1", "--draws", "1000", "-o", "sim.ppd",
        ],
        p,
    );
    ok(
        &[
            "stepwise",
            "sim.ppd",
            "--keep",
            "5",
            "--plot",
            "plot.csv",
            "-o",
            "path.json",
        ],
        p,
    );
    let path = json(p.join("path.json"));
    assert_schema("stepwise_path", &path);
    assert_eq!(path["steps"].as_array().unwrap().len(), 20);
    let plot = std::fs::read_to_string(p.join("plot.csv")).unwrap();
    assert!(plot.starts_with("step,removed,d_value,tau_mean,tau_lo,tau_hi\n"));
    assert_eq!(plot.lines().count(), 21);

    assert_eq!(code(&["stepwise", "sim.ppd", "--keep", "26"], p), 3);
    assert_eq!(
        code(&["stepwise", "sim.ppd", "--stop-when", "d_M >= x"], p),
        3
    );
}

#[test]
fn stop_when_threshold_cuts_the_path() {
    let dir = toy_fit();
    let p = dir.path();
    ok(
        &[
            "stepwise",
            "toy.ppd",
            "-o",
            "all.json",
            "--draws-dir",
            "steps",
        ],
        p,
    );
    let all = json(p.join("all.json"));
    let steps = all["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 6);
    assert!(p.join("steps/step_006.csv").exists());
    let t = steps[2]["d_value"].as_f64().unwrap() * 0.999;
    ok(
        &[
            "stepwise",
            "toy.ppd",
            "--stop-when",
            &format!("d_M > {t}"),
            "-o",
            "cut.json",
        ],
        p,
    );
    let cut = json(p.join("cut.json"));
    assert_eq!(cut["steps"].as_array().unwrap().len(), 2);
}

#[test]
fn verify_reports_identities() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        &[
            "simulate", "toy", "--seed", "1", "--n", "200", "-o", "toy.csv",
        ],
        p,
    );
    ok(
        &["verify", "toy.csv", "--exclude", "X6", "-o", "id.json"],
        p,
    );
    let report = json(p.join("id.json"));
    assert_schema("identity_report", &report);
    assert!(report["q11_residual_form"].as_f64().unwrap() < 1e-8);
    ok(&["verify", "toy.csv", "--include", "X1,X2"], p);
    assert_eq!(code(&["verify", "toy.csv", "--exclude", "X42"], p), 1);
}

#[test]
fn hs_ric_fit_uses_toml_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        &[
            "simulate", "toy", "--seed", "3", "--n", "200", "-o", "toy.csv",
        ],
        p,
    );
    std::fs::write(
        p.join("s.toml"),
        "n_iter = 400\nn_burn = 200\nchains = 2\nseed = 5\n",
    )
    .unwrap();
    ok(
        &[
            "fit", "toy.csv", "--model", "hs-ric", "--config", "s.toml", "-o", "hs.ppd",
        ],
        p,
    );
    let art = Artifact::load(&p.join("hs.ppd")).unwrap();
    assert_eq!(art.draws.n_draws(), 400);
    let summary = json(p.join("hs.summary.json"));
    assert_schema("fit_summary", &summary);
    assert_eq!(summary["provenance"], "horseshoe_ric");
    assert_eq!(summary["chains"], 2);

    std::fs::write(p.join("bad.toml"), "n_iter = 400\nwarmup = 3\n").unwrap();
    assert_eq!(
        code(
            &["fit", "toy.csv", "--model", "hs-ric", "--config", "bad.toml"],
            p
        ),
        3
    );
    std::fs::write(p.join("burn.toml"), "n_iter = 100\nn_burn = 200\n").unwrap();
    assert_eq!(
        code(
            &[
                "fit",
                "toy.csv",
                "--model",
                "hs-ric",
                "--config",
                "burn.toml"
            ],
            p
        ),
        3
    );
    assert_eq!(
        code(&["fit", "toy.csv", "--model", "hs-ric", "--sigma", "1"], p),
        3
    );
    assert_eq!(
        code(
            &[
                "fit",
                "toy.csv",
                "--model",
                "hs-ric",
                "--iters",
                "300",
                "--burn",
                "100",
                "--unpenalized",
                "X9"
            ],
            p
        ),
        1
    );
}
