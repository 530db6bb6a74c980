use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use amcert_cli::config::parse_config_str;
use amcert_cli::run::{chain_csv_name, run_chain, run_experiment_in, trace_csv_bytes, OutputRecord};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_amcert");

const GAUSS_1D: &str = r#"
[target]
name = "gaussian"
mean = [0.0]
cov = [[1.0]]

[run]
n_steps = 3000
n_chains = 3
root_seed = 42
"#;

fn amcert(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("AMCERT_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&o.stdout),
            String::from_utf8_lossy(&o.stderr)
        )
    })
}

#[test]
fn verify_target_gaussian_passes() {
    let o = amcert(&["verify-target", "gaussian", "--rho", "1.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["tails"]["verdict"], "pass");
    assert_eq!(v["passed"], true);
}

#[test]
fn verify_target_cauchy_fails() {
    let o = amcert(&["verify-target", "cauchy-like", "--rho", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout_json(&o)["passed"], false);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(amcert(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(amcert(&["sample"]).status.code(), Some(2));
    assert_eq!(
        amcert(&["verify-target", "gaussian", "--rho", "abc"]).status.code(),
        Some(2)
    );
}

#[test]
fn invalid_config_exits_one_with_all_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        "[target]\nname = \"gaussian\"\nmean = [0.0]\ncov = [[1.0]]\n[sampler]\nkappa = -1.0\n[run]\nn_steps = 0\n",
    );
    let o = amcert(&["sample", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("kappa") && err.contains("n_steps"), "{err}");
}

#[test]
fn certify_emits_certificate_and_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &format!("{GAUSS_1D}\n[certify]\nexpect = \"drift\"\nv = [[1.0]]\naudit_scales = [1.0, 4.0]\n"),
    );
    let out = dir.path().join("out");
    let o = amcert(&["certify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let cert = &v["certificate"];
    assert!(cert["lambda"].as_f64().unwrap() < 1.0);
    for key in ["b", "R", "delta"] {
        assert!(cert[key].as_f64().unwrap() > 0.0, "{key}");
    }
    let bound = &v["bound"];
    for key in [
        "gamma",
        "lambda_check",
        "b_check",
        "zeta_bar",
        "M_tilde",
        "vartheta",
        "rho",
        "L",
    ] {
        assert!(bound.get(key).is_some(), "missing {key}");
    }
    assert!(out.join("certificate.json").exists());
    let audit = fs::read_to_string(out.join("scaling_audit.csv")).unwrap();
    assert_eq!(audit.lines().count(), 3);
}

#[test]
fn cauchy_negative_control() {
    let dir = tempfile::tempdir().unwrap();
    let base = "[target]\nname = \"cauchy_like\"\ndim = 1\n[run]\nn_steps = 500\n";
    let expect_none = write_config(
        dir.path(),
        "n.toml",
        &format!("{base}[certify]\nexpect = \"no_drift\"\nv = [[1.0]]\n"),
    );
    let o = amcert(&[
        "certify",
        "--config",
        &expect_none,
        "--out",
        dir.path().join("a").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout_json(&o)["error"]
        .as_str()
        .unwrap()
        .contains("no drift certificate"));

    let expect_drift = write_config(
        dir.path(),
        "d.toml",
        &format!("{base}[certify]\nexpect = \"drift\"\nv = [[1.0]]\n"),
    );
    let o = amcert(&[
        "certify",
        "--config",
        &expect_drift,
        "--out",
        dir.path().join("b").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sample_then_replay_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.toml",
        &format!("{GAUSS_1D}\n[diagnostics]\nn_batches = 20\n"),
    );
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let o = amcert(&["sample", "--config", &cfg, "--out", out_s, "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let summary: OutputRecord = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary.all_passed);
    assert_eq!(summary.chains.len(), 3);
    for f in &summary.files {
        assert!(out.join(&f.path).exists(), "{} listed but missing", f.path);
    }
    let header = fs::read_to_string(out.join("chain_0.csv")).unwrap();
    assert!(header.starts_with("step,x0,accepted,s_norm,constraint_hit\n"));

    let o = amcert(&["replay", "--dir", out_s]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o).as_array().unwrap().len(), 3);

    let o = amcert(&["diagnose", "--dir", out_s]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let diag = stdout_json(&o);
    let stored: Value = serde_json::from_slice(&fs::read(out.join("chain_1_diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag[1]["average"], stored["average"]);
    assert_eq!(diag[1]["batch_means"], stored["batch_means"]);

    let path = out.join("chain_1.csv");
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen(",1,", ",0,", 1)).unwrap();
    let o = amcert(&["replay", "--dir", out_s]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash mismatch"));
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", GAUSS_1D);
    let root = dir.path().join("from-env");
    let o = Command::new(BIN)
        .args(["sample", "--config", &cfg, "--steps", "200", "--chains", "1"])
        .env("AMCERT_OUTPUT_DIR", &root)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(root.join("chain_0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 202);
}

#[test]
fn parallel_matches_serial() {
    let cfg = parse_config_str(&GAUSS_1D.replace("n_chains = 3", "n_chains = 4")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut wide = cfg.clone();
    wide.run.workers = Some(4);
    run_experiment_in(&wide, dir.path()).unwrap();
    let target = cfg.target.build().unwrap();
    for i in 0..4 {
        let serial = trace_csv_bytes(&run_chain(&cfg, &target, i).unwrap()).unwrap();
        assert_eq!(
            fs::read(dir.path().join(chain_csv_name(i))).unwrap(),
            serial,
            "chain {i}"
        );
    }
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = parse_config_str(GAUSS_1D).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment_in(&cfg, a.path()).unwrap();
    let mut single = cfg.clone();
    single.run.workers = Some(1);
    run_experiment_in(&single, b.path()).unwrap();
    for name in ["chain_0.csv", "chain_2.csv", "chain_2.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn config_echo_round_trips() {
    let cfg = parse_config_str(GAUSS_1D).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rec = run_experiment_in(&cfg, dir.path()).unwrap();
    let echoed = fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert_eq!(echoed, rec.config_toml);
    assert_eq!(parse_config_str(&echoed).unwrap(), cfg);
}
