use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn slm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slm"))
        .args(args)
        .output()
        .expect("slm runs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

fn model() -> Value {
    json!({
        "box_len": 20.0,
        "m": 0.2,
        "a_plus": {"shape": "tophat", "height": 0.25, "radius": 1.0},
        "a_minus": {"shape": "gaussian", "sigma": 0.5, "mass": 0.3},
    })
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn minimal_config_is_echoed_with_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &json!({"model": model(), "hier": {"t_max": 0.1}}));
    let out = tmp.path().join("runs");
    let o = slm(&["hierarchy", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--label", "min"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = out.join("hierarchy/min");
    let resolved = read_json(run.join("resolved_config.json"));
    assert_eq!(resolved["seed"], json!(0));
    assert_eq!(resolved["replicas"], json!(1));
    assert_eq!(resolved["model"]["dim"], json!(1));
    assert_eq!(resolved["hier"]["closure"], json!("kirkwood"));
    assert_eq!(resolved["hier"]["scaling"], json!("full"));
    assert_eq!(resolved["hier"]["dt"], json!(0.01));
    assert!(resolved["hier"]["u0"].as_f64().unwrap() > 0.0);

    let manifest = read_json(run.join("manifest.json"));
    assert_eq!(manifest["status"], json!("ok"));
    assert_eq!(manifest["inputs_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    for f in ["u.csv", "w.csv", "hierarchy.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
}

#[test]
fn negative_mortality_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let mut m = model();
    m["m"] = json!(-0.1);
    let cfg = write_config(tmp.path(), "c.json", &json!({"model": m, "sim": {"t_max": 1.0}}));
    let o = slm(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model.m"), "{}", stderr(&o));
    assert!(!tmp.path().join("simulate").exists());
}

#[test]
fn wide_tophat_is_a_minimum_image_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let mut m = model();
    m["a_plus"]["radius"] = json!(10.5);
    let cfg = write_config(tmp.path(), "c.json", &json!({"model": m, "sim": {"t_max": 1.0}}));
    let o = slm(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("model.a_plus") && err.contains("minimum-image"), "{err}");
}

#[test]
fn every_error_is_reported_at_once() {
    let tmp = tempfile::tempdir().unwrap();
    let mut m = model();
    m["m"] = json!(-1.0);
    m["a_minus"]["sigma"] = json!(0.0);
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({"model": m, "hier": {"t_max": 1.0, "closure": "mean"}, "colour": "blue"}),
    );
    let o = slm(&["hierarchy", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for field in ["model.m", "model.a_minus.sigma", "hier.closure", "colour"] {
        assert!(err.contains(field), "{field} not reported in:\n{err}");
    }
}

#[test]
fn syntax_errors_carry_a_position() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.json");
    fs::write(&p, "{\n  \"model\": {\n    \"m\": 0.1,,\n  }\n}\n").unwrap();
    let o = slm(&["simulate", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn verify_on_the_default_fixture_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = slm(&["verify", "--out", tmp.path().to_str().unwrap(), "--label", "v"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = read_json(tmp.path().join("verify/v/report.json"));
    assert_eq!(report["all_pass"], json!(true));
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.len() > 20);
    for c in checks {
        assert_eq!(c["pass"], json!(true), "{c}");
        assert!(c.get("value").is_some() && c.get("bound").is_some());
    }
    let names: Vec<&str> = checks.iter().map(|c| c["name"].as_str().unwrap()).collect();
    for prefix in ["duality.", "stochasticity.", "k_transform.", "local_density", "B_norm", "Bstar_norm", "picard_"] {
        assert!(names.iter().any(|n| n.starts_with(prefix)), "no {prefix} check");
    }
}

#[test]
fn verify_reports_failures_with_exit_code_two() {
    // a truncated lattice is substochastic, so mass conservation must fail
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({
            "model": {
                "box_len": 2.0, "m": 0.5,
                "a_plus": {"shape": "tophat", "height": 0.3, "radius": 0.8},
                "a_minus": {"shape": "tophat", "height": 0.6, "radius": 0.8},
            },
            "verify": {"fixture": "model", "per_side": 5, "cap": 3},
        }),
    );
    let o = slm(&["verify", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap(), "--label", "t"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let manifest = read_json(tmp.path().join("verify/t/manifest.json"));
    assert_eq!(manifest["status"], json!("verification_failed"));
}

#[test]
fn verify_reuses_a_serialized_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert!(slm(&["verify", "--out", out, "--label", "a", "--seed", "9"]).status.success());
    let k0 = tmp.path().join("verify/a/k0.json");
    let o = slm(&["verify", "--out", out, "--label", "b", "--override", &format!("verify.k0={}", k0.display())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = read_json(tmp.path().join("verify/a/report.json"));
    let b = read_json(tmp.path().join("verify/b/report.json"));
    let local = |r: &Value| -> Vec<Value> {
        r["checks"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|c| c["name"].as_str().unwrap().starts_with("local_density"))
            .cloned()
            .collect()
    };
    assert_eq!(local(&a), local(&b));
}

#[test]
fn simulate_is_reproducible_from_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({
            "model": model(),
            "replicas": 4,
            "sim": {"t_max": 2.0, "snapshots": 3, "initial": {"kind": "poisson", "density": 0.6}},
        }),
    );
    let out = tmp.path().to_str().unwrap();
    let c = cfg.to_str().unwrap();
    for label in ["a", "b"] {
        let o = slm(&["simulate", "--config", c, "--out", out, "--label", label, "--seed", "42"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = slm(&["simulate", "--config", c, "--out", out, "--label", "c", "--seed", "43"]);
    assert!(o.status.success());
    let run = |l: &str| tmp.path().join("simulate").join(l);
    for r in 0..4 {
        let f = format!("replica_{r:05}.csv");
        assert_eq!(fs::read(run("a").join(&f)).unwrap(), fs::read(run("b").join(&f)).unwrap());
    }
    assert_ne!(
        fs::read(run("a").join("replica_00000.csv")).unwrap(),
        fs::read(run("c").join("replica_00000.csv")).unwrap()
    );
    let ma = read_json(run("a").join("manifest.json"));
    let mb = read_json(run("b").join("manifest.json"));
    assert_eq!(ma["seed"], json!(42));
    assert_ne!(ma["inputs_sha256"], mb["inputs_sha256"], "labels differ, so resolved configs differ");
}

#[test]
fn estimate_reads_a_simulation_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({"model": model(), "replicas": 3, "sim": {"t_max": 1.0, "snapshots": 2}}),
    );
    assert!(slm(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out, "--label", "s"]).status.success());
    let run = tmp.path().join("simulate/s");
    let o = slm(&[
        "estimate",
        "--out",
        out,
        "--label",
        "e",
        "--plots",
        "--override",
        &format!("est.run={}", run.display()),
        "--override",
        "est.edges=[0, 0.5, 1.0, 2.0]",
        "--override",
        "est.r0=1.0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("estimate/e");
    let k2 = fs::read_to_string(dir.join("k2.csv")).unwrap();
    assert_eq!(k2.lines().count(), 1 + 2 * 3);
    let est = read_json(dir.join("estimates.json"));
    assert_eq!(est["times"].as_array().unwrap().len(), 2);
    assert!(est["times"][0]["cluster_index"].is_object());
    assert!(dir.join("k2.svg").exists());
}

#[test]
fn homogeneous_kinetic_run_matches_the_logistic_solution() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({"model": model(), "kin": {"t_max": 10.0, "dt": 0.01, "initial": {"kind": "uniform", "density": 0.05}}}),
    );
    let o = slm(&["kinetic", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap(), "--label", "k"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read_json(tmp.path().join("kinetic/k/summary.json"));
    let err = summary["homogeneous"]["max_abs_error"].as_f64().unwrap();
    assert!(err <= 1e-6, "max_abs_error = {err}");
    // the density has moved well away from its start
    assert!(summary["final"]["mean"].as_f64().unwrap() > 0.2);
}

#[test]
fn hierarchy_blow_up_exits_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({
            "model": {
                "box_len": 20.0, "m": 0.0,
                "a_plus": {"shape": "tophat", "height": 2.5, "radius": 1.0},
            },
            "hier": {"t_max": 30.0, "u0": 1.0, "closure": "poisson"},
        }),
    );
    let o = slm(&["hierarchy", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap(), "--label", "d"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let manifest = read_json(tmp.path().join("hierarchy/d/manifest.json"));
    assert_eq!(manifest["status"], json!("divergence"));
    assert_eq!(manifest["exit_code"], json!(3));
}

#[test]
fn overrides_and_flags_take_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({"seed": 1, "model": model(), "hier": {"t_max": 0.1}}),
    );
    let o = slm(&[
        "hierarchy",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
        "--label",
        "o",
        "--seed",
        "5",
        "--override",
        "model.m=0.3",
        "--override",
        "hier.closure=zero",
        "--override",
        "seed=3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_json(tmp.path().join("hierarchy/o/resolved_config.json"));
    assert_eq!(r["model"]["m"], json!(0.3));
    assert_eq!(r["hier"]["closure"], json!("zero"));
    assert_eq!(r["seed"], json!(5));
}

#[test]
fn existing_run_directories_are_not_overwritten() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert!(slm(&["verify", "--out", out, "--label", "same"]).status.success());
    let o = slm(&["verify", "--out", out, "--label", "same"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("already exists"));
}
