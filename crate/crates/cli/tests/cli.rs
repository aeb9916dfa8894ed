use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_pparab");

fn run(dir: &Path, args: &[&str], config: &str) -> (i32, String) {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    let out = Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .current_dir(dir)
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn certify_exit_codes() {
    let d = TempDir::new().unwrap();
    let (code, _) = run(d.path(), &["certify", "--out", "a"], r#"{"recipe":"thm11","p":3,"gamma":0}"#);
    assert_eq!(code, 0);
    let cert = json(&d.path().join("a/certificate.json"));
    assert_eq!(cert["verdict"], "accept");
    assert!(cert["margin_c"].as_f64().unwrap() > 0.0);

    let cfg = r#"{"recipe":"thm11","p":150,"gamma":0}"#;
    let (code, text) = run(d.path(), &["certify", "--out", "b"], cfg);
    assert_eq!(code, 1);
    assert!(text.contains("p <= 40"), "{text}");
    let (code, _) = run(d.path(), &["certify", "--out", "c", "--override-range"], cfg);
    assert_eq!(code, 1);
    assert!(json(&d.path().join("c/certificate.json"))["witness"].is_object());

    let (code, _) = run(
        d.path(),
        &["certify", "--out", "d"],
        r#"{"recipe":"general_s","p":10,"gamma":0,"s":-3}"#,
    );
    assert_eq!(code, 0);
}

#[test]
fn usage_errors_exit_three() {
    let d = TempDir::new().unwrap();
    let (code, _) = run(
        d.path(),
        &["scan"],
        r#"{"region":{"p_range":[3,40],"gamma_range":[-0.9,0.9],"resolution":[0,3]}}"#,
    );
    assert_eq!(code, 3);
    let (code, _) = run(d.path(), &["scan"], "{}");
    assert_eq!(code, 3);
    let (code, _) = run(d.path(), &["solve"], "{");
    assert_eq!(code, 3);
    let (code, _) = run(d.path(), &["certify"], r#"{"recipe":"custom","p":3,"gamma":0}"#);
    assert_eq!(code, 3);
    let (code, _) = run(d.path(), &["certify", "--workers", "0"], r#"{"recipe":"thm11","p":3,"gamma":0}"#);
    assert_eq!(code, 3);
    let out = Command::new(BIN).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let out = Command::new(BIN).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn scan_writes_all_products() {
    let d = TempDir::new().unwrap();
    let (code, text) = run(
        d.path(),
        &["scan", "--out", "s"],
        r#"{"region":{"p_range":[3,40],"gamma_range":[-0.9,0.9],"resolution":[4,3]},
            "landscapes":[{"kind":"f","gamma":0,"p_range":[3,40],"kappa_n":11,"p_n":5}],
            "slices":[{"kind":"f","gamma":1,"p_range":[3,40]}]}"#,
    );
    assert_eq!(code, 0, "{text}");
    for f in ["region.csv", "region.json", "landscape_0_f.dat", "landscapes.json", "slices.json", "run.json"] {
        assert!(d.path().join("s").join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(d.path().join("s/region.csv")).unwrap().lines().count(), 13);
}

#[test]
fn solve_then_estimate() {
    let d = TempDir::new().unwrap();
    let (code, text) = run(
        d.path(),
        &["solve", "--out", "sol"],
        r#"{"problem":{"params":{"p":3,"gamma":0,"s":-1,"epsilon":0.01},"n":17,
            "initial":{"name":"sine_mode"},"t_end":0.1}}"#,
    );
    assert_eq!(code, 0, "{text}");
    let meta = json(&d.path().join("sol/solve.json"));
    assert_eq!(meta["stats"]["max_principle_ok"], true);
    assert!(d.path().join("sol/trajectory.ppt").exists());

    let (code, text) = run(
        d.path(),
        &["estimate", "--out", "est"],
        r#"{"trajectory":"sol/trajectory.ppt","params":{"p":3,"gamma":0,"s":-1,"epsilon":0.01},
            "s_values":[0],"time_derivative":["range_i"]}"#,
    );
    assert_eq!(code, 0, "{text}");
    let rows = fs::read_to_string(d.path().join("est/estimate.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 2);
    let csv = fs::read_to_string(d.path().join("est/ratios.csv")).unwrap();
    assert!(csv.starts_with("epsilon,h,ratio,log_share\n"));
    assert!(d.path().join("est/time_derivative.jsonl").exists());

    // p = 50 is outside the proven Hessian range.
    let (code, _) = run(
        d.path(),
        &["estimate", "--out", "bad"],
        r#"{"trajectory":"sol/trajectory.ppt","params":{"p":50,"gamma":0,"s":-48,"epsilon":0.01}}"#,
    );
    assert_eq!(code, 3);
}

#[test]
fn identity_check_writes_jsonl() {
    let d = TempDir::new().unwrap();
    let (code, text) = run(
        d.path(),
        &["identity-check", "--out", "id"],
        r#"{"identity":"gd1","preset":{"name":"quadratic_bowl"},"levels":[17,33]}"#,
    );
    assert_eq!(code, 0, "{text}");
    let rows = fs::read_to_string(d.path().join("id/identity.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 2);
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let d = TempDir::new().unwrap();
    let cfg = r#"{"problem":{"params":{"p":3,"gamma":0.5,"s":-1,"epsilon":0.01},"n":21,
        "initial":{"name":"random_smooth","seed":1},"t_end":0.05},"seed":7}"#;
    let (a, _) = run(d.path(), &["solve", "--out", "w1", "--workers", "1"], cfg);
    let (b, _) = run(d.path(), &["solve", "--out", "w3", "--workers", "3"], cfg);
    let (c, _) = run(d.path(), &["solve", "--out", "again"], cfg);
    assert_eq!((a, b, c), (0, 0, 0));
    for f in ["trajectory.ppt", "final.csv", "solve.json", "run.json"] {
        let x = fs::read(d.path().join("w1").join(f)).unwrap();
        assert_eq!(x, fs::read(d.path().join("w3").join(f)).unwrap(), "{f}");
        assert_eq!(x, fs::read(d.path().join("again").join(f)).unwrap(), "{f}");
    }
    let run_json = json(&d.path().join("w1/run.json"));
    assert_eq!(run_json["seed"], 7);
    assert_eq!(run_json["config"]["problem"]["initial"]["seed"], 7);

    let (_, _) = run(d.path(), &["solve", "--out", "other", "--seed", "8"], cfg);
    assert_ne!(
        fs::read(d.path().join("w1/final.csv")).unwrap(),
        fs::read(d.path().join("other/final.csv")).unwrap()
    );
}
