use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn problem(eps: f64, extra: &str) -> String {
    format!(
        r#"[chart]
kind = "flat"
dim = 1

[morse]
amp = [0.1]

[boundary]
eps = {eps:?}

[strip]
r = 5.0
ns = 100
nt = 10
x_minus = [0.2]
{extra}"#
    )
}

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adia-strips"))
        .args(args)
        .current_dir(dir)
        .env_remove("ADIA_STRIPS_OUT")
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn catalog_lists_builtins() {
    let out = run(&["catalog"], &scratch("catalog"));
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["flat", "conformal-1d", "diag-perturbed-2d", "cosine-wells"] {
        assert!(text.contains(id), "{id} missing from\n{text}");
    }
}

#[test]
fn eps_zero_solve_has_zero_energy_and_hashed_manifest() {
    let dir = scratch("solve-eps0");
    std::fs::write(dir.join("p.toml"), problem(0.0, "")).unwrap();
    let out = run(&["solve", "--config", "p.toml", "--out", "o"], &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.join("o/report.json"));
    assert!(report["energy"].as_f64().unwrap().abs() <= 1e-12);
    let manifest = json(&dir.join("o/manifest.json"));
    assert_eq!(manifest["command"], "solve");
    let files = manifest["artifacts"].as_array().unwrap();
    assert!(files.iter().any(|f| f["file"] == "strip.csv"));
    for f in files {
        let bytes = std::fs::read(dir.join("o").join(f["file"].as_str().unwrap())).unwrap();
        use sha2::Digest;
        assert_eq!(f["sha256"].as_str().unwrap(), format!("{:x}", sha2::Sha256::digest(&bytes)));
    }
}

#[test]
fn reference_solve_then_verify() {
    let dir = scratch("solve-ref");
    std::fs::write(dir.join("p.toml"), problem(0.1, "")).unwrap();
    let out = run(&["solve", "--config", "p.toml", "--out", "o"], &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&dir.join("o/report.json"))["residual_norm"].as_f64().unwrap() < 1e-9);
    let out = run(&["verify", "o", "--out", "v"], &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&dir.join("v/estimate_report.json"))["violations"], 0);
    assert!(dir.join("v/gamma_profile.csv").exists() && dir.join("v/gamma.svg").exists());
}

#[test]
fn zero_section_verifies_with_zero_kappa() {
    let dir = scratch("verify-zero");
    std::fs::write(dir.join("p.toml"), problem(0.0, "")).unwrap();
    assert_eq!(run(&["solve", "--config", "p.toml", "--out", "o"], &dir).status.code(), Some(0));
    let out = run(&["verify", "o", "--out", "v"], &dir);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&dir.join("v/estimate_report.json"))["c1_kappa"].as_f64(), Some(0.0));
}

#[test]
fn truncated_strip_is_a_missing_artifact() {
    let dir = scratch("verify-truncated");
    std::fs::write(dir.join("p.toml"), problem(0.0, "")).unwrap();
    assert_eq!(run(&["solve", "--config", "p.toml", "--out", "o"], &dir).status.code(), Some(0));
    let csv = std::fs::read(dir.join("o/strip.csv")).unwrap();
    std::fs::write(dir.join("o/strip.csv"), &csv[..csv.len() / 2]).unwrap();
    assert_eq!(run(&["verify", "o", "--out", "v"], &dir).status.code(), Some(3));
    assert_eq!(run(&["verify", "nowhere", "--out", "v"], &dir).status.code(), Some(3));
}

#[test]
fn malformed_key_exits_3_with_position() {
    let dir = scratch("bad-key");
    std::fs::write(dir.join("p.toml"), problem(0.1, "colour = 3\n")).unwrap();
    let out = run(&["solve", "--config", "p.toml", "--out", "o"], &dir);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("p.toml:16:1"), "{err}");
}

#[test]
fn sweep_trivial_ladder_and_bad_ladder() {
    let dir = scratch("sweep");
    let one = problem(0.2, "\n[sweep]\neps = [0.2]\nell = 2.0\n");
    std::fs::write(dir.join("one.toml"), one).unwrap();
    let out = run(&["sweep", "--config", "one.toml", "--out", "o", "--jobs", "2"], &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["table.csv", "table.json", "row0_strip.csv", "row0_overlay.svg", "manifest.json"] {
        assert!(dir.join("o").join(f).exists(), "{f}");
    }
    let bad = problem(0.2, "\n[sweep]\neps = [0.1, 0.2]\nell = 2.0\n");
    std::fs::write(dir.join("bad.toml"), bad).unwrap();
    assert_eq!(run(&["sweep", "--config", "bad.toml", "--out", "b"], &dir).status.code(), Some(3));
}

#[test]
fn env_var_overrides_out() {
    let dir = scratch("env-out");
    std::fs::write(dir.join("p.toml"), problem(0.0, "")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_adia-strips"))
        .args(["solve", "--config", "p.toml", "--out", "ignored"])
        .current_dir(&dir)
        .env("ADIA_STRIPS_OUT", dir.join("chosen"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("chosen/manifest.json").exists());
    assert!(!dir.join("ignored").exists());
}

#[test]
fn flow_lists_criticals_and_writes_a_path() {
    let dir = scratch("flow");
    std::fs::write(dir.join("p.toml"), problem(0.1, "")).unwrap();
    let out = run(&["flow", "--config", "p.toml", "--out", "o"], &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cps = std::fs::read_to_string(dir.join("o/criticals.csv")).unwrap();
    assert_eq!(cps.lines().count(), 3);
    let summary = json(&dir.join("o/flow.json"));
    assert_eq!(summary["criticals"].as_array().unwrap().len(), 2);
    assert!(std::fs::read_to_string(dir.join("o/flow.csv")).unwrap().starts_with("sigma,q1,segment\n"));
}
