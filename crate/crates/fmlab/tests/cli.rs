use std::path::Path;
use std::process::{Command, Output};

fn fmlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmlab")).args(args).output().unwrap()
}

fn config_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn run_then_audit_then_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = config_dir().join("decay_minimal.toml");
    let o = fmlab(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let o = fmlab(&["audit", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stdout));
    let o = fmlab(&["emit-plots", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(text(&o.stdout).contains("profile.vl.json"));
}

#[test]
fn validation_error_exits_two_and_lists_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    let src = std::fs::read_to_string(config_dir().join("decay_minimal.toml")).unwrap();
    std::fs::write(&bad, src.replace("s = 0.25", "s = 1.2").replace("samples = 100", "samples = 3")).unwrap();
    let o = fmlab(&["run", "--config", bad.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    assert!(err.contains("numeric.s") && err.contains("(0, 1)") && err.contains("numeric.samples"), "{err}");
}

#[test]
fn numeric_failure_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("g.toml");
    // Kernel rate 1/4 needs a far larger window than radius 8.
    std::fs::write(
        &cfg,
        "kind = \"gronwall\"\nseed = 1\n[numeric]\nscale = 4\nrate = 1.0\nkappa = 1.0\nradius = 8\n",
    )
    .unwrap();
    let out = tmp.path().join("o");
    let o = fmlab(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", text(&o.stderr));
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"failed_stage\": \"recursion\""), "{manifest}");
}

#[test]
fn invariant_violation_exits_four_and_audit_agrees() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sli.toml");
    let src = std::fs::read_to_string(config_dir().join("acceptance/sli.toml")).unwrap();
    std::fs::write(&cfg, src.replace("samples = 50", "samples = 5\nbound = 1e-9")).unwrap();
    let out = tmp.path().join("o");
    let o = fmlab(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", text(&o.stderr));
    assert_eq!(fmlab(&["audit", out.to_str().unwrap()]).status.code(), Some(4));
}

#[test]
fn seed_override_flag_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = config_dir().join("decay_minimal.toml");
    let o = fmlab(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed-override", "77"]);
    assert_eq!(o.status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 77);
    assert_eq!(m["seed_overridden"], true);
}

#[test]
fn describe_known_and_unknown_kinds() {
    let o = fmlab(&["describe", "ils_sweep"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(text(&o.stdout).contains("m ∈ (0, 2)"));
    let o = fmlab(&["describe", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("geometry_audit"));
}

#[test]
fn emit_plots_on_empty_directory_is_a_no_op() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fmlab(&["emit-plots", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(text(&o.stdout).is_empty());
    assert!(text(&o.stderr).contains("nothing to plot"));
}

#[test]
fn missing_config_file_is_reported() {
    let o = fmlab(&["run", "--config", "/nonexistent/x.toml", "--out", "/tmp/never"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(text(&o.stderr).contains("/nonexistent/x.toml"));
}
