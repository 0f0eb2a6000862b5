use std::path::Path;

use fmlab::audit::audit;
use fmlab::config::Config;
use fmlab::error::HarnessError;
use fmlab::output::{read_schema, Manifest};
use fmlab::plots::emit_plots;
use fmlab::schema;
use fmlab::{run_config, RunOptions};

const MINIMAL: &str = r#"
kind = "decay_profile"
seed = 3
[model]
dim = 1
side = 41
profile = { shape = "box", height = 1.0, side = 1.0 }
law = { law = "uniform", eta_max = 4.0 }
[numeric]
s = 0.25
delta = 0.3
separations = [4, 8, 12, 16]
samples = 100
"#;

fn run_in(text: &str, dir: &Path, workers: Option<usize>) -> Result<Manifest, HarnessError> {
    let cfg = Config::parse(text)?;
    run_config(
        cfg,
        &RunOptions {
            out: Some(dir.to_path_buf()),
            workers,
            seed_override: None,
        },
    )
}

#[test]
fn minimal_decay_profile_writes_profile_fit_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let m = run_in(MINIMAL, tmp.path(), None).unwrap();
    assert_eq!(m.status, "ok");
    for f in ["profile.csv", "fit.json", "manifest.json"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    assert_eq!(read_schema(&tmp.path().join("profile.csv")), Some(("decay_profile".into(), 1)));
    let on_disk = Manifest::load(tmp.path()).unwrap();
    assert_eq!(on_disk.checksums(), m.checksums());
    assert!(on_disk.parameters.contains_key("numeric.eps"), "defaults are resolved into the manifest");
    assert!(!on_disk.seeds.is_empty());
}

#[test]
fn out_of_range_s_names_key_and_interval() {
    let Err(HarnessError::Validation(errs)) = Config::parse(&MINIMAL.replace("s = 0.25", "s = 1.2")) else {
        panic!("expected a validation error");
    };
    assert!(errs.iter().any(|e| e.contains("numeric.s") && e.contains("(0, 1)")), "{errs:?}");
}

#[test]
fn every_offending_key_is_listed() {
    let text = MINIMAL
        .replace("s = 0.25", "s = 0")
        .replace("delta = 0.3", "delta = -1")
        .replace("dim = 1", "dim = 1\ncolour = \"blue\"");
    let Err(HarnessError::Validation(errs)) = Config::parse(&text) else {
        panic!("expected a validation error");
    };
    assert!(errs.len() >= 3, "{errs:?}");
}

#[test]
fn reruns_and_worker_counts_give_identical_data() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_in(MINIMAL, &tmp.path().join("a"), Some(1)).unwrap();
    let b = run_in(MINIMAL, &tmp.path().join("b"), Some(1)).unwrap();
    let c = run_in(MINIMAL, &tmp.path().join("c"), Some(3)).unwrap();
    assert_eq!(a.checksums(), b.checksums());
    assert_eq!(a.checksums(), c.checksums());
    assert_eq!(c.workers, if cfg!(feature = "parallel") { 3 } else { 1 });
}

#[test]
fn seed_override_changes_samples_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_in(MINIMAL, &tmp.path().join("a"), None).unwrap();
    let m = run_config(
        Config::parse(MINIMAL).unwrap(),
        &RunOptions {
            out: Some(tmp.path().join("b")),
            workers: None,
            seed_override: Some(99),
        },
    )
    .unwrap();
    assert!(m.seed_overridden);
    assert_eq!(m.seed, 99);
    assert_ne!(a.checksums()["profile.csv"], m.checksums()["profile.csv"]);
}

#[test]
fn failed_stage_is_named_in_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    // delta beyond the full-coupling bottom: rejected once E_F is known.
    let err = run_in(&MINIMAL.replace("delta = 0.3", "delta = 10.0"), tmp.path(), None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let m = Manifest::load(tmp.path()).unwrap();
    assert_eq!(m.status, "failed");
    assert_eq!(m.failed_stage.as_deref(), Some("setup"));
}

#[test]
fn invariant_violation_exits_four_and_keeps_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace("samples = 100", "samples = 100\ncap = 1e-9");
    let err = run_in(&text, tmp.path(), None).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    let m = Manifest::load(tmp.path()).unwrap();
    assert_eq!(m.status, "invariant_violation");
    assert!(tmp.path().join("profile.csv").exists());
}

#[test]
fn workers_zero_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(MINIMAL, tmp.path(), Some(0)).unwrap_err().exit_code(), 2);
}

#[test]
fn describe_lists_annotated_keys() {
    let ils = schema::describe("ils_sweep").unwrap();
    let m = ils.lines().find(|l| l.trim_start().starts_with("numeric.m ")).unwrap();
    assert!(m.contains("m ∈ (0, 2)") && m.contains("initial length scale"), "{m}");
    let weak = schema::describe("weak_l1").unwrap();
    assert!(weak.contains("numeric.thresholds") && weak.contains("numeric.family"), "{weak}");
    let err = schema::describe("nonsense").unwrap_err();
    for k in schema::KINDS {
        assert!(err.contains(k), "{err}");
    }
}

#[test]
fn plots_for_decay_profile_are_log_y_with_fit() {
    let tmp = tempfile::tempdir().unwrap();
    run_in(MINIMAL, tmp.path(), None).unwrap();
    std::fs::write(tmp.path().join("stray.csv"), "# schema: mystery v1\na\n1\n").unwrap();
    let rep = emit_plots(tmp.path()).unwrap();
    let spec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("plots/profile.vl.json")).unwrap()).unwrap();
    assert_eq!(spec["layer"][0]["encoding"]["y"]["scale"]["type"], "log");
    assert_eq!(spec["layer"].as_array().unwrap().len(), 2, "fit overlay");
    assert!(spec["data"]["values"].as_array().unwrap().len() == 4);
    assert!(rep.warnings.iter().any(|w| w.contains("stray.csv")));
    assert!(!rep.written.iter().any(|p| p.ends_with("stray.vl.json")));
}

#[test]
fn plots_on_empty_directory_warn_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let rep = emit_plots(tmp.path()).unwrap();
    assert!(rep.written.is_empty());
    assert_eq!(rep.warnings.len(), 1);
    assert!(!tmp.path().join("plots").exists());
}

#[test]
fn audit_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    run_in(MINIMAL, tmp.path(), None).unwrap();
    assert!(audit(tmp.path()).unwrap().passed());
    let p = tmp.path().join("profile.csv");
    let text = std::fs::read_to_string(&p).unwrap();
    std::fs::write(&p, text.replacen(",100\n", ",101\n", 1)).unwrap();
    let rep = audit(tmp.path()).unwrap();
    assert!(!rep.passed());
    assert!(rep
        .checks
        .iter()
        .any(|c| !c.passed && c.stage == "profile.csv" && c.name == "checksum_matches_manifest"));
}

#[test]
fn audit_recomputes_geometry() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
kind = "geometry_audit"
seed = 5
[model]
dim = 2
side = 16
layout = "displacement"
displacement = 0.25
[numeric]
lengths = [2, 4]
"#;
    run_in(text, tmp.path(), None).unwrap();
    let rep = audit(tmp.path()).unwrap();
    assert!(rep.passed());
    assert!(rep.checks.iter().any(|c| c.name == "geometry_report_reproduced" && c.passed));
}

#[test]
fn gronwall_kernel_rate_can_come_from_a_decay_fit() {
    let tmp = tempfile::tempdir().unwrap();
    run_in(MINIMAL, &tmp.path().join("decay"), None).unwrap();
    let fit = tmp.path().join("decay/fit.json");
    let text = format!(
        "kind = \"gronwall\"\nseed = 1\n[numeric]\nscale = 8\ntau_fit = \"{}\"\nkappa = 1.0\nradius = 200\n",
        fit.display()
    );
    let m = run_in(&text, &tmp.path().join("g"), None).unwrap();
    assert_eq!(m.status, "ok");
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("g/summary.json")).unwrap()).unwrap();
    let fitted: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fit).unwrap()).unwrap();
    let mu = fitted["model"]["rate"].as_f64().unwrap();
    assert!((s["kernel"]["rate"].as_f64().unwrap() - 8.0 * mu).abs() < 1e-12);
    assert!(s["rate_source"].as_str().unwrap().contains("fit.json"));
}

#[test]
fn gronwall_rejects_both_or_neither_rate_source() {
    let both = "kind = \"gronwall\"\nseed = 1\n[numeric]\nscale = 8\nrate = 1.0\ntau_fit = \"x\"\nkappa = 1.0\nradius = 20\n";
    assert!(matches!(Config::parse(both), Err(HarnessError::Validation(_))));
    let neither = "kind = \"gronwall\"\nseed = 1\n[numeric]\nscale = 8\nkappa = 1.0\nradius = 20\n";
    assert!(matches!(Config::parse(neither), Err(HarnessError::Validation(_))));
}
