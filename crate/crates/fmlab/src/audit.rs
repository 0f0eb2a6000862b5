//! `audit`: re-check an artifact directory without rerunning the experiment.
//!
//! Verifies the manifest checksums, the per-schema invariants of every
//! recognized CSV, and recomputes the impurity geometry report when the
//! layout and probe were saved.

use std::collections::HashMap;
use std::path::Path;

use fmlab_core::disorder::{verify_geometry, GeometryProbe, GeometryReport, ImpuritySet};
use fmlab_core::resolvent::SOLVE_TOL;
use fmlab_core::spectral::BRACKETING_SLACK;

use crate::error::{HResult, HarnessError};
use crate::experiments::DERIVATIVE_TOL;
use crate::output::{read_csv, read_schema, sha256_file, Check, Manifest, MANIFEST};

#[derive(Debug, Default)]
pub struct AuditReport {
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, file: &str, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            stage: file.to_string(),
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }
}

type Row<'a> = HashMap<&'a str, &'a str>;

fn f(row: &Row, key: &str) -> f64 {
    row.get(key).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)
}

/// `(name, holds)` per row for a schema, or `None` for schemas without row checks.
fn row_check(schema: &str, row: &Row) -> Option<(&'static str, bool)> {
    Some(match schema {
        "decay_profile" | "moment_grid" => (
            "moments_nonnegative_and_ordered",
            f(row, "mean") >= 0.0 && f(row, "stderr") >= 0.0 && f(row, "hs_mean") >= f(row, "mean") * (1.0 - 1e-12),
        ),
        "ct_profile" => (
            "solve_accuracy_and_norm_order",
            f(row, "residual") <= SOLVE_TOL && f(row, "hs_norm") >= f(row, "operator_norm") * (1.0 - 1e-12),
        ),
        "ils_sweep" => (
            "interval_contains_estimate",
            0.0 <= f(row, "ci_lo")
                && f(row, "ci_lo") <= f(row, "estimate")
                && f(row, "estimate") <= f(row, "ci_hi")
                && f(row, "ci_hi") <= 1.0
                && f(row, "successes") <= f(row, "trials"),
        ),
        "weak_l1_tail" => ("measure_in_unit_interval", (0.0..=1.0).contains(&f(row, "measure"))),
        "workhorse" => ("average_nonnegative", f(row, "value") >= 0.0 && f(row, "ratio").is_finite()),
        "gronwall_envelope" => ("envelope_nonnegative", f(row, "sup_tau") >= 0.0),
        "kernel_norms" => (
            "linf_bound_above_closed_form",
            f(row, "linf_norm") >= f(row, "linf_closed_form") * (1.0 - 1e-12),
        ),
        "correlator" => (
            "sup_below_eigenfunction_majorant",
            f(row, "worst_excess") <= 1e-9 && f(row, "mean_sup") <= f(row, "mean_majorant") + 1e-9,
        ),
        "sli" => ("ratio_finite", f(row, "ratio").is_finite() && f(row, "ratio") >= 0.0),
        "bracketing" => (
            "bracketing_inequalities",
            f(row, "upper_gap") <= BRACKETING_SLACK && f(row, "lower_gap") <= BRACKETING_SLACK,
        ),
        "derivative" => ("first_order_perturbation_identity", f(row, "relative_discrepancy") <= DERIVATIVE_TOL),
        "large_deviation" => ("probability_in_unit_interval", (0.0..=1.0).contains(&f(row, "probability"))),
        "geometry_counts" => ("count_order", f(row, "min") <= f(row, "mean") && f(row, "mean") <= f(row, "max")),
        _ => return None,
    })
}

/// Checks across rows: monotone tails per instance.
fn table_checks(schema: &str, rows: &[Row]) -> Vec<(&'static str, bool, String)> {
    if schema != "weak_l1_tail" {
        return Vec::new();
    }
    let mut by_instance: HashMap<&str, Vec<(f64, f64)>> = HashMap::new();
    for r in rows {
        by_instance.entry(r.get("instance").copied().unwrap_or("")).or_default().push((f(r, "threshold"), f(r, "measure")));
    }
    let mut keys: Vec<_> = by_instance.keys().copied().collect();
    keys.sort();
    keys.into_iter()
        .map(|k| {
            let mut v = by_instance[k].clone();
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            let ok = v.windows(2).all(|w| w[1].1 <= w[0].1);
            ("measure_non_increasing", ok, format!("instance {k}"))
        })
        .collect()
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> HResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Other(format!("{}: {e}", path.display())))
}

pub fn audit(dir: &Path) -> HResult<AuditReport> {
    let mut rep = AuditReport::default();
    if !dir.is_dir() {
        return Err(HarnessError::Validation(vec![format!("{}: not a directory", dir.display())]));
    }
    if dir.join(MANIFEST).exists() {
        let m = Manifest::load(dir)?;
        for file in &m.files {
            let p = dir.join(&file.path);
            match sha256_file(&p) {
                Ok(sum) => rep.push(&file.path, "checksum_matches_manifest", sum == file.sha256, sum.clone()),
                Err(_) => rep.push(&file.path, "file_present", false, "listed in manifest but missing"),
            }
        }
        rep.push(
            MANIFEST,
            "run_status",
            m.status == "ok",
            match &m.failed_stage {
                Some(s) => format!("{} at stage {s}", m.status),
                None => m.status.clone(),
            },
        );
    } else {
        rep.warnings.push(format!("{}: no manifest, checksums not verified", dir.display()));
    }

    let mut csvs: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    for path in csvs {
        let name = path.file_name().unwrap_or_default().to_string_lossy().to_string();
        let Some((schema, _)) = read_schema(&path) else {
            rep.warnings.push(format!("{name}: no schema line, skipped"));
            continue;
        };
        let (header, raw) = read_csv(&path)?;
        let rows: Vec<Row> = raw
            .iter()
            .map(|r| header.iter().map(String::as_str).zip(r.iter().map(String::as_str)).collect())
            .collect();
        let mut bad = Vec::new();
        let mut label = None;
        for (i, row) in rows.iter().enumerate() {
            match row_check(&schema, row) {
                Some((n, ok)) => {
                    label = Some(n);
                    if !ok {
                        bad.push(i);
                    }
                }
                None => break,
            }
        }
        match label {
            Some(n) => rep.push(&name, n, bad.is_empty(), format!("{} rows, failing {:?}", rows.len(), bad)),
            None if rows.is_empty() => rep.warnings.push(format!("{name}: no rows")),
            None => rep.warnings.push(format!("{name}: schema {schema} has no row checks")),
        }
        for (n, ok, detail) in table_checks(&schema, &rows) {
            rep.push(&name, n, ok, detail);
        }
    }

    let (imp, probe, saved) = (dir.join("impurities.json"), dir.join("probe.json"), dir.join("report.json"));
    if imp.exists() && probe.exists() {
        let set: ImpuritySet = load_json(&imp)?;
        let probe: GeometryProbe = load_json(&probe)?;
        match verify_geometry(&set, &probe) {
            Ok(fresh) => {
                rep.push(
                    "impurities.json",
                    "declared_geometry_constants",
                    fresh.violations.is_empty(),
                    fresh.violations.join("; "),
                );
                if saved.exists() {
                    let old: GeometryReport = load_json(&saved)?;
                    rep.push("report.json", "geometry_report_reproduced", old == fresh, "recomputed from impurities.json");
                }
            }
            Err(e) => rep.push("impurities.json", "geometry_recomputation", false, e.to_string()),
        }
    }
    Ok(rep)
}
