//! Vega-Lite plot descriptions for recognized CSV artifacts.
//!
//! Each description is a standalone JSON file with the data inlined, so any
//! Vega-Lite renderer can draw it without access to the artifact directory.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::{HResult, HarnessError};
use crate::output::{read_csv, read_schema};

pub const PLOT_DIR: &str = "plots";
const VEGA_LITE: &str = "https://vega.github.io/schema/vega-lite/v5.json";

#[derive(Debug, Default)]
pub struct PlotReport {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn records(header: &[String], rows: &[Vec<String>]) -> Vec<Value> {
    rows.iter()
        .map(|r| {
            let mut m = Map::new();
            for (h, v) in header.iter().zip(r) {
                let val = match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => json!(x),
                    _ if v.is_empty() => Value::Null,
                    _ => json!(v),
                };
                m.insert(h.clone(), val);
            }
            Value::Object(m)
        })
        .collect()
}

fn axis(field: &str, title: &str, scale: &str) -> Value {
    json!({"field": field, "type": "quantitative", "title": title, "scale": {"type": scale}})
}

fn color(field: &str) -> Value {
    json!({"field": field, "type": "nominal"})
}

/// Points on `x`/`y` with the given scales, optionally colored.
fn scatter(title: &str, data: Vec<Value>, x: Value, y: Value, by: Option<&str>) -> Value {
    let mut enc = json!({"x": x, "y": y});
    if let Some(f) = by {
        enc["color"] = color(f);
    }
    json!({
        "$schema": VEGA_LITE,
        "title": title,
        "data": {"values": data},
        "mark": {"type": "line", "point": true},
        "encoding": enc,
    })
}

/// Decay profile in log-linear axes with the exponential fit from `fit.json`.
fn decay_profile(dir: &Path, data: Vec<Value>) -> Value {
    let x = axis("separation", "|x - y|", "linear");
    let y = axis("mean", "E‖χx R χy‖^s", "log");
    let mut layers = vec![json!({
        "mark": {"type": "point", "filled": true},
        "encoding": {"x": x, "y": y},
    })];
    let fit = std::fs::read_to_string(dir.join("fit.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<Value>(&t).ok())
        .and_then(|v| v.get("model").cloned());
    if let Some(m) = fit {
        let (c, mu) = (m["prefactor"].as_f64().unwrap_or(0.0), m["rate"].as_f64().unwrap_or(0.0));
        layers.push(json!({
            "transform": [{"calculate": format!("{c} * exp(-{mu} * datum.separation)"), "as": "fit"}],
            "mark": {"type": "line", "strokeDash": [4, 2]},
            "encoding": {"x": x, "y": {"field": "fit", "type": "quantitative", "scale": {"type": "log"}}},
        }));
    }
    json!({
        "$schema": VEGA_LITE,
        "title": "fractional moment decay",
        "data": {"values": data},
        "layer": layers,
    })
}

/// Probability against L in log-log axes with Wilson CI bars.
fn ils(data: Vec<Value>) -> Value {
    let x = axis("length", "L", "log");
    json!({
        "$schema": VEGA_LITE,
        "title": "initial length scale probability",
        "data": {"values": data},
        "layer": [
            {
                "mark": {"type": "line", "point": true},
                "encoding": {"x": x, "y": axis("estimate", "P(E1 <= E0 + L^-m)", "log"), "color": color("width")},
            },
            {
                "mark": "errorbar",
                "encoding": {
                    "x": x,
                    "y": {"field": "ci_lo", "type": "quantitative", "scale": {"type": "log"}},
                    "y2": {"field": "ci_hi"},
                    "color": color("width"),
                },
            },
        ],
    })
}

fn describe(schema: &str, dir: &Path, data: Vec<Value>) -> Option<Value> {
    Some(match schema {
        "decay_profile" => decay_profile(dir, data),
        "moment_grid" => scatter(
            "fractional moments over the energy grid",
            data,
            axis("separation", "|x - y|", "linear"),
            axis("mean", "E‖χx R χy‖^s", "log"),
            Some("energy"),
        ),
        "ils_sweep" => ils(data),
        "ct_profile" => scatter(
            "resolvent decay below the spectrum",
            data,
            axis("separation", "|x - y|", "linear"),
            axis("operator_norm", "‖χx R χy‖", "log"),
            Some("gap"),
        ),
        "weak_l1_tail" => scatter(
            "exceedance measure",
            data,
            axis("threshold", "t", "log"),
            axis("measure", "|{norm > t}|", "log"),
            Some("instance"),
        ),
        "workhorse" => scatter(
            "two-coupling averages",
            data,
            axis("instance", "instance", "linear"),
            axis("ratio", "average / weight", "linear"),
            None,
        ),
        "gronwall_envelope" => scatter(
            "recursion envelope",
            data,
            axis("r", "|x - y|", "linear"),
            axis("sup_tau", "sup τ", "log"),
            None,
        ),
        "kernel_norms" => scatter("kernel norms", data, axis("mu", "μ", "log"), axis("x_norm", "‖A‖_X", "log"), None),
        "correlator" => scatter(
            "propagator correlator",
            data,
            axis("separation", "|x - y|", "linear"),
            axis("mean_sup", "E sup_t ‖χx e^{-itH} P χy‖", "log"),
            Some("ensemble"),
        ),
        "correlator_time" => scatter(
            "correlator in time",
            data,
            axis("t", "t", "linear"),
            axis("mean_block", "E ‖χx e^{-itH} P χy‖", "log"),
            Some("separation"),
        ),
        "sli" => scatter(
            "factorization ratios",
            data,
            axis("realization", "realization", "linear"),
            axis("ratio", "ratio", "log"),
            None,
        ),
        "bracketing" => scatter(
            "bracketing gaps",
            data,
            axis("realization", "realization", "linear"),
            axis("lower_gap", "min piece - whole (Neumann)", "linear"),
            None,
        ),
        "derivative" => scatter(
            "first-order perturbation identity",
            data,
            axis("realization", "realization", "linear"),
            axis("relative_discrepancy", "relative discrepancy", "log"),
            None,
        ),
        "large_deviation" => scatter(
            "large deviation probability",
            data,
            axis("count", "n", "linear"),
            axis("probability", "P(mean <= threshold)", "log"),
            None,
        ),
        "geometry_counts" => scatter(
            "impurity counts per window",
            data,
            axis("length", "L", "log"),
            axis("mean", "mean count", "log"),
            None,
        ),
        _ => return None,
    })
}

pub fn emit_plots(dir: &Path) -> HResult<PlotReport> {
    let mut report = PlotReport::default();
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut csvs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    if csvs.is_empty() {
        let msg = format!("{}: no CSV artifacts, nothing to plot", dir.display());
        log::warn!("{msg}");
        report.warnings.push(msg);
        return Ok(report);
    }
    let out = dir.join(PLOT_DIR);
    for path in csvs {
        let name = path.file_name().unwrap_or_default().to_string_lossy().to_string();
        let Some((schema, version)) = read_schema(&path) else {
            let msg = format!("{name}: no schema line, skipped");
            log::warn!("{msg}");
            report.warnings.push(msg);
            continue;
        };
        let (header, rows) = read_csv(&path)?;
        let Some(spec) = (version == 1).then(|| describe(&schema, dir, records(&header, &rows))).flatten() else {
            let msg = format!("{name}: unrecognized schema {schema} v{version}, skipped");
            log::warn!("{msg}");
            report.warnings.push(msg);
            continue;
        };
        std::fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;
        let target = out.join(format!("{}.vl.json", path.file_stem().unwrap_or_default().to_string_lossy()));
        let mut text = serde_json::to_string_pretty(&spec).map_err(|e| HarnessError::Other(e.to_string()))?;
        text.push('\n');
        std::fs::write(&target, text).map_err(|e| HarnessError::io(&target, e))?;
        report.written.push(target);
    }
    Ok(report)
}
