use fmlab_core::disorder::{verify_geometry, GeometryProbe, Interval, WindowShape};

use super::seeds;
use crate::config::Config;
use crate::error::HResult;
use crate::model;
use crate::output::{num, Ctx};

pub fn run(cfg: &Config, ctx: &mut Ctx) -> HResult<()> {
    let dim = cfg.usize("model.dim");
    let lengths = cfg.floats("numeric.lengths");
    let l_max = lengths.iter().cloned().fold(0.0, f64::max);
    let (set, box_bounds) = ctx.stage("layout", |ctx| {
        let d = ctx.core(model::domain(cfg))?;
        let b = model::bounds(&d, 0.0);
        let seed = ctx.seed_for("impurity layout", &[seeds::LAYOUT]);
        let set = ctx.core(model::impurities(cfg, &b, seed))?;
        ctx.write_json("impurities.json", &set)?;
        Ok((set, b))
    })?;
    let surface = cfg.str("model.layout") == "surface";
    let probe = GeometryProbe {
        lengths: lengths.clone(),
        base: vec![0.0; dim],
        shifts: cfg.usize("numeric.shifts"),
        window: if surface {
            WindowShape::Surface {
                d1: cfg.usize("model.surface_dim"),
                r_perp: cfg.f64("model.r_perp"),
            }
        } else {
            WindowShape::Cube
        },
        // Scan well inside the populated box so the edge does not inflate the radius.
        dense_box: (cfg.bool("numeric.dense_scan") && !surface).then(|| {
            box_bounds
                .iter()
                .map(|b| Interval::new(b.lo + l_max / 4.0, b.hi - l_max / 4.0))
                .collect()
        }),
        surface_constant: cfg.opt_f64("numeric.surface_constant"),
    };
    let report = ctx.stage("verify", |ctx| ctx.core(verify_geometry(&set, &probe)))?;
    ctx.stage("write", |ctx| {
        ctx.write_json("probe.json", &probe)?;
        let rows: Vec<Vec<String>> = report
            .counts
            .iter()
            .map(|c| {
                vec![
                    num(c.length),
                    c.windows.to_string(),
                    c.min.to_string(),
                    c.max.to_string(),
                    num(c.mean),
                ]
            })
            .collect();
        ctx.write_csv("geometry.csv", "geometry_counts", &["length", "windows", "min", "max", "mean"], &rows)?;
        ctx.check(
            "declared_geometry_constants",
            report.violations.is_empty(),
            if report.violations.is_empty() {
                format!("{} points", set.len())
            } else {
                report.violations.join("; ")
            },
        );
        ctx.write_json("report.json", &report)
    })
}
