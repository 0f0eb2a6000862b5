use fmlab_core::lattice::{assemble_hamiltonian, build_domain, Boundary, Region};
use fmlab_core::spectral::{ground_energy, ils_probability, ProbabilityEstimate};
use serde::Serialize;

use super::seeds;
use crate::config::Config;
use crate::error::HResult;
use crate::model;
use crate::output::{num, Ctx};

#[derive(Serialize)]
struct Series {
    width: Option<f64>,
    estimates: Vec<ProbabilityEstimate>,
    strictly_decreasing: bool,
    /// Upper CI bound at the largest L below the lower bound at the smallest.
    ci_separated: bool,
}

#[derive(Serialize)]
struct IlsSummary {
    m: f64,
    e0: Vec<(f64, f64)>,
    series: Vec<Series>,
    /// `estimate(2W) - estimate(W)` per length, strips only.
    width_differences: Vec<(f64, f64)>,
}

/// Centre putting exactly `L/h` sites on an axis for integer `L/h`.
fn center(length: f64, h: f64) -> f64 {
    let n = (length / h).round() as i64;
    if n % 2 == 0 {
        h / 2.0
    } else {
        0.0
    }
}

pub fn run(cfg: &Config, ctx: &mut Ctx) -> HResult<()> {
    let lengths = cfg.floats("numeric.lengths");
    let m = cfg.f64("numeric.m");
    let samples = cfg.usize("numeric.samples");
    let dim = cfg.usize("model.dim");
    let widths: Vec<Option<f64>> = match cfg.opt_f64("numeric.strip_width") {
        Some(w) if dim >= 2 => vec![Some(w), Some(2.0 * w)],
        _ => vec![None],
    };
    let (layout, real_seed) = ctx.stage("setup", |ctx| {
        Ok((
            ctx.seed_for("impurity layout", &[seeds::LAYOUT]),
            ctx.seed_for("disorder realizations", &[seeds::REALIZATIONS]),
        ))
    })?;
    ctx.module_default("ils.boundary", "neumann");
    ctx.module_default("ils.ci_z", 1.959_963_984_540_054);

    let results = ctx.stage("probabilities", |ctx| {
        let grid = ctx.core(model::grid(cfg))?;
        let mut out = Vec::new();
        let mut e0s = Vec::new();
        for &w in &widths {
            let mut series = Vec::new();
            for &l in &lengths {
                let c = center(l, grid.h);
                let region = match w {
                    Some(width) => Region::Strip {
                        center: vec![c],
                        side: l,
                        width,
                    },
                    None => Region::cube(&vec![c; dim], l),
                };
                let d = ctx.core(build_domain(grid, region, Boundary::Robin { sigma: 0.0 }))?;
                let bg = vec![cfg.f64("model.background"); d.len()];
                let e0 = ctx.core(assemble_hamiltonian(&d, &bg).and_then(|h| ground_energy(&h)))?;
                if w == widths[0] {
                    e0s.push((l, e0));
                }
                let ens = ctx.core(model::ensemble_on(cfg, d, layout))?;
                series.push(ctx.core(ils_probability(&ens, e0, l, m, samples, real_seed))?);
            }
            out.push((w, series));
        }
        Ok((out, e0s))
    })?;

    ctx.stage("write", |ctx| {
        let (series, e0) = results;
        let mut rows = Vec::new();
        for (w, est) in &series {
            for p in est {
                rows.push(vec![
                    num(p.length),
                    w.map(num).unwrap_or_default(),
                    num(p.window.1 - p.window.0),
                    p.trials.to_string(),
                    p.successes.to_string(),
                    num(p.estimate),
                    num(p.ci.0),
                    num(p.ci.1),
                ]);
                ctx.check(
                    "interval_contains_estimate",
                    p.ci.0 <= p.estimate && p.estimate <= p.ci.1 && p.successes <= p.trials,
                    format!("L = {}: {} in [{}, {}]", p.length, p.estimate, p.ci.0, p.ci.1),
                );
            }
        }
        ctx.write_csv(
            "ils.csv",
            "ils_sweep",
            &["length", "width", "delta", "trials", "successes", "estimate", "ci_lo", "ci_hi"],
            &rows,
        )?;
        let width_differences = if series.len() == 2 {
            series[0]
                .1
                .iter()
                .zip(&series[1].1)
                .map(|(a, b)| (a.length, b.estimate - a.estimate))
                .collect()
        } else {
            Vec::new()
        };
        let summary = IlsSummary {
            m,
            e0,
            series: series
                .into_iter()
                .map(|(width, estimates)| {
                    let mut by_len: Vec<&ProbabilityEstimate> = estimates.iter().collect();
                    by_len.sort_by(|a, b| a.length.total_cmp(&b.length));
                    let strictly_decreasing = by_len.windows(2).all(|w| w[1].estimate < w[0].estimate);
                    let ci_separated = by_len.last().unwrap().ci.1 < by_len[0].ci.0;
                    Series {
                        width,
                        strictly_decreasing,
                        ci_separated,
                        estimates,
                    }
                })
                .collect(),
            width_differences,
        };
        ctx.write_json("summary.json", &summary)
    })
}
