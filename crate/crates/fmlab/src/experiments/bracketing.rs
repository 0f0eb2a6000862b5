use fmlab_core::lattice::{Boundary, Region};
use fmlab_core::spectral::{
    bracketing_check, cramer_rate, large_deviation_probe, perturbation_derivative_check, DeviationReport, BRACKETING_SLACK,
};
use serde::Serialize;

use super::{dump_ensemble, seeds};
use crate::config::Config;
use crate::error::HResult;
use crate::model;
use crate::output::{num, Ctx};

/// Relative tolerance of the first-order perturbation identity.
pub const DERIVATIVE_TOL: f64 = 1e-4;

#[derive(Serialize)]
struct BracketingSummary {
    realizations: usize,
    all_hold: bool,
    worst_upper_gap: f64,
    worst_lower_gap: f64,
    worst_derivative_discrepancy: f64,
    deviation: DeviationReport,
    /// `-I(fraction · mean)`, the slope the probe should approach.
    cramer_slope: f64,
    slope_relative_error: Option<f64>,
}

/// `pieces` equal sub-boxes (or sub-strips) tiling the domain along the first axis.
fn partition(cfg: &Config, pieces: usize) -> Vec<Region> {
    let side = cfg.f64("model.side");
    let piece = side / pieces as f64;
    let dim = cfg.usize("model.dim");
    (0..pieces)
        .map(|k| {
            let c = -side / 2.0 + (k as f64 + 0.5) * piece;
            match cfg.opt_f64("model.width") {
                Some(width) => Region::Strip {
                    center: vec![c],
                    side: piece,
                    width,
                },
                None => {
                    let mut center = vec![0.0; dim];
                    center[0] = c;
                    Region::Box { center, side: piece }
                }
            }
        })
        .collect()
}

pub fn run(cfg: &Config, ctx: &mut Ctx) -> HResult<()> {
    ctx.module_default("bracketing.slack", BRACKETING_SLACK);
    ctx.module_default("bracketing.derivative_tolerance", DERIVATIVE_TOL);
    let (ens, seed) = ctx.stage("setup", |ctx| {
        let layout = ctx.seed_for("impurity layout", &[seeds::LAYOUT]);
        let ens = ctx.core(model::ensemble(cfg, layout))?;
        let seed = ctx.seed_for("disorder realizations", &[seeds::REALIZATIONS]);
        dump_ensemble(cfg, ctx, &ens, seed)?;
        Ok((ens, seed))
    })?;
    let pieces = partition(cfg, cfg.usize("numeric.pieces"));
    let n_real = cfg.usize("numeric.realizations");

    let (worst_upper, worst_lower, all_hold) = ctx.stage("bracketing", |ctx| {
        let mut rows = Vec::new();
        let (mut wu, mut wl, mut all) = (f64::NEG_INFINITY, f64::NEG_INFINITY, true);
        for k in 0..n_real as u64 {
            let v = ens.potential(&ens.realization(seed, k));
            let rep = ctx.core(bracketing_check(&ens.domain, &pieces, &v))?;
            let min_piece = rep.neumann_pieces.iter().cloned().fold(f64::INFINITY, f64::min);
            rows.push(vec![
                k.to_string(),
                num(rep.neumann_whole),
                num(rep.dirichlet_whole),
                num(min_piece),
                num(rep.upper_gap),
                num(rep.lower_gap),
                rep.holds.to_string(),
            ]);
            wu = wu.max(rep.upper_gap);
            wl = wl.max(rep.lower_gap);
            all &= rep.holds;
        }
        ctx.write_csv(
            "bracketing.csv",
            "bracketing",
            &["realization", "neumann_whole", "dirichlet_whole", "neumann_piece_min", "upper_gap", "lower_gap", "holds"],
            &rows,
        )?;
        ctx.check(
            "bracketing_inequalities",
            all && wu <= BRACKETING_SLACK && wl <= BRACKETING_SLACK,
            format!("worst gaps {wu:e}, {wl:e}"),
        );
        Ok((wu, wl, all))
    })?;

    let worst_derivative = ctx.stage("derivative", |ctx| {
        let neumann = ens.domain.with_boundary(Boundary::Robin { sigma: 0.0 });
        let steps = cfg.floats("numeric.derivative_steps");
        let mut rows = Vec::new();
        let mut worst = 0.0f64;
        for k in 0..cfg.usize("numeric.derivative_realizations") as u64 {
            let v: Vec<f64> = ens
                .potential(&ens.realization(seed, k))
                .iter()
                .zip(&ens.background)
                .map(|(p, b)| p - b)
                .collect();
            let rep = ctx.core(perturbation_derivative_check(&neumann, &ens.background, &v, &steps))?;
            worst = worst.max(rep.relative_discrepancy);
            rows.push(vec![
                k.to_string(),
                num(rep.extrapolated),
                num(rep.inner_product),
                num(rep.relative_discrepancy),
                num(rep.gap),
            ]);
        }
        ctx.write_csv(
            "derivative.csv",
            "derivative",
            &["realization", "extrapolated", "inner_product", "relative_discrepancy", "gap"],
            &rows,
        )?;
        ctx.check(
            "first_order_perturbation_identity",
            worst <= DERIVATIVE_TOL,
            format!("worst relative discrepancy {worst:e}"),
        );
        Ok(worst)
    })?;

    let (deviation, cramer_slope) = ctx.stage("large_deviation", |ctx| {
        let law = ens.law;
        let counts = cfg.usizes("numeric.deviation_counts");
        let fraction = cfg.f64("numeric.deviation_fraction");
        let s = ctx.seed_for("large deviation sampling", &[seeds::SAMPLING]);
        let rep = ctx.core(large_deviation_probe(&law, &counts, fraction, cfg.usize("numeric.deviation_samples"), s))?;
        let slope = -cramer_rate(&law, fraction * law.mean());
        let rows: Vec<Vec<String>> = rep
            .points
            .iter()
            .map(|p| {
                vec![
                    p.count.to_string(),
                    num(p.probability),
                    num(p.stderr),
                    p.hits.to_string(),
                    num(slope * p.count as f64),
                ]
            })
            .collect();
        ctx.write_csv("deviation.csv", "large_deviation", &["count", "probability", "stderr", "hits", "cramer_log"], &rows)?;
        Ok((rep, slope))
    })?;

    ctx.stage("write", |ctx| {
        let slope_relative_error = deviation.slope.map(|s| (s - cramer_slope).abs() / cramer_slope.abs());
        ctx.write_json(
            "summary.json",
            &BracketingSummary {
                realizations: n_real,
                all_hold,
                worst_upper_gap: worst_upper,
                worst_lower_gap: worst_lower,
                worst_derivative_discrepancy: worst_derivative,
                deviation,
                cramer_slope,
                slope_relative_error,
            },
        )
    })
}
