use fmlab_core::fit::DecayModel;
use fmlab_core::lattice::assemble_hamiltonian;
use fmlab_core::resolvent::{combes_thomas_fit, CombesThomasFit, SOLVE_TOL};
use fmlab_core::spectral::ground_energy;
use serde::Serialize;

use crate::config::Config;
use crate::error::HResult;
use crate::model;
use crate::output::{num, Ctx};

pub(crate) const HEADER: [&str; 7] = ["series", "gap", "energy", "separation", "operator_norm", "hs_norm", "residual"];

#[derive(Serialize)]
struct GapPoint {
    gap: f64,
    energy: f64,
    model: DecayModel,
}

#[derive(Serialize)]
struct CtSummary {
    edge: f64,
    energy: f64,
    eps: f64,
    model: DecayModel,
    /// Exact decay rate of the one-dimensional lattice Green's function.
    reference_rate: Option<f64>,
    relative_error: Option<f64>,
    sweep: Vec<GapPoint>,
    /// `rate(η_{k+1}) / rate(η_k)` next to `sqrt(η_{k+1} / η_k)`.
    rate_ratios: Vec<(f64, f64)>,
}

fn rows(series: &str, gap: f64, energy: f64, fit: &CombesThomasFit) -> Vec<Vec<String>> {
    fit.profile
        .iter()
        .map(|p| {
            vec![
                series.to_string(),
                num(gap),
                num(energy),
                num(p.separation),
                num(p.block.operator_norm),
                num(p.block.hs_norm),
                num(p.block.residual),
            ]
        })
        .collect()
}

pub fn run(cfg: &Config, ctx: &mut Ctx) -> HResult<()> {
    let (domain, h, edge) = ctx.stage("setup", |ctx| {
        let d = ctx.core(model::domain(cfg))?;
        let h = ctx.core(assemble_hamiltonian(&d, &vec![0.0; d.len()]))?;
        let edge = ctx.core(ground_energy(&h))?;
        ctx.write_json("domain.json", &d)?;
        Ok((d, h, edge))
    })?;
    let eps = cfg.f64("numeric.eps");
    let energy = cfg.f64("numeric.energy");
    let seps = cfg.floats("numeric.separations");
    let gap_seps = cfg.opt_floats("numeric.gap_separations").unwrap_or_else(|| seps.clone());
    let r_max = seps.iter().chain(&gap_seps).cloned().fold(0.0, f64::max);
    let x = model::base_point(cfg, r_max);

    let mut all_rows = Vec::new();
    let mut worst_residual = 0.0f64;
    let mut worst_order = f64::NEG_INFINITY;
    let mut note = |fit: &CombesThomasFit| {
        for p in &fit.profile {
            worst_residual = worst_residual.max(p.block.residual);
            worst_order = worst_order.max(p.block.operator_norm - p.block.hs_norm);
        }
    };

    let fixed = ctx.stage("fixed_energy", |ctx| ctx.core(combes_thomas_fit(&h, &domain, energy, eps, edge, &x, &seps)))?;
    note(&fixed);
    all_rows.extend(rows("fixed", edge - energy, energy, &fixed));

    let gaps = cfg.floats("numeric.gaps");
    let sweep = ctx.stage("gap_sweep", |ctx| {
        let mut out = Vec::new();
        for &g in &gaps {
            let e = edge - g;
            let fit = ctx.core(combes_thomas_fit(&h, &domain, e, eps, edge, &x, &gap_seps))?;
            out.push((g, e, fit));
        }
        Ok(out)
    })?;
    for (g, e, fit) in &sweep {
        note(fit);
        all_rows.extend(rows("sweep", *g, *e, fit));
    }

    ctx.stage("write", |ctx| {
        ctx.check(
            "solve_backward_error",
            worst_residual <= SOLVE_TOL,
            format!("worst backward error {worst_residual:e}"),
        );
        ctx.check(
            "hilbert_schmidt_dominates_operator_norm",
            worst_order <= 1e-12,
            format!("max(op - hs) = {worst_order:e}"),
        );
        ctx.write_csv("ct.csv", "ct_profile", &HEADER, &all_rows)?;
        let h_grid = domain.grid.h;
        let reference_rate = (domain.grid.dim == 1).then(|| (1.0 - energy * h_grid * h_grid / 2.0).acosh() / h_grid);
        let mut ordered: Vec<&(f64, f64, CombesThomasFit)> = sweep.iter().collect();
        ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
        let rate_ratios = ordered
            .windows(2)
            .map(|w| (w[1].2.model.rate / w[0].2.model.rate, (w[1].0 / w[0].0).sqrt()))
            .collect();
        let summary = CtSummary {
            edge,
            energy,
            eps,
            model: fixed.model,
            reference_rate,
            relative_error: reference_rate.map(|r| (fixed.model.rate - r).abs() / r),
            sweep: sweep
                .iter()
                .map(|(g, e, f)| GapPoint {
                    gap: *g,
                    energy: *e,
                    model: f.model,
                })
                .collect(),
            rate_ratios,
        };
        ctx.write_json("fit.json", &summary)
    })
}
