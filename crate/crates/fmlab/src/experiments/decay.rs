use fmlab_core::disorder::{CouplingLaw, Ensemble};
use fmlab_core::fit::DecayModel;
use fmlab_core::moments::{moment_decay_profile, MomentEstimate};
use fmlab_core::resolvent::combes_thomas_fit;
use fmlab_core::spectral::ground_energy;
use serde::Serialize;

use super::{dump_ensemble, seeds, validation};
use crate::config::Config;
use crate::error::HResult;
use crate::model;
use crate::output::{num, Ctx};

#[derive(Serialize)]
struct FreeComparison {
    energy: f64,
    eps: f64,
    moment_rate: f64,
    moment_rate_over_s: f64,
    combes_thomas_rate: f64,
    relative_difference: f64,
}

#[derive(Serialize)]
struct DecayFit {
    /// Bottom of the unperturbed spectrum in infinite volume.
    e0: f64,
    e0_finite_volume: f64,
    /// Finite-volume ground energy of the fully covered operator; an upper
    /// bound for the infinite-volume value.
    e_full: f64,
    gap: f64,
    window: (f64, f64),
    grid: Vec<(f64, f64)>,
    s: f64,
    base_point: Vec<f64>,
    model: DecayModel,
    cap: Option<f64>,
    within_cap: bool,
    free_comparison: Option<FreeComparison>,
}

fn row(m: &MomentEstimate) -> Vec<String> {
    vec![
        num(m.separation),
        num(m.energy),
        num(m.eps),
        num(m.mean),
        num(m.stderr),
        num(m.hs_mean),
        num(m.hs_stderr),
        m.samples.to_string(),
    ]
}

const HEADER: [&str; 8] = ["separation", "energy", "eps", "mean", "stderr", "hs_mean", "hs_stderr", "samples"];

pub fn run(cfg: &Config, ctx: &mut Ctx) -> HResult<()> {
    let (ens, e0, e0_fv, e_full, real_seed) = ctx.stage("setup", |ctx| {
        let layout = ctx.seed_for("impurity layout", &[seeds::LAYOUT]);
        let ens = ctx.core(model::ensemble(cfg, layout))?;
        let e0 = cfg.f64("model.background");
        let e0_fv = ctx.core(ens.background_hamiltonian().and_then(|h| ground_energy(&h)))?;
        let e_full = ctx.core(ens.full_hamiltonian().and_then(|h| ground_energy(&h)))?;
        let delta = cfg.f64("numeric.delta");
        if e0 + delta >= e_full {
            return Err(validation(format!(
                "numeric.delta = {delta}: window [E0, E0 + delta] must stay below E_F = {e_full} (E0 = {e0})"
            )));
        }
        let real_seed = ctx.seed_for("disorder realizations", &[seeds::REALIZATIONS]);
        dump_ensemble(cfg, ctx, &ens, real_seed)?;
        Ok((ens, e0, e0_fv, e_full, real_seed))
    })?;

    let s = cfg.f64("numeric.s");
    let seps = cfg.floats("numeric.separations");
    let r_max = seps.iter().cloned().fold(0.0, f64::max);
    let x = model::base_point(cfg, r_max);
    let delta = cfg.f64("numeric.delta");
    let npts = cfg.usize("numeric.energy_points");
    let eps_list = cfg.floats("numeric.eps");
    let energies: Vec<f64> = (0..npts)
        .map(|k| if npts == 1 { e0 } else { e0 + delta * k as f64 / (npts - 1) as f64 })
        .collect();
    let grid: Vec<(f64, f64)> = energies.iter().flat_map(|&e| eps_list.iter().map(move |&eps| (e, eps))).collect();
    let cap = cfg.opt_f64("numeric.cap");

    let profile = ctx.stage("moments", |ctx| {
        let samples = cfg.usize("numeric.samples");
        let p = ctx.core(moment_decay_profile(&ens, &grid, s, &x, &seps, samples, real_seed, cap))?;
        let rows: Vec<_> = p.sup.iter().map(row).collect();
        ctx.write_csv("profile.csv", "decay_profile", &HEADER, &rows)?;
        let all: Vec<_> = p.grid.iter().flatten().map(row).collect();
        ctx.write_csv("grid.csv", "moment_grid", &HEADER, &all)?;
        let worst = p
            .grid
            .iter()
            .flatten()
            .map(|m| m.mean - m.hs_mean)
            .fold(f64::NEG_INFINITY, f64::max);
        ctx.check(
            "hilbert_schmidt_dominates_operator_norm",
            worst <= 1e-12,
            format!("max(mean - hs_mean) = {worst:e}"),
        );
        if let Some(c) = cap {
            ctx.check("moments_within_cap", p.within_cap, format!("cap {c}"));
        }
        Ok(p)
    })?;

    let free_comparison = if cfg.bool("numeric.free_comparison") {
        Some(ctx.stage("free_comparison", |ctx| free_comparison(ctx, &ens, &grid, s, &x, &seps, e_full))?)
    } else {
        None
    };

    ctx.stage("write_fit", |ctx| {
        let fit = DecayFit {
            e0,
            e0_finite_volume: e0_fv,
            e_full,
            gap: e_full - e0,
            window: (e0, e0 + delta),
            grid: grid.clone(),
            s,
            base_point: x.clone(),
            model: profile.model,
            cap,
            within_cap: profile.within_cap,
            free_comparison,
        };
        ctx.write_json("fit.json", &fit)
    })
}

/// The same pipeline on `H_F` (every coupling at `eta_max`) against a
/// direct Combes-Thomas fit of its resolvent at the lowest grid energy.
fn free_comparison(
    ctx: &mut Ctx,
    ens: &Ensemble,
    grid: &[(f64, f64)],
    s: f64,
    x: &[f64],
    seps: &[f64],
    e_full: f64,
) -> HResult<FreeComparison> {
    let m = ens.law.eta_max();
    let free = ctx.core(Ensemble::new(
        ens.domain.clone(),
        ens.impurities.clone(),
        ens.profile,
        CouplingLaw::Degenerate { eta_max: m, at: m },
        ens.background.clone(),
    ))?;
    let (energy, eps) = grid[0];
    const FREE_SAMPLES: usize = 100;
    ctx.module_default("free_comparison.samples", FREE_SAMPLES);
    let seed = ctx.seed_for("free pipeline", &[seeds::FREE]);
    let p = ctx.core(moment_decay_profile(&free, &[(energy, eps)], s, x, seps, FREE_SAMPLES, seed, None))?;
    let h = ctx.core(free.full_hamiltonian())?;
    let ct = ctx.core(combes_thomas_fit(&h, &free.domain, energy, eps, e_full, x, seps))?;
    let rows: Vec<Vec<String>> = ct
        .profile
        .iter()
        .map(|pt| {
            vec![
                "full".into(),
                num(e_full - energy),
                num(energy),
                num(pt.separation),
                num(pt.block.operator_norm),
                num(pt.block.hs_norm),
                num(pt.block.residual),
            ]
        })
        .collect();
    ctx.write_csv("free_ct.csv", "ct_profile", &super::ct::HEADER, &rows)?;
    let over_s = p.model.rate / s;
    let rel = (over_s - ct.model.rate).abs() / ct.model.rate.abs();
    // Deterministic couplings: the moment is the block norm to the power s,
    // so the two fits agree up to rounding.
    ctx.check(
        "free_pipeline_matches_resolvent_fit",
        rel <= 1e-6,
        format!("moment rate / s = {over_s}, resolvent rate = {}", ct.model.rate),
    );
    Ok(FreeComparison {
        energy,
        eps,
        moment_rate: p.model.rate,
        moment_rate_over_s: over_s,
        combes_thomas_rate: ct.model.rate,
        relative_difference: rel,
    })
}
