use fmlab_core::disorder::{CouplingLaw, Ensemble};
use fmlab_core::fit::{fit_decay, DecayModel};
use fmlab_core::spectral::{dynamical_correlator, CorrelatorPoint};
use serde::Serialize;

use super::{dump_ensemble, seeds};
use crate::config::Config;
use crate::error::HResult;
use crate::model;
use crate::output::{num, Ctx};

#[derive(Serialize)]
struct SeriesFit {
    ensemble: String,
    model: Option<DecayModel>,
    consistent_with_zero: Option<bool>,
    worst_excess: f64,
}

#[derive(Serialize)]
struct DynlocSummary {
    window: (f64, f64),
    base_point: Vec<f64>,
    t_max: f64,
    series: Vec<SeriesFit>,
}

pub fn run(cfg: &Config, ctx: &mut Ctx) -> HResult<()> {
    let (ens, real_seed) = ctx.stage("setup", |ctx| {
        let layout = ctx.seed_for("impurity layout", &[seeds::LAYOUT]);
        let ens = ctx.core(model::ensemble(cfg, layout))?;
        let seed = ctx.seed_for("disorder realizations", &[seeds::REALIZATIONS]);
        dump_ensemble(cfg, ctx, &ens, seed)?;
        Ok((ens, seed))
    })?;
    let w = cfg.floats("numeric.window");
    let window = (w[0], w[1]);
    let seps = cfg.floats("numeric.separations");
    let x = model::base_point(cfg, seps.iter().cloned().fold(0.0, f64::max));
    let ys: Vec<Vec<f64>> = seps
        .iter()
        .map(|r| {
            let mut y = x.clone();
            y[0] += r;
            y
        })
        .collect();
    let t_max = cfg.f64("numeric.t_max");
    let npts = cfg.usize("numeric.time_points");
    let times: Vec<f64> = (0..npts).map(|k| t_max * k as f64 / npts as f64).collect();
    let samples = cfg.usize("numeric.samples");
    let periods = cfg.f64("numeric.min_periods");

    let mut runs: Vec<(&str, Vec<CorrelatorPoint>)> = Vec::new();
    let disordered = ctx.stage("disordered", |ctx| {
        ctx.core(dynamical_correlator(&ens, window, &x, &ys, &times, samples, real_seed, periods))
    })?;
    runs.push(("disordered", disordered));
    if cfg.bool("numeric.compare_free") {
        let free = ctx.stage("free", |ctx| {
            let free_ens = ctx.core(Ensemble::new(
                ens.domain.clone(),
                ens.impurities.clone(),
                ens.profile,
                CouplingLaw::Degenerate {
                    eta_max: ens.law.eta_max(),
                    at: 0.0,
                },
                ens.background.clone(),
            ))?;
            ctx.core(dynamical_correlator(&free_ens, window, &x, &ys, &times, samples, real_seed, periods))
        })?;
        runs.push(("free", free));
    }

    ctx.stage("write", |ctx| {
        let mut rows = Vec::new();
        let mut trace = Vec::new();
        let mut series = Vec::new();
        for (name, pts) in &runs {
            for p in pts {
                rows.push(vec![
                    name.to_string(),
                    num(p.separation),
                    num(p.mean_sup),
                    num(p.stderr),
                    num(p.mean_majorant),
                    num(p.worst_excess),
                ]);
                for (t, v) in times.iter().zip(&p.profile) {
                    trace.push(vec![name.to_string(), num(p.separation), num(*t), num(*v)]);
                }
            }
            let worst = pts.iter().map(|p| p.worst_excess).fold(f64::NEG_INFINITY, f64::max);
            ctx.check(
                "sup_below_eigenfunction_majorant",
                worst <= 1e-9,
                format!("{name}: worst sup - majorant {worst:e}"),
            );
            let r: Vec<f64> = pts.iter().map(|p| p.separation).collect();
            let m: Vec<f64> = pts.iter().map(|p| p.mean_sup).collect();
            let model = fit_decay(&r, &m).ok();
            series.push(SeriesFit {
                ensemble: name.to_string(),
                consistent_with_zero: model.map(|f| f.consistent_with_zero(1.96)),
                model,
                worst_excess: worst,
            });
        }
        ctx.write_csv(
            "correlator.csv",
            "correlator",
            &["ensemble", "separation", "mean_sup", "stderr", "mean_majorant", "worst_excess"],
            &rows,
        )?;
        ctx.write_csv("correlator_time.csv", "correlator_time", &["ensemble", "separation", "t", "mean_block"], &trace)?;
        ctx.write_json(
            "summary.json",
            &DynlocSummary {
                window,
                base_point: x.clone(),
                t_max,
                series,
            },
        )
    })
}
