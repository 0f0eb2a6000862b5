use fmlab_core::resolvent::{check_sli, SliReport};

use super::{dump_ensemble, seeds};
use crate::config::Config;
use crate::error::HResult;
use crate::model;
use crate::output::{num, Ctx};

pub fn run(cfg: &Config, ctx: &mut Ctx) -> HResult<()> {
    let (ens, seed) = ctx.stage("setup", |ctx| {
        let layout = ctx.seed_for("impurity layout", &[seeds::LAYOUT]);
        let ens = ctx.core(model::ensemble(cfg, layout))?;
        let seed = ctx.seed_for("disorder realizations", &[seeds::REALIZATIONS]);
        dump_ensemble(cfg, ctx, &ens, seed)?;
        Ok((ens, seed))
    })?;
    let bound = cfg.opt_f64("numeric.bound");
    let report: SliReport = ctx.stage("factorization", |ctx| {
        ctx.core(check_sli(
            &ens,
            cfg.f64("numeric.length"),
            &cfg.floats("numeric.x"),
            &cfg.floats("numeric.y"),
            cfg.f64("numeric.energy"),
            cfg.f64("numeric.eps"),
            cfg.usize("numeric.samples"),
            seed,
            bound,
        ))
    })?;
    ctx.stage("write", |ctx| {
        let rows: Vec<Vec<String>> = report.ratios.iter().enumerate().map(|(k, r)| vec![k.to_string(), num(*r)]).collect();
        ctx.write_csv("sli.csv", "sli", &["realization", "ratio"], &rows)?;
        ctx.check(
            "ratios_finite",
            report.ratios.iter().all(|r| r.is_finite() && *r >= 0.0),
            format!("max ratio {}", report.max_ratio),
        );
        if let Some(b) = bound {
            ctx.check(
                "ratio_within_declared_bound",
                report.violations == 0,
                format!("{} of {} above {b}", report.violations, report.ratios.len()),
            );
        }
        ctx.write_json("summary.json", &report)
    })
}
