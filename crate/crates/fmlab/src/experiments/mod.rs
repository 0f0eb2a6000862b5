//! One runner per experiment kind. Each runner works inside stages of a
//! [`Ctx`], writes its data files and records invariant checks.

use fmlab_core::disorder::Ensemble;

use crate::config::Config;
use crate::error::{HResult, HarnessError};
use crate::output::Ctx;

mod bracketing;
mod ct;
mod decay;
mod dynloc;
mod geometry;
mod gronwall;
mod ils;
mod sli;
mod workhorse;

pub use bracketing::DERIVATIVE_TOL;

/// Seed tree paths below the master seed.
pub(crate) mod seeds {
    pub const LAYOUT: u64 = 1;
    pub const REALIZATIONS: u64 = 2;
    pub const INSTANCES: u64 = 3;
    pub const SAMPLING: u64 = 4;
    pub const FREE: u64 = 5;
}

pub fn execute(cfg: &Config, ctx: &mut Ctx) -> HResult<()> {
    match cfg.kind.as_str() {
        "decay_profile" => decay::run(cfg, ctx),
        "ils_sweep" => ils::run(cfg, ctx),
        "ct_scaling" => ct::run(cfg, ctx),
        "workhorse" => workhorse::run_workhorse(cfg, ctx),
        "weak_l1" => workhorse::run_weak_l1(cfg, ctx),
        "gronwall" => gronwall::run(cfg, ctx),
        "dynloc" => dynloc::run(cfg, ctx),
        "sli" => sli::run(cfg, ctx),
        "bracketing" => bracketing::run(cfg, ctx),
        "geometry_audit" => geometry::run(cfg, ctx),
        other => Err(HarnessError::Validation(vec![format!("kind = \"{other}\": unknown")])),
    }
}

/// `domain.json` and, if requested, the leading realizations.
pub(crate) fn dump_ensemble(cfg: &Config, ctx: &mut Ctx, ens: &Ensemble, seed: u64) -> HResult<()> {
    ctx.write_json("domain.json", &ens.domain)?;
    let k = cfg.usize("output.realizations");
    if k > 0 {
        let reals: Vec<_> = (0..k as u64).map(|i| ens.realization(seed, i)).collect();
        ctx.write_json("realizations.json", &reals)?;
    }
    Ok(())
}

pub(crate) fn validation(msg: String) -> HarnessError {
    HarnessError::Validation(vec![msg])
}
