//! Domains, impurity sets and ensembles built from the `[model]` section.

use fmlab_core::disorder::{make_displaced_lattice, make_surface_impurities, Ensemble, ImpuritySet, Interval, SurfaceSpec};
use fmlab_core::lattice::{build_domain, Boundary, Domain, GridSpec, Region};
use fmlab_core::Result;

use crate::config::Config;

pub fn grid(cfg: &Config) -> Result<GridSpec> {
    GridSpec::new(cfg.usize("model.dim"), cfg.f64("model.h"))
}

pub fn boundary(cfg: &Config) -> Boundary {
    match cfg.opt_str("model.boundary").as_deref() {
        Some("neumann") => Boundary::Robin { sigma: 0.0 },
        Some("robin") => Boundary::Robin {
            sigma: cfg.f64("model.robin_sigma"),
        },
        _ => Boundary::Dirichlet,
    }
}

/// Cube (or strip when `model.width` is set) of side `side` centred at `center`
/// on the longitudinal axes.
pub fn region(cfg: &Config, side: f64, center: f64) -> Region {
    let dim = cfg.usize("model.dim");
    match cfg.opt_f64("model.width") {
        Some(width) => Region::Strip {
            center: vec![center],
            side,
            width,
        },
        None => Region::cube(&vec![center; dim], side),
    }
}

pub fn domain(cfg: &Config) -> Result<Domain> {
    build_domain(grid(cfg)?, region(cfg, cfg.f64("model.side"), 0.0), boundary(cfg))
}

/// Per-axis bounding box of the sites enlarged by `margin`.
pub fn bounds(domain: &Domain, margin: f64) -> Vec<Interval> {
    let dim = domain.grid.dim;
    (0..dim)
        .map(|a| {
            let (lo, hi) = (0..domain.len())
                .map(|i| domain.position(i)[a])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            Interval::new(lo - margin, hi + margin)
        })
        .collect()
}

/// Impurities over `bounds` according to `model.layout`.
pub fn impurities(cfg: &Config, bounds: &[Interval], seed: u64) -> Result<ImpuritySet> {
    let dim = cfg.usize("model.dim");
    match cfg.str("model.layout").as_str() {
        "displacement" => make_displaced_lattice(dim, bounds, cfg.f64("model.displacement"), seed),
        "surface" => {
            let d1 = cfg.usize("model.surface_dim");
            let lo = bounds[..d1].iter().map(|b| b.lo).fold(f64::INFINITY, f64::min);
            let hi = bounds[..d1].iter().map(|b| b.hi).fold(f64::NEG_INFINITY, f64::max);
            let density = cfg.f64("model.surface_density");
            let spacing = density.powf(-1.0 / d1 as f64);
            make_surface_impurities(&SurfaceSpec {
                dim,
                d1,
                extent: Interval::new(lo - spacing, hi + spacing),
                r_perp: cfg.f64("model.r_perp"),
                density,
                r_min: cfg.f64("model.r_min"),
                jitter: cfg.f64("model.jitter"),
                bulk_spacing: None,
                bulk_extent: 0.0,
                seed,
            })
        }
        _ => ImpuritySet::integer_lattice(dim, bounds),
    }
}

/// Ensemble on `domain` with impurities covering it plus the single-site reach.
pub fn ensemble_on(cfg: &Config, domain: Domain, layout_seed: u64) -> Result<Ensemble> {
    let profile = cfg.profile().expect("validated profile");
    let law = cfg.law().expect("validated law");
    let margin = profile.support() / 2.0 + 1.0;
    let set = impurities(cfg, &bounds(&domain, margin), layout_seed)?;
    let n = domain.len();
    Ensemble::new(domain, set, profile, law, vec![cfg.f64("model.background"); n])
}

pub fn ensemble(cfg: &Config, layout_seed: u64) -> Result<Ensemble> {
    ensemble_on(cfg, domain(cfg)?, layout_seed)
}

/// Default base point: on the first axis, far enough left that `x + r_max`
/// stays inside the domain; zero elsewhere.
pub fn base_point(cfg: &Config, r_max: f64) -> Vec<f64> {
    if let Some(x) = cfg.opt_floats("numeric.x") {
        return x;
    }
    let mut x = vec![0.0; cfg.usize("model.dim")];
    x[0] = -(r_max / 2.0).round();
    x
}
