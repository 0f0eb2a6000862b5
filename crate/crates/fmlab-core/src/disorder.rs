//! Alloy-type random potentials, impurity geometries and the full-coupling
//! comparison field.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{Beta, Continuous, ContinuousCDF};

use crate::error::{Error, Result};
use crate::lattice::{self, max_dist, Domain, Region, SparseOperator};
use crate::rng;

/// Single-site potential `U(x - α)` as a function of the max-norm distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum SingleSiteProfile {
    /// Flat: `height` on the open cube of side `side`.
    Box { height: f64, side: f64 },
    /// Linear peak `c_max` at the centre falling to `c_min` at distance
    /// `r_inner/2`, then a cosine taper to zero at `r_outer/2`.
    Bump {
        c_min: f64,
        c_max: f64,
        r_inner: f64,
        r_outer: f64,
    },
}

impl SingleSiteProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SingleSiteProfile::Box { height, side } => height > 0.0 && side > 0.0,
            SingleSiteProfile::Bump {
                c_min,
                c_max,
                r_inner,
                r_outer,
            } => c_min > 0.0 && c_min <= c_max && r_inner > 0.0 && r_inner <= r_outer,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid single-site profile {self:?}")))
        }
    }

    /// `(c_U, C_U, r_U, R_U)`.
    pub fn constants(&self) -> (f64, f64, f64, f64) {
        match *self {
            SingleSiteProfile::Box { height, side } => (height, height, side, side),
            SingleSiteProfile::Bump {
                c_min,
                c_max,
                r_inner,
                r_outer,
            } => (c_min, c_max, r_inner, r_outer),
        }
    }

    pub fn support(&self) -> f64 {
        self.constants().3
    }

    pub fn eval(&self, rho: f64) -> f64 {
        match *self {
            SingleSiteProfile::Box { height, side } => {
                if rho < side / 2.0 {
                    height
                } else {
                    0.0
                }
            }
            SingleSiteProfile::Bump {
                c_min,
                c_max,
                r_inner,
                r_outer,
            } => {
                let (a, b) = (r_inner / 2.0, r_outer / 2.0);
                if rho < a {
                    c_min + (c_max - c_min) * (1.0 - rho / a)
                } else if rho < b {
                    let t = (rho - a) / (b - a);
                    c_min * (0.5 * std::f64::consts::PI * t).cos().powi(2)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Distribution of a single coupling, supported in `[0, eta_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CouplingLaw {
    Uniform { eta_max: f64 },
    /// `eta_max · Beta(a, b)`, bounded density for `a, b >= 1`.
    ScaledBeta { eta_max: f64, a: f64, b: f64 },
    /// With probability `p` uniform on `[lo, eta_max]`, otherwise uniform on
    /// `[0, floor]` with `floor <= lo`.
    PiecewiseUniform {
        eta_max: f64,
        p: f64,
        lo: f64,
        floor: f64,
    },
    /// Uniform on `[eta_max - width, eta_max]`.
    Narrow { eta_max: f64, width: f64 },
    /// Point mass at `at`. No density; for diagnostics only.
    Degenerate { eta_max: f64, at: f64 },
}

impl CouplingLaw {
    pub fn eta_max(&self) -> f64 {
        match *self {
            CouplingLaw::Uniform { eta_max }
            | CouplingLaw::ScaledBeta { eta_max, .. }
            | CouplingLaw::PiecewiseUniform { eta_max, .. }
            | CouplingLaw::Narrow { eta_max, .. }
            | CouplingLaw::Degenerate { eta_max, .. } => eta_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.eta_max();
        let ok = m >= 0.0
            && m.is_finite()
            && match *self {
                CouplingLaw::Uniform { .. } => m > 0.0,
                CouplingLaw::ScaledBeta { a, b, .. } => m > 0.0 && a >= 1.0 && b >= 1.0,
                CouplingLaw::PiecewiseUniform { p, lo, floor, .. } => {
                    (0.0..=1.0).contains(&p) && floor > 0.0 && floor <= lo && lo < m
                }
                CouplingLaw::Narrow { width, .. } => width > 0.0 && width <= m,
                CouplingLaw::Degenerate { at, .. } => (0.0..=m).contains(&at),
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid coupling law {self:?}")))
        }
    }

    pub fn has_density(&self) -> bool {
        !matches!(self, CouplingLaw::Degenerate { .. })
    }

    fn beta(a: f64, b: f64) -> Beta {
        Beta::new(a, b).expect("validated shape parameters")
    }

    pub fn density(&self, x: f64) -> f64 {
        let m = self.eta_max();
        if !(0.0..=m).contains(&x) {
            return 0.0;
        }
        match *self {
            CouplingLaw::Uniform { eta_max } => 1.0 / eta_max,
            CouplingLaw::ScaledBeta { eta_max, a, b } => Self::beta(a, b).pdf(x / eta_max) / eta_max,
            CouplingLaw::PiecewiseUniform { eta_max, p, lo, floor } => {
                let mut d = 0.0;
                if x <= floor {
                    d += (1.0 - p) / floor;
                }
                if x >= lo {
                    d += p / (eta_max - lo);
                }
                d
            }
            CouplingLaw::Narrow { eta_max, width } => {
                if x >= eta_max - width {
                    1.0 / width
                } else {
                    0.0
                }
            }
            CouplingLaw::Degenerate { .. } => f64::INFINITY,
        }
    }

    /// Supremum of the density, `None` without one.
    pub fn density_bound(&self) -> Option<f64> {
        match *self {
            CouplingLaw::Uniform { eta_max } => Some(1.0 / eta_max),
            CouplingLaw::ScaledBeta { eta_max, a, b } => {
                let mode = if a == 1.0 && b == 1.0 {
                    0.5
                } else {
                    (a - 1.0) / (a + b - 2.0)
                };
                Some(Self::beta(a, b).pdf(mode) / eta_max)
            }
            CouplingLaw::PiecewiseUniform { eta_max, p, lo, floor } => {
                Some(((1.0 - p) / floor).max(p / (eta_max - lo)))
            }
            CouplingLaw::Narrow { width, .. } => Some(1.0 / width),
            CouplingLaw::Degenerate { .. } => None,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let m = self.eta_max();
        if x < 0.0 {
            return 0.0;
        }
        if x >= m {
            return 1.0;
        }
        match *self {
            CouplingLaw::Uniform { eta_max } => x / eta_max,
            CouplingLaw::ScaledBeta { eta_max, a, b } => Self::beta(a, b).cdf(x / eta_max),
            CouplingLaw::PiecewiseUniform { eta_max, p, lo, floor } => {
                (1.0 - p) * (x / floor).min(1.0) + p * ((x - lo) / (eta_max - lo)).clamp(0.0, 1.0)
            }
            CouplingLaw::Narrow { eta_max, width } => ((x - (eta_max - width)) / width).max(0.0),
            CouplingLaw::Degenerate { at, .. } => {
                if x >= at {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Inverse CDF on `(0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let v = match *self {
            CouplingLaw::Uniform { eta_max } => u * eta_max,
            CouplingLaw::ScaledBeta { eta_max, a, b } => eta_max * Self::beta(a, b).inverse_cdf(u),
            CouplingLaw::PiecewiseUniform { eta_max, p, lo, floor } => {
                if u < 1.0 - p {
                    floor * u / (1.0 - p)
                } else {
                    lo + (eta_max - lo) * (u - (1.0 - p)) / p
                }
            }
            CouplingLaw::Narrow { eta_max, width } => eta_max - width + u * width,
            CouplingLaw::Degenerate { at, .. } => at,
        };
        v.clamp(0.0, self.eta_max())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            CouplingLaw::Uniform { eta_max } => eta_max / 2.0,
            CouplingLaw::ScaledBeta { eta_max, a, b } => eta_max * a / (a + b),
            CouplingLaw::PiecewiseUniform { eta_max, p, lo, floor } => {
                (1.0 - p) * floor / 2.0 + p * (lo + eta_max) / 2.0
            }
            CouplingLaw::Narrow { eta_max, width } => eta_max - width / 2.0,
            CouplingLaw::Degenerate { at, .. } => at,
        }
    }
}

/// Closed per-axis interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const ALL: Interval = Interval {
        lo: f64::MIN,
        hi: f64::MAX,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Finite impurity configuration in canonical (lexicographic) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpuritySet {
    pub dim: usize,
    pub points: Vec<[f64; 3]>,
    /// Declared minimal max-norm separation.
    pub r_min: f64,
    /// Declared denseness radius, if any.
    pub r_dense: Option<f64>,
    /// Box on which the set is complete: every impurity of the intended
    /// configuration lying in it is listed.
    pub cover: Vec<Interval>,
}

impl ImpuritySet {
    pub fn new(dim: usize, mut points: Vec<[f64; 3]>, r_min: f64, r_dense: Option<f64>, cover: Vec<Interval>) -> Result<Self> {
        if cover.len() != dim {
            return Err(Error::InvalidArgument(format!("cover has {} axes, expected {dim}", cover.len())));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("impurity coordinates must be finite".into()));
        }
        points.sort_by(|a, b| {
            a[0].total_cmp(&b[0])
                .then(a[1].total_cmp(&b[1]))
                .then(a[2].total_cmp(&b[2]))
        });
        Ok(ImpuritySet {
            dim,
            points,
            r_min,
            r_dense,
            cover,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.dim as u64).to_le_bytes());
        for p in &self.points {
            for c in p {
                hasher.update(c.to_bits().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Integer lattice `ℤ^d` on a box, the default alloy configuration.
    pub fn integer_lattice(dim: usize, bounds: &[Interval]) -> Result<Self> {
        displaced(dim, bounds, 0.0, 0)
    }
}

/// One sample of the couplings, indexed by impurity rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub impurities: String,
    pub seed: u64,
    pub index: u64,
    pub eta_max: f64,
    pub couplings: Vec<f64>,
}

impl DisorderRealization {
    /// `ξ_α = η_max - η_α`.
    pub fn normalized(&self) -> Vec<f64> {
        self.couplings.iter().map(|e| self.eta_max - e).collect()
    }
}

pub fn sample_realization(impurities: &ImpuritySet, law: &CouplingLaw, seed: u64, index: u64) -> DisorderRealization {
    DisorderRealization {
        impurities: impurities.checksum(),
        seed,
        index,
        eta_max: law.eta_max(),
        couplings: (0..impurities.len() as u64)
            .map(|rank| law.quantile(rng::coupling_uniform(seed, index, rank)))
            .collect(),
    }
}

/// For each impurity, the domain sites it touches and the profile value there.
fn influence(impurities: &ImpuritySet, profile: &SingleSiteProfile, domain: &Domain) -> Result<Vec<Vec<(usize, f64)>>> {
    if impurities.dim != domain.grid.dim {
        return Err(Error::InvalidArgument("impurity and domain dimensions differ".into()));
    }
    let dim = domain.grid.dim;
    let h = domain.grid.h;
    let reach = profile.support() / 2.0;
    for a in 0..dim {
        let (lo, hi) = domain
            .sites
            .iter()
            .map(|s| s[a] as f64 * h)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), x| (l.min(x), u.max(x)));
        let c = impurities.cover[a];
        if lo - reach < c.lo || hi + reach > c.hi {
            return Err(Error::MarginViolation {
                margin: reach,
                detail: format!(
                    "axis {a}: domain [{lo}, {hi}] plus margin needs cover [{}, {}], have [{}, {}]",
                    lo - reach,
                    hi + reach,
                    c.lo,
                    c.hi
                ),
            });
        }
    }
    Ok(impurities
        .points
        .iter()
        .map(|alpha| {
            let mut out = Vec::new();
            let mut ranges = [(0i64, 0i64); 3];
            for a in 0..dim {
                ranges[a] = (((alpha[a] - reach) / h).floor() as i64, ((alpha[a] + reach) / h).ceil() as i64);
            }
            for i in ranges[0].0..=ranges[0].1 {
                for j in ranges[1].0..=ranges[1].1 {
                    for k in ranges[2].0..=ranges[2].1 {
                        let s = [i, j, k];
                        if let Some(idx) = domain.index_of(&s) {
                            let u = profile.eval(max_dist(dim, &domain.grid.position(&s), alpha));
                            if u != 0.0 {
                                out.push((idx, u));
                            }
                        }
                    }
                }
            }
            out
        })
        .collect())
}

fn accumulate(base: &[f64], infl: &[Vec<(usize, f64)>], weights: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut v = base.to_vec();
    for (rank, list) in infl.iter().enumerate() {
        let w = weights(rank);
        if w != 0.0 {
            for &(i, u) in list {
                v[i] += w * u;
            }
        }
    }
    v
}

/// `V₀ + Σ η_α U_α` on the domain.
pub fn potential_field(
    realization: &DisorderRealization,
    impurities: &ImpuritySet,
    profile: &SingleSiteProfile,
    background: &[f64],
    domain: &Domain,
) -> Result<Vec<f64>> {
    check_background(background, domain)?;
    if realization.couplings.len() != impurities.len() {
        return Err(Error::LengthMismatch {
            expected: impurities.len(),
            got: realization.couplings.len(),
        });
    }
    let infl = influence(impurities, profile, domain)?;
    Ok(accumulate(background, &infl, |r| realization.couplings[r]))
}

/// `V₀ + η_max Σ U_α`.
pub fn full_coupling_field(
    impurities: &ImpuritySet,
    profile: &SingleSiteProfile,
    eta_max: f64,
    background: &[f64],
    domain: &Domain,
) -> Result<Vec<f64>> {
    check_background(background, domain)?;
    let infl = influence(impurities, profile, domain)?;
    Ok(accumulate(background, &infl, |_| eta_max))
}

fn check_background(background: &[f64], domain: &Domain) -> Result<()> {
    if background.len() != domain.len() {
        return Err(Error::LengthMismatch {
            expected: domain.len(),
            got: background.len(),
        });
    }
    Ok(())
}

/// Domain, impurities, profile, law and background bundled, with the
/// impurity-to-site influence lists precomputed.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub domain: Domain,
    pub impurities: ImpuritySet,
    pub profile: SingleSiteProfile,
    pub law: CouplingLaw,
    pub background: Vec<f64>,
    influence: Vec<Vec<(usize, f64)>>,
}

impl Ensemble {
    pub fn new(
        domain: Domain,
        impurities: ImpuritySet,
        profile: SingleSiteProfile,
        law: CouplingLaw,
        background: Vec<f64>,
    ) -> Result<Self> {
        profile.validate()?;
        law.validate()?;
        check_background(&background, &domain)?;
        let influence = influence(&impurities, &profile, &domain)?;
        Ok(Ensemble {
            domain,
            impurities,
            profile,
            law,
            background,
            influence,
        })
    }

    /// Same impurities and law on a subdomain.
    pub fn restrict(&self, region: &Region) -> Result<Ensemble> {
        let sub = lattice::restrict(&self.domain, region)?;
        self.on_domain(sub)
    }

    /// Same impurities and law on another domain with constant background
    /// taken from the first site of this one.
    pub fn on_domain(&self, domain: Domain) -> Result<Ensemble> {
        let bg = self.background.first().cloned().unwrap_or(0.0);
        if self.background.iter().any(|&b| b != bg) {
            return Err(Error::InvalidArgument("cannot transfer a non-constant background".into()));
        }
        let n = domain.len();
        Ensemble::new(domain, self.impurities.clone(), self.profile, self.law, vec![bg; n])
    }

    pub fn realization(&self, seed: u64, index: u64) -> DisorderRealization {
        sample_realization(&self.impurities, &self.law, seed, index)
    }

    pub fn potential(&self, r: &DisorderRealization) -> Vec<f64> {
        accumulate(&self.background, &self.influence, |k| r.couplings[k])
    }

    /// `W_ω = Σ ξ_α U_α`.
    pub fn deficit(&self, r: &DisorderRealization) -> Vec<f64> {
        let xi = r.normalized();
        accumulate(&vec![0.0; self.domain.len()], &self.influence, |k| xi[k])
    }

    pub fn full_coupling(&self) -> Vec<f64> {
        let m = self.law.eta_max();
        accumulate(&self.background, &self.influence, |_| m)
    }

    pub fn hamiltonian(&self, seed: u64, index: u64) -> Result<SparseOperator> {
        lattice::assemble_hamiltonian(&self.domain, &self.potential(&self.realization(seed, index)))
    }

    pub fn full_hamiltonian(&self) -> Result<SparseOperator> {
        lattice::assemble_hamiltonian(&self.domain, &self.full_coupling())
    }

    pub fn background_hamiltonian(&self) -> Result<SparseOperator> {
        lattice::assemble_hamiltonian(&self.domain, &self.background)
    }

    /// Number of impurities touching the domain.
    pub fn active_impurities(&self) -> usize {
        self.influence.iter().filter(|l| !l.is_empty()).count()
    }
}

/// Surface impurity layout: a jittered square lattice of the requested
/// density on the first `d1` axes at transverse coordinate 0, optionally
/// with a sparse bulk lattice away from the surface layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub dim: usize,
    pub d1: usize,
    /// Longitudinal extent, applied to each of the first `d1` axes.
    pub extent: Interval,
    pub r_perp: f64,
    /// Impurities per unit `d1`-volume.
    pub density: f64,
    pub r_min: f64,
    /// Max-norm jitter of each surface point.
    pub jitter: f64,
    /// Spacing of the optional bulk lattice, placed outside `|x₂| ≤ r_perp/2 + r_min`.
    pub bulk_spacing: Option<f64>,
    /// Transverse extent of the bulk lattice.
    pub bulk_extent: f64,
    pub seed: u64,
}

pub fn make_surface_impurities(spec: &SurfaceSpec) -> Result<ImpuritySet> {
    let SurfaceSpec {
        dim,
        d1,
        extent,
        r_perp,
        density,
        r_min,
        jitter,
        bulk_spacing,
        bulk_extent,
        seed,
    } = *spec;
    if !(1..dim).contains(&d1) || dim > 3 {
        return Err(Error::InvalidArgument(format!("need 1 <= d1 < d <= 3, got d1={d1} d={dim}")));
    }
    if !(density > 0.0 && r_min > 0.0 && r_perp > 0.0 && jitter >= 0.0) {
        return Err(Error::InvalidArgument("density, r_min, r_perp must be positive".into()));
    }
    let packing = (1.0 / r_min).powi(d1 as i32);
    if density > packing {
        return Err(Error::Infeasible(format!(
            "density {density} exceeds the packing bound (1/r_min)^d1 = {packing}"
        )));
    }
    let spacing = density.powf(-1.0 / d1 as f64);
    if spacing - 2.0 * jitter < r_min - 1e-12 {
        return Err(Error::Infeasible(format!(
            "spacing {spacing} with jitter {jitter} cannot keep separation {r_min}"
        )));
    }
    if jitter > r_perp / 2.0 {
        return Err(Error::Infeasible(format!("jitter {jitter} leaves the surface layer r_perp/2")));
    }
    let mut rng = rng::stream(seed, &[0x5u64]);
    use rand::Rng;
    let k_lo = (extent.lo / spacing).floor() as i64;
    let k_hi = (extent.hi / spacing).ceil() as i64;
    let mut points = Vec::new();
    let mut idx = [0i64; 3];
    loop {
        let mut p = [0.0; 3];
        for a in 0..d1 {
            p[a] = (k_lo + idx[a]) as f64 * spacing;
        }
        for c in p.iter_mut().take(dim) {
            *c += jitter * (2.0 * rng.random::<f64>() - 1.0);
        }
        points.push(p);
        // Odometer over the d1 longitudinal axes.
        let mut a = 0;
        loop {
            if a == d1 {
                break;
            }
            idx[a] += 1;
            if k_lo + idx[a] <= k_hi {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
        if a == d1 {
            break;
        }
    }
    let mut cover = vec![Interval::ALL; dim];
    for c in cover.iter_mut().take(d1) {
        *c = Interval::new(k_lo as f64 * spacing + jitter, k_hi as f64 * spacing - jitter);
    }
    if let Some(b) = bulk_spacing {
        if b < r_min {
            return Err(Error::Infeasible(format!("bulk spacing {b} below r_min {r_min}")));
        }
        let gap = r_perp / 2.0 + r_min;
        let lon = |k: i64| k as f64 * b;
        let (l_lo, l_hi) = ((extent.lo / b).floor() as i64, (extent.hi / b).ceil() as i64);
        let t_max = (bulk_extent / 2.0 / b).floor() as i64;
        let mut grid_pts: Vec<[f64; 3]> = Vec::new();
        let ranges: Vec<(i64, i64)> = (0..dim)
            .map(|a| if a < d1 { (l_lo, l_hi) } else { (-t_max, t_max) })
            .collect();
        let r = |a: usize| if a < dim { ranges[a] } else { (0, 0) };
        for i in r(0).0..=r(0).1 {
            for j in r(1).0..=r(1).1 {
                for k in r(2).0..=r(2).1 {
                    let q = [lon(i), lon(j), lon(k)];
                    let away = (d1..dim).any(|a| q[a].abs() > gap);
                    if away {
                        let mut q = q;
                        for c in q.iter_mut().skip(dim) {
                            *c = 0.0;
                        }
                        grid_pts.push(q);
                    }
                }
            }
        }
        points.extend(grid_pts);
        for c in cover.iter_mut().take(d1) {
            c.lo = c.lo.max(l_lo as f64 * b);
            c.hi = c.hi.min(l_hi as f64 * b);
        }
        for c in cover.iter_mut().skip(d1) {
            *c = Interval::new(-(t_max as f64) * b, t_max as f64 * b);
        }
    }
    ImpuritySet::new(dim, points, r_min, None, cover)
}

/// Points `j + x_j` for integer `j` in `bounds`, with iid displacements
/// uniform in the max-norm ball of radius `max_displacement <= 1/3`.
pub fn make_displaced_lattice(dim: usize, bounds: &[Interval], max_displacement: f64, seed: u64) -> Result<ImpuritySet> {
    if !(0.0..=1.0 / 3.0).contains(&max_displacement) {
        return Err(Error::InvalidArgument(format!(
            "displacement {max_displacement} must lie in [0, 1/3]"
        )));
    }
    displaced(dim, bounds, max_displacement, seed)
}

fn displaced(dim: usize, bounds: &[Interval], delta: f64, seed: u64) -> Result<ImpuritySet> {
    if !(1..=3).contains(&dim) || bounds.len() != dim {
        return Err(Error::InvalidArgument(format!("need {dim} bounds for dimension {dim}")));
    }
    let r = |a: usize| {
        if a < dim {
            (bounds[a].lo.ceil() as i64, bounds[a].hi.floor() as i64)
        } else {
            (0, 0)
        }
    };
    let mut points = Vec::new();
    for i in r(0).0..=r(0).1 {
        for j in r(1).0..=r(1).1 {
            for k in r(2).0..=r(2).1 {
                let base = [i, j, k];
                let mut p = [0.0; 3];
                for a in 0..dim {
                    let key = rng::derive(seed, &[base[0] as u64, base[1] as u64, base[2] as u64, a as u64]);
                    p[a] = base[a] as f64 + delta * (2.0 * rng::unit_open(key) - 1.0);
                }
                points.push(p);
            }
        }
    }
    let cover = (0..dim)
        .map(|a| Interval::new(r(a).0 as f64 + delta, r(a).1 as f64 - delta))
        .collect();
    ImpuritySet::new(dim, points, 1.0 - 2.0 * delta, Some(0.5 + delta), cover)
}

/// Spatial hash of impurity points with unit buckets.
struct Buckets<'a> {
    dim: usize,
    points: &'a [[f64; 3]],
    map: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> Buckets<'a> {
    fn new(set: &'a ImpuritySet) -> Self {
        let mut map: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in set.points.iter().enumerate() {
            map.entry(Self::key(set.dim, p)).or_default().push(i);
        }
        Buckets {
            dim: set.dim,
            points: &set.points,
            map,
        }
    }

    fn key(dim: usize, p: &[f64; 3]) -> [i64; 3] {
        let mut k = [0i64; 3];
        for a in 0..dim {
            k[a] = p[a].floor() as i64;
        }
        k
    }

    /// Nearest point within `reach` buckets, as `(index, distance)`.
    fn nearest(&self, q: &[f64; 3], reach: i64, skip: Option<usize>) -> Option<(usize, f64)> {
        let k = Self::key(self.dim, q);
        let span = |a: usize| if a < self.dim { reach } else { 0 };
        let mut best: Option<(usize, f64)> = None;
        for di in -span(0)..=span(0) {
            for dj in -span(1)..=span(1) {
                for dk in -span(2)..=span(2) {
                    let Some(list) = self.map.get(&[k[0] + di, k[1] + dj, k[2] + dk]) else {
                        continue;
                    };
                    for &i in list {
                        if Some(i) == skip {
                            continue;
                        }
                        let d = max_dist(self.dim, &self.points[i], q);
                        if best.is_none_or(|(_, b)| d < b) {
                            best = Some((i, d));
                        }
                    }
                }
            }
        }
        best
    }
}

/// Counting window family for [`verify_geometry`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowShape {
    /// `Λ_L(x)`, counts compared with `L^d`.
    Cube,
    /// `Λ_L(x₁) × Λ_{r_perp}(0)`, counts compared with `L^{d1}`.
    Surface { d1: usize, r_perp: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryProbe {
    pub lengths: Vec<f64>,
    /// Base window centre; shifted by multiples of 1/4 on each axis.
    pub base: Vec<f64>,
    pub shifts: usize,
    pub window: WindowShape,
    /// Box scanned (step 1/8) for the denseness radius.
    pub dense_box: Option<Vec<Interval>>,
    /// Declared lower count constant for surface windows.
    pub surface_constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowCounts {
    pub length: f64,
    pub windows: usize,
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub r_min_empirical: f64,
    pub r_dense_empirical: Option<f64>,
    pub counts: Vec<WindowCounts>,
    /// `min count / L^k` over all windows.
    pub c_lower: f64,
    /// `max count / L^k` over all windows.
    pub c_upper: f64,
    /// Log-log slope of the mean count against `L`.
    pub exponent: Option<f64>,
    pub violations: Vec<String>,
}

pub fn verify_geometry(set: &ImpuritySet, probe: &GeometryProbe) -> Result<GeometryReport> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty impurity set".into()));
    }
    let dim = set.dim;
    let buckets = Buckets::new(set);
    let reach = (set.r_min.max(1.0)).ceil() as i64;
    let mut r_min_emp = f64::INFINITY;
    for (i, p) in set.points.iter().enumerate() {
        if let Some((_, d)) = buckets.nearest(p, reach, Some(i)) {
            r_min_emp = r_min_emp.min(d);
        }
    }
    let mut violations = Vec::new();
    if r_min_emp < set.r_min - 1e-12 {
        violations.push(format!(
            "uniform discreteness: minimal separation {r_min_emp} below declared {}",
            set.r_min
        ));
    }

    let r_dense_emp = match &probe.dense_box {
        None => None,
        Some(bx) => {
            let step = 0.125;
            let dr = set.r_dense.unwrap_or(2.0).ceil() as i64 + 1;
            let n: Vec<i64> = bx.iter().map(|iv| ((iv.hi - iv.lo) / step).floor() as i64).collect();
            let mut worst = 0.0f64;
            let n_at = |a: usize| if a < dim { n[a] } else { 0 };
            for i in 0..=n_at(0) {
                for j in 0..=n_at(1) {
                    for k in 0..=n_at(2) {
                        let ijk = [i, j, k];
                        let mut q = [0.0; 3];
                        for a in 0..dim {
                            q[a] = bx[a].lo + ijk[a] as f64 * step;
                        }
                        let d = buckets.nearest(&q, dr, None).map(|x| x.1).unwrap_or(f64::INFINITY);
                        worst = worst.max(d);
                    }
                }
            }
            if let Some(declared) = set.r_dense {
                if worst > declared + 1e-12 {
                    violations.push(format!(
                        "uniform denseness: point at distance {worst} exceeds declared {declared}"
                    ));
                }
            }
            Some(worst)
        }
    };

    type InWindow = Box<dyn Fn(&[f64; 3], &[f64], f64) -> bool>;
    let (count_dim, in_window): (usize, InWindow) = match probe.window {
        WindowShape::Cube => (dim, Box::new(move |p: &[f64; 3], c: &[f64], l: f64| max_dist(dim, p, c) < l / 2.0)),
        WindowShape::Surface { d1, r_perp } => (
            d1,
            Box::new(move |p: &[f64; 3], c: &[f64], l: f64| {
                (0..d1).all(|a| (p[a] - c[a]).abs() < l / 2.0) && (d1..dim).all(|a| p[a].abs() < r_perp / 2.0)
            }),
        ),
    };
    if probe.base.len() != dim {
        return Err(Error::InvalidArgument("probe base has wrong dimension".into()));
    }
    let mut counts = Vec::new();
    let mut c_lower = f64::INFINITY;
    let mut c_upper = 0.0f64;
    for &l in &probe.lengths {
        let mut cs = Vec::new();
        let shifts = probe.shifts.max(1);
        let total = shifts.pow(count_dim as u32);
        for t in 0..total {
            let mut c = probe.base.clone();
            let mut rem = t;
            for ca in c.iter_mut().take(count_dim) {
                *ca += (rem % shifts) as f64 * 0.25;
                rem /= shifts;
            }
            let n = set.points.iter().filter(|p| in_window(p, &c, l)).count();
            cs.push(n);
        }
        let scale = l.powi(count_dim as i32);
        let min = *cs.iter().min().unwrap();
        let max = *cs.iter().max().unwrap();
        c_lower = c_lower.min(min as f64 / scale);
        c_upper = c_upper.max(max as f64 / scale);
        if let (WindowShape::Surface { .. }, Some(c)) = (&probe.window, probe.surface_constant) {
            if (min as f64) < c * scale - 1e-9 {
                violations.push(format!("surface count: {min} < {c}·L^d1 at L={l}"));
            }
        }
        counts.push(WindowCounts {
            length: l,
            windows: cs.len(),
            min,
            max,
            mean: cs.iter().sum::<usize>() as f64 / cs.len() as f64,
        });
    }
    let exponent = if counts.len() >= 2 && counts.iter().all(|c| c.mean > 0.0) {
        let x: Vec<f64> = counts.iter().map(|c| c.length.ln()).collect();
        let y: Vec<f64> = counts.iter().map(|c| c.mean.ln()).collect();
        crate::fit::linear_fit(&x, &y).ok().map(|f| f.slope)
    } else {
        None
    };
    Ok(GeometryReport {
        r_min_empirical: r_min_emp,
        r_dense_empirical: r_dense_emp,
        counts,
        c_lower,
        c_upper,
        exponent,
        violations,
    })
}
