//! Grids, domains, boundary conditions and finite-difference assembly.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Csr;

/// Integer lattice coordinates; unused trailing axes are zero.
pub type Site = [i64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub h: f64,
}

impl GridSpec {
    pub fn new(dim: usize, h: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!("dimension {dim} not in 1..=3")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("spacing {h} must be positive")));
        }
        Ok(GridSpec { dim, h })
    }

    pub fn position(&self, s: &Site) -> [f64; 3] {
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = s[a] as f64 * self.h;
        }
        p
    }

    fn tol(&self) -> f64 {
        1e-9 * self.h
    }
}

/// Max-norm distance between two physical points, first `dim` axes.
pub fn max_dist(dim: usize, a: &[f64], b: &[f64]) -> f64 {
    (0..dim).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

/// A subset of space. Cubes are open; `Shell` keeps the inner boundary and
/// `Outside` is the complement of the closed cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Box { center: Vec<f64>, side: f64 },
    /// `Λ_side(center) × Λ_width(0)`, `center.len()` longitudinal axes.
    Strip { center: Vec<f64>, side: f64, width: f64 },
    Shell { center: Vec<f64>, outer: f64, inner: f64 },
    Outside { center: Vec<f64>, side: f64 },
    Mask { sites: Vec<Site> },
}

impl Region {
    pub fn cube(center: &[f64], side: f64) -> Region {
        Region::Box {
            center: center.to_vec(),
            side,
        }
    }

    fn check(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            Region::Box { center, side } | Region::Outside { center, side } => {
                if center.len() != dim {
                    return bad(format!("center has {} coordinates, grid has {dim}", center.len()));
                }
                if !(*side > 0.0) {
                    return bad(format!("side {side} must be positive"));
                }
            }
            Region::Strip { center, side, width } => {
                if center.is_empty() || center.len() >= dim {
                    return bad(format!(
                        "strip needs 1 <= d1 < d, got d1={} d={dim}",
                        center.len()
                    ));
                }
                if !(*side > 0.0 && *width > 0.0) {
                    return bad(format!("strip side {side} and width {width} must be positive"));
                }
            }
            Region::Shell { center, outer, inner } => {
                if center.len() != dim {
                    return bad(format!("center has {} coordinates, grid has {dim}", center.len()));
                }
                if !(*outer > *inner && *inner >= 0.0) {
                    return bad(format!("shell needs outer {outer} > inner {inner} >= 0"));
                }
            }
            Region::Mask { .. } => {}
        }
        Ok(())
    }

    pub fn contains(&self, grid: &GridSpec, s: &Site) -> bool {
        let p = grid.position(s);
        let tol = grid.tol();
        match self {
            Region::Box { center, side } => max_dist(grid.dim, &p, center) < side / 2.0 - tol,
            Region::Strip { center, side, width } => {
                let d1 = center.len();
                (0..grid.dim).all(|a| {
                    if a < d1 {
                        (p[a] - center[a]).abs() < side / 2.0 - tol
                    } else {
                        p[a].abs() < width / 2.0 - tol
                    }
                })
            }
            Region::Shell { center, outer, inner } => {
                let r = max_dist(grid.dim, &p, center);
                r < outer / 2.0 - tol && r >= inner / 2.0 - tol
            }
            Region::Outside { center, side } => max_dist(grid.dim, &p, center) > side / 2.0 + tol,
            Region::Mask { sites } => sites.binary_search(s).is_ok(),
        }
    }

    /// Per-axis physical half-extent `(center, half width)` of a bounded region.
    fn bounds(&self, dim: usize) -> Option<Vec<(f64, f64)>> {
        match self {
            Region::Box { center, side } => Some(center.iter().map(|&c| (c, side / 2.0)).collect()),
            Region::Strip { center, side, width } => Some(
                (0..dim)
                    .map(|a| {
                        if a < center.len() {
                            (center[a], side / 2.0)
                        } else {
                            (0.0, width / 2.0)
                        }
                    })
                    .collect(),
            ),
            Region::Shell { center, outer, .. } => {
                Some(center.iter().map(|&c| (c, outer / 2.0)).collect())
            }
            Region::Outside { .. } | Region::Mask { .. } => None,
        }
    }

    /// All lattice sites of a bounded region in canonical order.
    fn enumerate(&self, grid: &GridSpec) -> Result<Vec<Site>> {
        if let Region::Mask { sites } = self {
            return Ok(sites.clone());
        }
        let bounds = self
            .bounds(grid.dim)
            .ok_or_else(|| Error::InvalidArgument("region is unbounded".into()))?;
        let mut ranges = [(0i64, 0i64); 3];
        for (a, &(c, r)) in bounds.iter().enumerate() {
            ranges[a] = (((c - r) / grid.h).floor() as i64, ((c + r) / grid.h).ceil() as i64);
        }
        let mut out = Vec::new();
        for i in ranges[0].0..=ranges[0].1 {
            for j in ranges[1].0..=ranges[1].1 {
                for k in ranges[2].0..=ranges[2].1 {
                    let s = [i, j, k];
                    if self.contains(grid, &s) {
                        out.push(s);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Number of longitudinal axes on which Robin faces apply.
    fn robin_axes(&self, dim: usize) -> usize {
        match self {
            Region::Strip { center, .. } => center.len(),
            _ => dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    /// Constant coefficient on every exterior face; `sigma = 0` is Neumann.
    Robin { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub grid: GridSpec,
    pub geometry: Region,
    pub boundary: Boundary,
    /// Sorted lexicographically, duplicate-free.
    pub sites: Vec<Site>,
}

impl Domain {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn index_of(&self, s: &Site) -> Option<usize> {
        self.sites.binary_search(s).ok()
    }

    pub fn position(&self, i: usize) -> [f64; 3] {
        self.grid.position(&self.sites[i])
    }

    pub fn with_boundary(&self, boundary: Boundary) -> Domain {
        Domain {
            boundary,
            ..self.clone()
        }
    }

    /// SHA-256 over grid, boundary and the site list.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.grid.dim as u64).to_le_bytes());
        hasher.update(self.grid.h.to_bits().to_le_bytes());
        match self.boundary {
            Boundary::Dirichlet => hasher.update([0u8]),
            Boundary::Robin { sigma } => {
                hasher.update([1u8]);
                hasher.update(sigma.to_bits().to_le_bytes());
            }
        }
        hasher.update((self.geometry.robin_axes(self.grid.dim) as u64).to_le_bytes());
        for s in &self.sites {
            for c in s {
                hasher.update(c.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

pub fn build_domain(grid: GridSpec, geometry: Region, boundary: Boundary) -> Result<Domain> {
    GridSpec::new(grid.dim, grid.h)?;
    geometry.check(grid.dim)?;
    if matches!(geometry, Region::Outside { .. }) {
        return Err(Error::InvalidArgument("cannot build a domain from an unbounded region".into()));
    }
    if let Boundary::Robin { sigma } = boundary {
        if !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("Robin coefficient {sigma}")));
        }
    }
    let mut geometry = geometry;
    if let Region::Mask { sites } = &mut geometry {
        sites.sort();
        let before = sites.len();
        sites.dedup();
        if sites.len() != before {
            return Err(Error::InvalidArgument("mask contains duplicate sites".into()));
        }
        if sites.iter().any(|s| s[grid.dim..].iter().any(|&c| c != 0)) {
            return Err(Error::InvalidArgument("mask site has nonzero unused axis".into()));
        }
    }
    let sites = geometry.enumerate(&grid)?;
    if sites.is_empty() {
        return Err(Error::EmptyDomain(format!("{geometry:?} has no lattice sites")));
    }
    Ok(Domain {
        grid,
        geometry,
        boundary,
        sites,
    })
}

/// Sites of `parent` inside `region`. The geometry tag is kept when the region
/// lies inside the parent, otherwise the result is recorded as a mask.
pub fn restrict(parent: &Domain, region: &Region) -> Result<Domain> {
    region.check(parent.grid.dim)?;
    let sites: Vec<Site> = parent
        .sites
        .iter()
        .filter(|s| region.contains(&parent.grid, s))
        .cloned()
        .collect();
    if sites.is_empty() {
        return Err(Error::EmptyDomain(format!("{region:?} misses the parent domain")));
    }
    let exact = match region.enumerate(&parent.grid) {
        Ok(all) => all == sites,
        Err(_) => false,
    };
    let geometry = if exact {
        region.clone()
    } else {
        Region::Mask {
            sites: sites.clone(),
        }
    };
    Ok(Domain {
        grid: parent.grid,
        geometry,
        boundary: parent.boundary,
        sites,
    })
}

/// Real symmetric finite-difference Hamiltonian on a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseOperator {
    pub domain_checksum: String,
    pub potential_checksum: String,
    pub matrix: Csr,
}

impl SparseOperator {
    pub fn dim(&self) -> usize {
        self.matrix.n
    }

    /// SHA-256 of the stored entries, used as a cache key.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.matrix.n as u64).to_le_bytes());
        for (i, j, v) in self.matrix.triplets() {
            hasher.update((i as u64).to_le_bytes());
            hasher.update((j as u64).to_le_bytes());
            hasher.update(v.to_bits().to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

pub fn potential_checksum(v: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for x in v {
        hasher.update(x.to_bits().to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

pub fn assemble_hamiltonian(domain: &Domain, potential: &[f64]) -> Result<SparseOperator> {
    if potential.len() != domain.len() {
        return Err(Error::LengthMismatch {
            expected: domain.len(),
            got: potential.len(),
        });
    }
    if let Some(index) = potential.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let dim = domain.grid.dim;
    let h = domain.grid.h;
    let hop = 1.0 / (h * h);
    let robin_axes = domain.geometry.robin_axes(dim);
    let mut trip = Vec::with_capacity(domain.len() * (2 * dim + 1));
    for (i, s) in domain.sites.iter().enumerate() {
        let mut diag = potential[i];
        for a in 0..dim {
            for step in [-1i64, 1] {
                let mut n = *s;
                n[a] += step;
                match domain.index_of(&n) {
                    Some(j) => {
                        diag += hop;
                        trip.push((i, j, -hop));
                    }
                    None => match domain.boundary {
                        Boundary::Robin { sigma } if a < robin_axes => diag += sigma / h,
                        _ => diag += hop,
                    },
                }
            }
        }
        trip.push((i, i, diag));
    }
    Ok(SparseOperator {
        domain_checksum: domain.checksum(),
        potential_checksum: potential_checksum(potential),
        matrix: Csr::from_triplets(domain.len(), trip),
    })
}

/// Indices of domain sites covered by a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorBlock {
    pub domain_checksum: String,
    pub center: Vec<f64>,
    pub indices: Vec<usize>,
}

impl IndicatorBlock {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Sites within max-norm distance strictly less than 1/2 of `x`.
pub fn indicator(domain: &Domain, x: &[f64]) -> IndicatorBlock {
    let g = &domain.grid;
    let tol = g.tol();
    let mut ranges = [(0i64, 0i64); 3];
    for a in 0..g.dim {
        ranges[a] = (((x[a] - 0.5) / g.h).floor() as i64, ((x[a] + 0.5) / g.h).ceil() as i64);
    }
    let mut indices = Vec::new();
    for i in ranges[0].0..=ranges[0].1 {
        for j in ranges[1].0..=ranges[1].1 {
            for k in ranges[2].0..=ranges[2].1 {
                let s = [i, j, k];
                if max_dist(g.dim, &g.position(&s), x) < 0.5 - tol {
                    if let Some(idx) = domain.index_of(&s) {
                        indices.push(idx);
                    }
                }
            }
        }
    }
    IndicatorBlock {
        domain_checksum: domain.checksum(),
        center: x[..g.dim].to_vec(),
        indices,
    }
}

/// Indices of domain sites inside an arbitrary region (shell layers etc.).
pub fn region_block(domain: &Domain, region: &Region, center: &[f64]) -> IndicatorBlock {
    IndicatorBlock {
        domain_checksum: domain.checksum(),
        center: center.to_vec(),
        indices: (0..domain.len())
            .filter(|&i| region.contains(&domain.grid, &domain.sites[i]))
            .collect(),
    }
}
