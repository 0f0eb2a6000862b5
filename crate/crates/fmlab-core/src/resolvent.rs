//! Resolvent blocks `χₓ(H - E - iε)⁻¹χ_y`, the second-order resolvent
//! identity, the geometric (Simon–Lieb) factorization and Combes–Thomas fits.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::disorder::Ensemble;
use crate::error::{Error, Result};
use crate::fit::{fit_decay, DecayModel};
use crate::lattice::{self, region_block, IndicatorBlock, Region, SparseOperator};
use crate::linalg::{hs_norm, operator_norm, BandedLu, Csr};
use crate::par;

/// Normwise backward error accepted for a shifted solve.
pub const SOLVE_TOL: f64 = 1e-12;

/// Factorization of `H - z` reused for every right-hand side.
#[derive(Debug)]
pub struct ShiftedSolver {
    matrix: Csr,
    z: Complex64,
    lu: BandedLu<Complex64>,
    norm_inf: f64,
}

impl ShiftedSolver {
    /// Factor `H - E - iε`; `ε` must be nonzero (negative gives the adjoint).
    pub fn new(h: &SparseOperator, energy: f64, eps: f64) -> Result<Self> {
        if eps == 0.0 || !eps.is_finite() || !energy.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need finite E and nonzero ε, got E={energy} ε={eps}"
            )));
        }
        let m = &h.matrix;
        let z = Complex64::new(energy, eps);
        let (kl, ku) = m.bandwidth();
        let lu = BandedLu::factor(
            m.n,
            kl,
            ku,
            m.triplets()
                .map(|(i, j, v)| (i, j, Complex64::new(v, 0.0)))
                .chain((0..m.n).map(|i| (i, i, -z))),
        )?;
        let norm_inf = (0..m.n)
            .map(|i| m.row(i).map(|(j, v)| if i == j { (v - z).norm() } else { v.abs() }).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(ShiftedSolver {
            matrix: m.clone(),
            z,
            lu,
            norm_inf,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.n
    }

    /// Solve `(H - z) u = b`, returning `u` and the normwise backward error.
    pub fn solve(&self, b: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
        let mut u = self.lu.solve(b);
        let mut err = self.backward_error(&u, b);
        if err > SOLVE_TOL {
            // One step of iterative refinement.
            let r = self.residual(&u, b);
            let du = self.lu.solve(&r);
            u.iter_mut().zip(du).for_each(|(a, d)| *a += d);
            err = self.backward_error(&u, b);
        }
        if !(err <= SOLVE_TOL) {
            return Err(Error::SolveTolerance {
                residual: err,
                tol: SOLVE_TOL,
            });
        }
        Ok((u, err))
    }

    fn residual(&self, u: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        (0..self.matrix.n)
            .map(|i| {
                let au: Complex64 = self.matrix.row(i).map(|(j, v)| u[j] * v).sum::<Complex64>() - self.z * u[i];
                b[i] - au
            })
            .collect()
    }

    fn backward_error(&self, u: &[Complex64], b: &[Complex64]) -> f64 {
        let r = self.residual(u, b);
        let rn = r.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let un = u.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let bn = b.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let denom = self.norm_inf * un + bn;
        if denom == 0.0 {
            0.0
        } else {
            rn / denom
        }
    }

    /// `(H - z)⁻¹ e_j`.
    pub fn column(&self, j: usize) -> Result<(Vec<Complex64>, f64)> {
        let mut e = vec![Complex64::new(0.0, 0.0); self.dim()];
        e[j] = Complex64::new(1.0, 0.0);
        self.solve(&e)
    }

    /// Dense block with rows `rows` and columns `cols`, and the worst
    /// backward error over the solves.
    pub fn block_matrix(&self, rows: &[usize], cols: &[usize]) -> Result<(DMatrix<Complex64>, f64)> {
        let mut out = DMatrix::zeros(rows.len(), cols.len());
        let mut worst = 0.0f64;
        if rows.is_empty() {
            return Ok((out, 0.0));
        }
        for (c, &j) in cols.iter().enumerate() {
            let (u, err) = self.column(j)?;
            worst = worst.max(err);
            for (r, &i) in rows.iter().enumerate() {
                out[(r, c)] = u[i];
            }
        }
        Ok((out, worst))
    }

    pub fn block(&self, x: &IndicatorBlock, y: &IndicatorBlock) -> Result<BlockNormResult> {
        if x.is_empty() || y.is_empty() {
            return Ok(BlockNormResult::zero(x.len(), y.len()));
        }
        let (m, residual) = self.block_matrix(&x.indices, &y.indices)?;
        Ok(BlockNormResult {
            operator_norm: operator_norm(&m),
            hs_norm: hs_norm(&m),
            residual,
            rows: x.len(),
            cols: y.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockNormResult {
    pub operator_norm: f64,
    pub hs_norm: f64,
    pub residual: f64,
    pub rows: usize,
    pub cols: usize,
}

impl BlockNormResult {
    pub fn zero(rows: usize, cols: usize) -> Self {
        BlockNormResult {
            operator_norm: 0.0,
            hs_norm: 0.0,
            residual: 0.0,
            rows,
            cols,
        }
    }
}

pub fn resolvent_block(
    h: &SparseOperator,
    energy: f64,
    eps: f64,
    x: &IndicatorBlock,
    y: &IndicatorBlock,
) -> Result<BlockNormResult> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {eps}")));
    }
    if x.is_empty() || y.is_empty() {
        return Ok(BlockNormResult::zero(x.len(), y.len()));
    }
    ShiftedSolver::new(h, energy, eps)?.block(x, y)
}

/// Factorizations keyed by `(operator checksum, E, ε)`.
#[derive(Debug, Default)]
pub struct FactorCache {
    map: Mutex<HashMap<(String, u64, u64), Arc<ShiftedSolver>>>,
}

impl FactorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, h: &SparseOperator, energy: f64, eps: f64) -> Result<Arc<ShiftedSolver>> {
        let key = (h.checksum(), energy.to_bits(), eps.to_bits());
        if let Some(s) = self.map.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(ShiftedSolver::new(h, energy, eps)?);
        self.map
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert_with(|| Arc::clone(&s));
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub max_deviation: f64,
    pub relative_deviation: f64,
    pub lhs_norm: f64,
}

/// Compare `χₓRχ_y` with `χₓ(R_F + R_F W R_F + R_F W R W R_F)χ_y` where
/// `H = H_F - W`.
pub fn check_resolvent_identity(
    h: &SparseOperator,
    h_full: &SparseOperator,
    w: &[f64],
    energy: f64,
    eps: f64,
    x: &IndicatorBlock,
    y: &IndicatorBlock,
) -> Result<IdentityCheck> {
    let n = h.dim();
    if h_full.dim() != n || w.len() != n {
        return Err(Error::Precondition("operators and W must share one domain".into()));
    }
    let scale = h_full.matrix.vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for (i, j, v) in h_full.matrix.triplets() {
        let expect = if i == j { v - w[i] } else { v };
        if (h.matrix.get(i, j) - expect).abs() > 8.0 * f64::EPSILON * scale {
            return Err(Error::Precondition(format!("H != H_F - W at ({i},{j})")));
        }
    }
    if h.matrix.nnz() != h_full.matrix.nnz() {
        return Err(Error::Precondition("H and H_F have different sparsity".into()));
    }
    let r = ShiftedSolver::new(h, energy, eps)?;
    let rf = ShiftedSolver::new(h_full, energy, eps)?;
    let wmul = |v: &[Complex64]| -> Vec<Complex64> { v.iter().zip(w).map(|(a, b)| a * *b).collect() };
    let mut max_dev = 0.0f64;
    let mut lhs_norm = 0.0f64;
    for &j in &y.indices {
        let (lhs, _) = r.column(j)?;
        let (u, _) = rf.column(j)?;
        let (a, _) = rf.solve(&wmul(&u))?;
        let (b, _) = r.solve(&wmul(&u))?;
        let (c, _) = rf.solve(&wmul(&b))?;
        for &i in &x.indices {
            let rhs = u[i] + a[i] + c[i];
            max_dev = max_dev.max((lhs[i] - rhs).norm());
            lhs_norm = lhs_norm.max(lhs[i].norm());
        }
    }
    Ok(IdentityCheck {
        max_deviation: max_dev,
        relative_deviation: if lhs_norm > 0.0 { max_dev / lhs_norm } else { max_dev },
        lhs_norm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliReport {
    /// `lhs / (product of the three factors)` per realization.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub violations: usize,
    pub inner_shell: usize,
    pub outer_shell: usize,
}

/// Geometric resolvent factorization through the shells
/// `Λ_L(x)∖Λ_{L-2}(x)` and `Λ_{2R+L+2}(x)∖Λ_{2R+L}(x)`, `R` the single-site
/// support. `bound` counts realizations whose ratio exceeds it.
#[allow(clippy::too_many_arguments)]
pub fn check_sli(
    ensemble: &Ensemble,
    length: f64,
    x: &[f64],
    y: &[f64],
    energy: f64,
    eps: f64,
    samples: usize,
    seed: u64,
    bound: Option<f64>,
) -> Result<SliReport> {
    let dim = ensemble.domain.grid.dim;
    let ru = ensemble.profile.support();
    let outer = 2.0 * ru + length;
    let sep = lattice::max_dist(dim, x, y);
    if sep <= outer + 2.0 || length <= 2.0 {
        return Err(Error::DegenerateGeometry(format!(
            "|x-y| = {sep} must exceed 2R+L+2 = {} and L = {length} must exceed 2",
            outer + 2.0
        )));
    }
    let g = &ensemble.domain;
    let inner_domain = lattice::restrict(g, &Region::cube(x, length))?;
    let outer_domain = lattice::restrict(
        g,
        &Region::Outside {
            center: x.to_vec(),
            side: outer,
        },
    )?;
    let minus = Region::Shell {
        center: x.to_vec(),
        outer: length,
        inner: length - 2.0,
    };
    let plus = Region::Shell {
        center: x.to_vec(),
        outer: outer + 2.0,
        inner: outer,
    };
    let chi_x_g = lattice::indicator(g, x);
    let chi_y_g = lattice::indicator(g, y);
    let chi_x_b = lattice::indicator(&inner_domain, x);
    let minus_b = region_block(&inner_domain, &minus, x);
    let minus_g = region_block(g, &minus, x);
    let plus_g = region_block(g, &plus, x);
    let plus_c = region_block(&outer_domain, &plus, x);
    let chi_y_c = lattice::indicator(&outer_domain, y);
    if chi_x_g.is_empty() || chi_y_g.is_empty() || minus_g.is_empty() || plus_g.is_empty() {
        return Err(Error::DegenerateGeometry("an indicator block of the factorization is empty".into()));
    }
    let map_into = |sub: &lattice::Domain| -> Vec<usize> {
        sub.sites.iter().map(|s| g.index_of(s).expect("subdomain site")).collect()
    };
    let inner_idx = map_into(&inner_domain);
    let outer_idx = map_into(&outer_domain);
    let ratios = par::try_map_indexed(samples, |k| -> Result<f64> {
        let run = || -> Result<f64> {
            let real = ensemble.realization(seed, k as u64);
            let v = ensemble.potential(&real);
            let hg = lattice::assemble_hamiltonian(g, &v)?;
            let vb: Vec<f64> = inner_idx.iter().map(|&i| v[i]).collect();
            let vc: Vec<f64> = outer_idx.iter().map(|&i| v[i]).collect();
            let hb = lattice::assemble_hamiltonian(&inner_domain, &vb)?;
            let hc = lattice::assemble_hamiltonian(&outer_domain, &vc)?;
            let sg = ShiftedSolver::new(&hg, energy, eps)?;
            let lhs = sg.block(&chi_x_g, &chi_y_g)?.operator_norm;
            let f1 = ShiftedSolver::new(&hb, energy, eps)?.block(&chi_x_b, &minus_b)?.operator_norm;
            let f2 = sg.block(&minus_g, &plus_g)?.operator_norm;
            let f3 = ShiftedSolver::new(&hc, energy, eps)?.block(&plus_c, &chi_y_c)?.operator_norm;
            let ratio = lhs / (f1 * f2 * f3);
            if !ratio.is_finite() {
                return Err(Error::NonFinite { index: k });
            }
            Ok(ratio)
        };
        run().map_err(|e| e.in_realization(k as u64))
    })?;
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let violations = bound.map_or(0, |b| ratios.iter().filter(|&&r| r > b).count());
    Ok(SliReport {
        ratios,
        max_ratio,
        violations,
        inner_shell: minus_g.len(),
        outer_shell: plus_g.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub separation: f64,
    pub block: BlockNormResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombesThomasFit {
    pub model: DecayModel,
    pub profile: Vec<ProfilePoint>,
}

/// Fit `‖χₓRχ_{x+r e₁}‖` against `r` for `E` below the spectral edge `edge`.
pub fn combes_thomas_fit(
    h: &SparseOperator,
    domain: &lattice::Domain,
    energy: f64,
    eps: f64,
    edge: f64,
    x: &[f64],
    separations: &[f64],
) -> Result<CombesThomasFit> {
    if energy >= edge {
        return Err(Error::EnergyInSpectrum { energy, edge });
    }
    if separations.len() < 4 {
        return Err(Error::DegenerateFit(format!("{} separations, need 4", separations.len())));
    }
    let solver = ShiftedSolver::new(h, energy, eps)?;
    let cx = lattice::indicator(domain, x);
    let mut profile = Vec::with_capacity(separations.len());
    for &r in separations {
        let mut yv = x.to_vec();
        yv[0] += r;
        let cy = lattice::indicator(domain, &yv);
        profile.push(ProfilePoint {
            separation: r,
            block: solver.block(&cx, &cy)?,
        });
    }
    let rs: Vec<f64> = profile.iter().map(|p| p.separation).collect();
    let ys: Vec<f64> = profile.iter().map(|p| p.block.operator_norm).collect();
    Ok(CombesThomasFit {
        model: fit_decay(&rs, &ys)?,
        profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{assemble_hamiltonian, build_domain, indicator, Boundary, GridSpec};

    #[test]
    fn scalar_resolvent() {
        let d = build_domain(GridSpec::new(1, 1.0).unwrap(), Region::cube(&[0.0], 1.5), Boundary::Dirichlet).unwrap();
        assert_eq!(d.len(), 1);
        // Single site: diagonal 2 from the two Dirichlet faces plus v.
        let h = assemble_hamiltonian(&d, &[1.0]).unwrap();
        let b = indicator(&d, &[0.0]);
        let (e, eps) = (0.5, 0.25);
        let r = resolvent_block(&h, e, eps, &b, &b).unwrap();
        let expect = ((3.0f64 - e).powi(2) + eps * eps).powf(-0.5);
        assert!((r.operator_norm - expect).abs() < 1e-14);
        assert!((r.hs_norm - expect).abs() < 1e-14);
    }

    #[test]
    fn empty_block_is_zero() {
        let d = build_domain(GridSpec::new(1, 1.0).unwrap(), Region::cube(&[0.0], 6.0), Boundary::Dirichlet).unwrap();
        let h = assemble_hamiltonian(&d, &vec![0.0; d.len()]).unwrap();
        let r = resolvent_block(&h, 0.0, 1e-3, &indicator(&d, &[0.0]), &indicator(&d, &[40.0])).unwrap();
        assert_eq!(r.operator_norm, 0.0);
    }

    #[test]
    fn cache_reuses_factorizations() {
        let d = build_domain(GridSpec::new(1, 1.0).unwrap(), Region::cube(&[0.0], 6.0), Boundary::Dirichlet).unwrap();
        let h = assemble_hamiltonian(&d, &vec![0.0; d.len()]).unwrap();
        let cache = FactorCache::new();
        let a = cache.get(&h, 0.1, 1e-3).unwrap();
        let b = cache.get(&h, 0.1, 1e-3).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        cache.get(&h, 0.2, 1e-3).unwrap();
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn energy_in_spectrum_rejected() {
        let d = build_domain(GridSpec::new(1, 1.0).unwrap(), Region::cube(&[0.0], 20.0), Boundary::Dirichlet).unwrap();
        let h = assemble_hamiltonian(&d, &vec![0.0; d.len()]).unwrap();
        let r = combes_thomas_fit(&h, &d, 0.5, 1e-6, 0.02, &[0.0], &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(r, Err(Error::EnergyInSpectrum { .. })));
    }
}
