//! Disorder averages of fractional powers of resolvent blocks and the
//! two-coupling integrals behind them.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::disorder::Ensemble;
use crate::error::{Error, Result};
use crate::fit::{fit_decay, linear_fit, DecayModel};
use crate::lattice;
use crate::linalg::{hs_norm, operator_norm};
use crate::resolvent::ShiftedSolver;
use crate::{par, quad, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub s: f64,
    pub energy: f64,
    pub eps: f64,
    pub target: Vec<f64>,
    pub separation: f64,
    pub samples: usize,
    /// Mean of `‖χₓRχ_y‖^s` (operator norm).
    pub mean: f64,
    pub stderr: f64,
    /// Same for the Hilbert–Schmidt norm.
    pub hs_mean: f64,
    pub hs_stderr: f64,
    pub seed: u64,
    /// Realization indices used: `0..samples`.
    pub first_index: u64,
}

fn check_power(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidArgument(format!("s = {s} must lie in (0, 1)")));
    }
    Ok(())
}

/// Per realization, the operator and HS norms of `χₓRχ_y` for every target
/// and every `(E, ε)` pair, from one factorization per pair.
fn realization_norms(
    ensemble: &Ensemble,
    grid: &[(f64, f64)],
    x: &lattice::IndicatorBlock,
    ys: &[lattice::IndicatorBlock],
    seed: u64,
    index: u64,
) -> Result<Vec<Vec<(f64, f64)>>> {
    let h = ensemble.hamiltonian(seed, index)?;
    let mut out = Vec::with_capacity(grid.len());
    for &(e, eps) in grid {
        let solver = ShiftedSolver::new(&h, e, eps)?;
        // R is complex symmetric, so columns through x give every χ_y R χₓ.
        let mut cols = Vec::with_capacity(x.len());
        for &j in &x.indices {
            cols.push(solver.column(j)?.0);
        }
        let norms = ys
            .iter()
            .map(|y| {
                if x.is_empty() || y.is_empty() {
                    return (0.0, 0.0);
                }
                let b = DMatrix::from_fn(y.len(), x.len(), |r, c| cols[c][y.indices[r]]);
                (operator_norm(&b), hs_norm(&b))
            })
            .collect();
        out.push(norms);
    }
    Ok(out)
}

/// Estimates of `E‖χₓRχ_y‖^s` for every `(E, ε)` in `grid` and target in `ys`,
/// indexed `[grid][target]`.
#[allow(clippy::too_many_arguments)]
pub fn moment_grid(
    ensemble: &Ensemble,
    grid: &[(f64, f64)],
    s: f64,
    x: &[f64],
    ys: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<Vec<Vec<MomentEstimate>>> {
    check_power(s)?;
    if samples < 100 {
        return Err(Error::InvalidArgument(format!("N = {samples} must be at least 100")));
    }
    if grid.iter().any(|&(_, eps)| !(eps > 0.0)) {
        return Err(Error::InvalidArgument("ε must be positive".into()));
    }
    let dim = ensemble.domain.grid.dim;
    let cx = lattice::indicator(&ensemble.domain, x);
    let cys: Vec<_> = ys.iter().map(|y| lattice::indicator(&ensemble.domain, y)).collect();
    let per = par::try_map_indexed(samples, |k| {
        realization_norms(ensemble, grid, &cx, &cys, seed, k as u64).map_err(|e| e.in_realization(k as u64))
    })?;
    let mut out = Vec::with_capacity(grid.len());
    for (g, &(e, eps)) in grid.iter().enumerate() {
        let mut row = Vec::with_capacity(ys.len());
        for (t, y) in ys.iter().enumerate() {
            let op: Vec<f64> = per.iter().map(|r| r[g][t].0.powf(s)).collect();
            let hs: Vec<f64> = per.iter().map(|r| r[g][t].1.powf(s)).collect();
            let (mean, stderr) = par::mean_and_stderr(&op);
            let (hs_mean, hs_stderr) = par::mean_and_stderr(&hs);
            row.push(MomentEstimate {
                s,
                energy: e,
                eps,
                target: y.clone(),
                separation: lattice::max_dist(dim, x, y),
                samples,
                mean,
                stderr,
                hs_mean,
                hs_stderr,
                seed,
                first_index: 0,
            });
        }
        out.push(row);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn fractional_moment(
    ensemble: &Ensemble,
    energy: f64,
    eps: f64,
    s: f64,
    x: &[f64],
    y: &[f64],
    samples: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    let mut g = moment_grid(ensemble, &[(energy, eps)], s, x, &[y.to_vec()], samples, seed)?;
    Ok(g.remove(0).remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProfile {
    /// All grid estimates, `[grid][separation]`.
    pub grid: Vec<Vec<MomentEstimate>>,
    /// Per separation, the estimate with the largest mean over the grid.
    pub sup: Vec<MomentEstimate>,
    pub model: DecayModel,
    pub cap: Option<f64>,
    pub within_cap: bool,
}

/// Grid-maximal fractional moments along `x + r e₁` and their decay fit.
#[allow(clippy::too_many_arguments)]
pub fn moment_decay_profile(
    ensemble: &Ensemble,
    grid: &[(f64, f64)],
    s: f64,
    x: &[f64],
    separations: &[f64],
    samples: usize,
    seed: u64,
    cap: Option<f64>,
) -> Result<MomentProfile> {
    if separations.len() < 4 {
        return Err(Error::DegenerateFit(format!("{} separations, need 4", separations.len())));
    }
    let ys: Vec<Vec<f64>> = separations
        .iter()
        .map(|&r| {
            let mut y = x.to_vec();
            y[0] += r;
            y
        })
        .collect();
    let grid_est = moment_grid(ensemble, grid, s, x, &ys, samples, seed)?;
    let sup: Vec<MomentEstimate> = (0..ys.len())
        .map(|t| {
            grid_est
                .iter()
                .map(|row| &row[t])
                .max_by(|a, b| a.mean.total_cmp(&b.mean))
                .expect("nonempty grid")
                .clone()
        })
        .collect();
    let rs: Vec<f64> = sup.iter().map(|m| m.separation).collect();
    let means: Vec<f64> = sup.iter().map(|m| m.mean).collect();
    let model = fit_decay(&rs, &means)?;
    let within_cap = cap.is_none_or(|c| grid_est.iter().flatten().all(|m| m.mean <= c));
    Ok(MomentProfile {
        grid: grid_est,
        sup,
        model,
        cap,
        within_cap,
    })
}

/// Two-coupling instance: `A` dissipative, `U₁, U₂ >= 0` diagonal, `M₁, M₂`
/// Hilbert–Schmidt weights.
#[derive(Debug, Clone)]
pub struct CouplingPair {
    pub a: DMatrix<Complex64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub m1: DMatrix<Complex64>,
    pub m2: DMatrix<Complex64>,
}

impl CouplingPair {
    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n || self.u1.len() != n || self.u2.len() != n {
            return Err(Error::InvalidArgument("A, U₁, U₂ dimensions differ".into()));
        }
        if self.m1.ncols() != n || self.m2.nrows() != n {
            return Err(Error::InvalidArgument("M₁ or M₂ does not match A".into()));
        }
        if self.u1.iter().chain(&self.u2).any(|&u| !(u >= 0.0)) {
            return Err(Error::InvalidArgument("U₁ and U₂ must be nonnegative".into()));
        }
        // Im A = (A - A*)/2i must be positive semidefinite.
        let im = (&self.a - self.a.adjoint()) * Complex64::new(0.0, -0.5);
        let herm = DMatrix::from_fn(n, n, |i, j| im[(i, j)].re);
        let min = nalgebra::SymmetricEigen::new(herm).eigenvalues.min();
        if min < -1e-12 {
            return Err(Error::InvalidArgument(format!("A is not dissipative: min Im eigenvalue {min}")));
        }
        Ok(())
    }

    /// `A = -(S - E - iε)` for real symmetric `S`.
    pub fn from_symmetric(s: &DMatrix<f64>, energy: f64, eps: f64) -> DMatrix<Complex64> {
        DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| {
            let d = if i == j { Complex64::new(energy, eps) } else { Complex64::new(0.0, 0.0) };
            d - s[(i, j)]
        })
    }

    /// `‖M₁U₁^{1/2}(A - v₁U₁ - v₂U₂)⁻¹U₂^{1/2}M₂‖_HS`.
    pub fn norm_at(&self, v1: f64, v2: f64) -> Result<f64> {
        let n = self.a.nrows();
        let mut k = self.a.clone();
        for i in 0..n {
            k[(i, i)] -= Complex64::new(v1 * self.u1[i] + v2 * self.u2[i], 0.0);
        }
        let rhs = DMatrix::from_fn(n, self.m2.ncols(), |i, j| self.m2[(i, j)] * self.u2[i].sqrt());
        let x = k
            .lu()
            .solve(&rhs)
            .ok_or(Error::Singular { pivot: 0 })?;
        let left = DMatrix::from_fn(self.m1.nrows(), n, |i, j| self.m1[(i, j)] * self.u1[j].sqrt());
        Ok(hs_norm(&(left * x)))
    }

    pub fn hs_weights(&self) -> (f64, f64) {
        (hs_norm(&self.m1), hs_norm(&self.m2))
    }

    /// 1×1 instance with `S = 0`, `U₁ = U₂ = 1` and `M₁ = M₂ = weight`.
    pub fn scalar(energy: f64, eps: f64, weight: f64) -> CouplingPair {
        let m = DMatrix::from_element(1, 1, Complex64::new(weight, 0.0));
        CouplingPair {
            a: CouplingPair::from_symmetric(&DMatrix::zeros(1, 1), energy, eps),
            u1: vec![1.0],
            u2: vec![1.0],
            m1: m.clone(),
            m2: m,
        }
    }

    /// Random `n × n` instance: symmetric `S` and weights with entries
    /// uniform in `[-1/2, 1/2]`, couplings uniform in `[0, 1]`, `E = 1/2`.
    pub fn random(n: usize, eps: f64, seed: u64) -> CouplingPair {
        let mut r = rng::stream(seed, &[7]);
        let mut s = DMatrix::from_fn(n, n, |_, _| r.random::<f64>() - 0.5);
        s = (&s + s.transpose()) * 0.5;
        let m = |r: &mut rand_chacha::ChaCha8Rng| DMatrix::from_fn(n, n, |_, _| Complex64::new(r.random::<f64>() - 0.5, 0.0));
        CouplingPair {
            a: CouplingPair::from_symmetric(&s, 0.5, eps),
            u1: (0..n).map(|_| r.random::<f64>()).collect(),
            u2: (0..n).map(|_| r.random::<f64>()).collect(),
            m1: m(&mut r),
            m2: m(&mut r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkhorseResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    /// `‖M₁‖_HS^s ‖M₂‖_HS^s`.
    pub weight: f64,
    /// `value / weight`, the instance's empirical constant.
    pub ratio: f64,
}

/// `∫₀¹∫₀¹ ‖M₁U₁^{1/2}(A - v₁U₁ - v₂U₂)⁻¹U₂^{1/2}M₂‖_HS^s dv₁ dv₂` by
/// iterated adaptive Gauss–Legendre quadrature.
pub fn workhorse_average(pair: &CouplingPair, s: f64, rel_tol: f64) -> Result<WorkhorseResult> {
    check_power(s)?;
    pair.validate()?;
    let (w1, w2) = pair.hs_weights();
    let weight = w1.powf(s) * w2.powf(s);
    if weight == 0.0 {
        return Ok(WorkhorseResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
            weight: 0.0,
            ratio: 0.0,
        });
    }
    let mut failure: Option<Error> = None;
    let mut evaluations = 0usize;
    let mut inner_error = 0.0f64;
    let outer = quad::adaptive(0.0, 1.0, 0.0, rel_tol, |v1| {
        let r = quad::adaptive(0.0, 1.0, 0.0, rel_tol * 0.1, |v2| match pair.norm_at(v1, v2) {
            Ok(n) => n.powf(s),
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        });
        evaluations += r.evaluations;
        inner_error = inner_error.max(r.error);
        r.value
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let error = outer.error + inner_error;
    if !(error <= 100.0 * rel_tol * outer.value.abs()) {
        return Err(Error::Quadrature { error });
    }
    Ok(WorkhorseResult {
        value: outer.value,
        error,
        evaluations,
        weight,
        ratio: outer.value / weight,
    })
}

/// HS norms at `samples` uniform points of the coupling square.
pub fn sample_norms(pair: &CouplingPair, samples: usize, seed: u64) -> Result<Vec<f64>> {
    pair.validate()?;
    par::try_map_indexed(samples, |k| {
        let v1 = rng::unit_open(rng::derive(seed, &[k as u64, 0]));
        let v2 = rng::unit_open(rng::derive(seed, &[k as u64, 1]));
        pair.norm_at(v1, v2)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub thresholds: Vec<f64>,
    pub measures: Vec<f64>,
    pub samples: usize,
    /// Log-log slope over the top decade with measure in `(10/N, 1/2)`.
    pub slope: Option<f64>,
    pub fit_window: Option<(f64, f64)>,
    /// `sup_t t·measure(t) / (‖M₁‖_HS ‖M₂‖_HS)`.
    pub constant: f64,
    pub hs_product: f64,
    pub insufficient: bool,
}

/// Exceedance measures `|{v : norm(v) > t}|` from precomputed sample norms.
pub fn tail_report(values: &[f64], thresholds: &[f64], hs_product: f64) -> Result<TailReport> {
    if thresholds.len() < 2 {
        return Err(Error::InvalidArgument("need at least two thresholds".into()));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) || !(thresholds[0] > 0.0) {
        return Err(Error::InvalidArgument("thresholds must be positive and increasing".into()));
    }
    let last = *thresholds.last().unwrap();
    if last / thresholds[0] < 100.0 - 1e-9 {
        return Err(Error::InvalidArgument("thresholds must span two decades".into()));
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let measures: Vec<f64> = thresholds
        .iter()
        .map(|&t| {
            let above = n - sorted.partition_point(|&v| v <= t);
            above as f64 / n as f64
        })
        .collect();
    let ok: Vec<usize> = (0..thresholds.len())
        .filter(|&i| measures[i] > 10.0 / n as f64 && measures[i] < 0.5)
        .collect();
    let (slope, window) = match ok.last() {
        Some(&top) => {
            let t_hi = thresholds[top];
            let idx: Vec<usize> = ok.iter().cloned().filter(|&i| thresholds[i] >= t_hi / 10.0 - 1e-12).collect();
            if idx.len() >= 5 {
                let x: Vec<f64> = idx.iter().map(|&i| thresholds[i].ln()).collect();
                let y: Vec<f64> = idx.iter().map(|&i| measures[i].ln()).collect();
                (Some(linear_fit(&x, &y)?.slope), Some((thresholds[idx[0]], t_hi)))
            } else {
                (None, None)
            }
        }
        None => (None, None),
    };
    let constant = thresholds
        .iter()
        .zip(&measures)
        .map(|(t, m)| t * m)
        .fold(0.0, f64::max)
        / hs_product;
    Ok(TailReport {
        thresholds: thresholds.to_vec(),
        measures,
        samples: n,
        insufficient: slope.is_none(),
        slope,
        fit_window: window,
        constant,
        hs_product,
    })
}

pub fn weak_l1_tail(pair: &CouplingPair, thresholds: &[f64], samples: usize, seed: u64) -> Result<TailReport> {
    let values = sample_norms(pair, samples, seed)?;
    let (w1, w2) = pair.hs_weights();
    tail_report(&values, thresholds, w1 * w2)
}

/// `Σ aᵢ^s - (Σ aᵢ)^s`, nonnegative for `aᵢ >= 0`, `0 < s <= 1`.
pub fn subadditivity_gap(a: &[f64], s: f64) -> f64 {
    a.iter().map(|v| v.powf(s)).sum::<f64>() - a.iter().sum::<f64>().powf(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(energy: f64, eps: f64) -> CouplingPair {
        let one = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        CouplingPair {
            a: CouplingPair::from_symmetric(&DMatrix::zeros(1, 1), energy, eps),
            u1: vec![1.0],
            u2: vec![1.0],
            m1: one.clone(),
            m2: one,
        }
    }

    #[test]
    fn zero_weights_give_zero() {
        let mut p = scalar(1.0, 1e-3);
        p.m1 = DMatrix::zeros(1, 1);
        p.m2 = DMatrix::zeros(1, 1);
        assert_eq!(workhorse_average(&p, 0.5, 1e-8).unwrap().value, 0.0);
    }

    #[test]
    fn scalar_workhorse_small_eps() {
        // For ε → 0 the integral of |v₁+v₂-1|^{-1/2} over the square is 8/3.
        let r = workhorse_average(&scalar(1.0, 1e-10), 0.5, 1e-9).unwrap();
        assert!((r.value - 8.0 / 3.0).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn tail_measure_monotone() {
        let v: Vec<f64> = (1..=1000).map(|k| 1.0 / k as f64).collect();
        let th: Vec<f64> = (0..30).map(|k| 0.01 * 1.2f64.powi(k)).collect();
        let r = tail_report(&v, &th, 1.0).unwrap();
        assert!(r.measures.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn subadditivity_examples() {
        assert!(subadditivity_gap(&[1.0, 1.0], 0.5) > 0.0);
        assert_eq!(subadditivity_gap(&[3.0], 0.3), 0.0);
    }
}
