//! Eigenpairs, initial-scale probabilities, boundary-condition bracketing,
//! first-order perturbation, large deviations of coupling averages,
//! eigenfunction decay and the time-evolution correlator.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::disorder::{CouplingLaw, Ensemble};
use crate::error::{Error, Result};
use crate::fit::{fit_decay, linear_fit, wilson_interval, DecayModel};
use crate::lattice::{self, assemble_hamiltonian, Boundary, Domain, Region, SparseOperator};
use crate::linalg::{dense_eigen, lanczos_lowest, operator_norm, EigenPairs};
use crate::{par, quad, rng};

/// Operators up to this size are diagonalized densely.
pub const DENSE_LIMIT: usize = 400;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenSolveResult {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub dense: bool,
}

pub fn lowest_eigenpairs(h: &SparseOperator, k: usize) -> Result<EigenSolveResult> {
    let n = h.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={n}")));
    }
    let dense = n <= DENSE_LIMIT;
    let EigenPairs {
        values,
        vectors,
        residuals,
    } = if dense {
        dense_eigen(&h.matrix, k)
    } else {
        lanczos_lowest(&h.matrix, k, 0x1a2b_3c4d)?
    };
    let (lo, hi) = h.matrix.gershgorin();
    let tol = 1e-8 * lo.abs().max(hi.abs()).max(1.0);
    if let Some(&worst) = residuals.iter().max_by(|a, b| a.total_cmp(b)) {
        if worst > tol {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: worst,
            });
        }
    }
    Ok(EigenSolveResult {
        values,
        vectors,
        residuals,
        dense,
    })
}

pub fn ground_energy(h: &SparseOperator) -> Result<f64> {
    Ok(lowest_eigenpairs(h, 1)?.values[0])
}

/// Full dense eigendecomposition, ascending.
pub fn full_spectrum(h: &SparseOperator) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(h.matrix.to_dense());
    let mut order: Vec<usize> = (0..h.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(h.dim(), h.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub event: String,
    pub length: f64,
    pub window: (f64, f64),
    pub trials: u64,
    pub successes: u64,
    pub estimate: f64,
    pub ci: (f64, f64),
}

/// Fraction of realizations whose ground energy lies in `[e0, e0 + L^{-m}]`.
/// The ensemble's domain is the box or strip of side `length`.
pub fn ils_probability(ensemble: &Ensemble, e0: f64, length: f64, m: f64, samples: usize, seed: u64) -> Result<ProbabilityEstimate> {
    if !(m > 0.0 && m < 2.0) {
        return Err(Error::InvalidArgument(format!("m = {m} must lie in (0, 2)")));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let delta = length.powf(-m);
    let hits = par::try_map_indexed(samples, |k| -> Result<u64> {
        let e1 = ensemble
            .hamiltonian(seed, k as u64)
            .and_then(|h| ground_energy(&h))
            .map_err(|e| e.in_realization(k as u64))?;
        Ok(u64::from(e1 <= e0 + delta))
    })?;
    let successes: u64 = hits.iter().sum();
    let trials = samples as u64;
    let estimate = successes as f64 / trials as f64;
    let (lo, hi) = wilson_interval(successes, trials, 1.959_963_984_540_054);
    Ok(ProbabilityEstimate {
        event: format!("E1 <= E0 + L^-{m}"),
        length,
        window: (e0, e0 + delta),
        trials,
        successes,
        estimate,
        ci: (lo.min(estimate), hi.max(estimate)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketingReport {
    pub neumann_whole: f64,
    pub dirichlet_whole: f64,
    pub neumann_pieces: Vec<f64>,
    /// `E₁(N) - E₁(D)`, should be `<= 0`.
    pub upper_gap: f64,
    /// `min_k E₁(N_k) - E₁(N)`, should be `<= 0`.
    pub lower_gap: f64,
    pub holds: bool,
}

pub const BRACKETING_SLACK: f64 = 1e-9;

/// Neumann/Dirichlet bracketing on a strip split into sub-strips.
pub fn bracketing_check(strip: &Domain, pieces: &[Region], potential: &[f64]) -> Result<BracketingReport> {
    if pieces.is_empty() {
        return Err(Error::InvalidArgument("empty partition".into()));
    }
    if let Region::Strip { center, width, .. } = &strip.geometry {
        for p in pieces {
            match p {
                Region::Strip {
                    center: c, width: w, ..
                } if c.len() == center.len() && w == width => {}
                _ => {
                    return Err(Error::InvalidArgument(
                        "pieces of a strip must be strips of the same width".into(),
                    ))
                }
            }
        }
    }
    let neumann = strip.with_boundary(Boundary::Robin { sigma: 0.0 });
    let dirichlet = strip.with_boundary(Boundary::Dirichlet);
    let mut owner = vec![usize::MAX; strip.len()];
    let mut piece_domains = Vec::with_capacity(pieces.len());
    for (k, p) in pieces.iter().enumerate() {
        let d = lattice::restrict(&neumann, p)?;
        for s in &d.sites {
            let i = strip.index_of(s).expect("restricted site");
            if owner[i] != usize::MAX {
                return Err(Error::InvalidArgument(format!("pieces {} and {k} overlap", owner[i])));
            }
            owner[i] = k;
        }
        piece_domains.push(d);
    }
    if let Some(i) = owner.iter().position(|&o| o == usize::MAX) {
        return Err(Error::InvalidArgument(format!(
            "site {:?} is not covered by any piece",
            strip.sites[i]
        )));
    }
    let e_n = ground_energy(&assemble_hamiltonian(&neumann, potential)?)?;
    let e_d = ground_energy(&assemble_hamiltonian(&dirichlet, potential)?)?;
    let mut e_pieces = Vec::with_capacity(pieces.len());
    for d in &piece_domains {
        let v: Vec<f64> = d.sites.iter().map(|s| potential[strip.index_of(s).unwrap()]).collect();
        e_pieces.push(ground_energy(&assemble_hamiltonian(d, &v)?)?);
    }
    let min_piece = e_pieces.iter().cloned().fold(f64::INFINITY, f64::min);
    let upper_gap = e_n - e_d;
    let lower_gap = min_piece - e_n;
    Ok(BracketingReport {
        neumann_whole: e_n,
        dirichlet_whole: e_d,
        neumann_pieces: e_pieces,
        upper_gap,
        lower_gap,
        holds: upper_gap <= BRACKETING_SLACK && lower_gap <= BRACKETING_SLACK,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    /// `(t, (E₁(t) - E₁(-t)) / 2t)`.
    pub differences: Vec<(f64, f64)>,
    /// Extrapolation of the two smallest steps removing the `O(t²)` term.
    pub extrapolated: f64,
    pub inner_product: f64,
    pub discrepancy: f64,
    pub relative_discrepancy: f64,
    pub gap: f64,
}

/// Compare the central difference of `t ↦ E₁(H₀ + tV)` at 0 with `⟨ψ₀, Vψ₀⟩`.
pub fn perturbation_derivative_check(domain: &Domain, background: &[f64], v: &[f64], steps: &[f64]) -> Result<DerivativeCheck> {
    if v.len() != domain.len() || background.len() != domain.len() {
        return Err(Error::LengthMismatch {
            expected: domain.len(),
            got: v.len().min(background.len()),
        });
    }
    if steps.is_empty() || steps.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("steps must be positive".into()));
    }
    let h0 = assemble_hamiltonian(domain, background)?;
    let base = lowest_eigenpairs(&h0, 2.min(domain.len()))?;
    let gap = if base.values.len() > 1 {
        base.values[1] - base.values[0]
    } else {
        f64::INFINITY
    };
    if gap <= 1e-6 {
        return Err(Error::DegenerateGroundState { gap });
    }
    let psi = &base.vectors[0];
    let inner: f64 = psi.iter().zip(v).map(|(p, w)| w * p * p).sum();
    let shifted = |t: f64| -> Result<f64> {
        let pot: Vec<f64> = background.iter().zip(v).map(|(b, w)| b + t * w).collect();
        ground_energy(&assemble_hamiltonian(domain, &pot)?)
    };
    let mut differences = Vec::with_capacity(steps.len());
    for &t in steps {
        differences.push((t, (shifted(t)? - shifted(-t)?) / (2.0 * t)));
    }
    let mut sorted = differences.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let extrapolated = if sorted.len() >= 2 {
        let (t1, d1) = sorted[1];
        let (t2, d2) = sorted[0];
        (t1 * t1 * d2 - t2 * t2 * d1) / (t1 * t1 - t2 * t2)
    } else {
        sorted[0].1
    };
    let discrepancy = (extrapolated - inner).abs();
    let scale = inner.abs().max(v.iter().fold(0.0f64, |a, x| a.max(x.abs()))).max(f64::MIN_POSITIVE);
    Ok(DerivativeCheck {
        differences,
        extrapolated,
        inner_product: inner,
        discrepancy,
        relative_discrepancy: discrepancy / scale,
        gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationPoint {
    pub count: usize,
    pub probability: f64,
    pub stderr: f64,
    pub hits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub threshold: f64,
    pub points: Vec<DeviationPoint>,
    /// Slope of `ln P` against the count.
    pub slope: Option<f64>,
    pub tilt: f64,
    pub importance_sampled: bool,
    pub below_resolution: bool,
}

/// Mean of the exponential density `∝ e^{θx}` on `[0, M]`.
fn tilted_mean(theta: f64, m: f64) -> f64 {
    let u = theta * m;
    if u.abs() < 1e-6 {
        return m * (0.5 + u / 12.0);
    }
    m * (1.0 / (-(-u).exp_m1()) - 1.0 / u)
}

fn solve_tilt(target: f64, m: f64) -> f64 {
    let (mut lo, mut hi) = (-1e6 / m, 1e6 / m);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tilted_mean(mid, m) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Probability that the mean of `n` iid couplings is at most
/// `fraction · mean`, for each `n` in `counts`. Laws with a density are
/// sampled from an exponentially tilted proposal with exact likelihood
/// weights; a point mass falls back to plain sampling.
pub fn large_deviation_probe(law: &CouplingLaw, counts: &[usize], fraction: f64, samples: usize, seed: u64) -> Result<DeviationReport> {
    law.validate()?;
    if !(fraction < 1.0 && fraction > 0.0) {
        return Err(Error::Precondition(format!(
            "threshold fraction {fraction} must lie strictly between 0 and the mean"
        )));
    }
    if samples == 0 || counts.is_empty() {
        return Err(Error::InvalidArgument("need samples and counts".into()));
    }
    let m = law.eta_max();
    let threshold = fraction * law.mean();
    let tilted = law.has_density();
    let theta = if tilted { solve_tilt(threshold, m) } else { 0.0 };
    let u = theta * m;
    // ln g(x) = ln(θ / (e^{θM} - 1)) + θx
    let log_norm = if u.abs() < 1e-12 { -m.ln() } else { (theta / u.exp_m1()).ln() };
    let mut points = Vec::with_capacity(counts.len());
    for &n in counts {
        let contrib = par::map_indexed(samples, |k| -> (f64, bool) {
            let mut rng = rng::stream(seed, &[n as u64, k as u64]);
            let mut sum = 0.0;
            let mut logw = 0.0;
            for _ in 0..n {
                let v: f64 = rng.random();
                let x = if tilted {
                    if u.abs() < 1e-12 {
                        v * m
                    } else {
                        ((v * u.exp_m1()).ln_1p() / theta).clamp(0.0, m)
                    }
                } else {
                    law.quantile(v)
                };
                if tilted {
                    logw += law.density(x).ln() - (log_norm + theta * x);
                }
                sum += x;
            }
            if sum / n as f64 <= threshold {
                (if tilted { logw.exp() } else { 1.0 }, true)
            } else {
                (0.0, false)
            }
        });
        let vals: Vec<f64> = contrib.iter().map(|c| c.0).collect();
        let hits = contrib.iter().filter(|c| c.1).count() as u64;
        let (p, se) = par::mean_and_stderr(&vals);
        points.push(DeviationPoint {
            count: n,
            probability: p,
            stderr: se,
            hits,
        });
    }
    let positive: Vec<&DeviationPoint> = points.iter().filter(|p| p.probability > 0.0).collect();
    let slope = if positive.len() >= 2 {
        let x: Vec<f64> = positive.iter().map(|p| p.count as f64).collect();
        let y: Vec<f64> = positive.iter().map(|p| p.probability.ln()).collect();
        Some(linear_fit(&x, &y)?.slope)
    } else {
        None
    };
    Ok(DeviationReport {
        threshold,
        below_resolution: points.iter().all(|p| p.hits == 0),
        points,
        slope,
        tilt: theta,
        importance_sampled: tilted,
    })
}

/// Cramér rate `I(a) = sup_θ (θa - ln E e^{θη})` by quadrature of the
/// moment generating function and golden-section search over `θ <= 0`.
pub fn cramer_rate(law: &CouplingLaw, a: f64) -> f64 {
    let m = law.eta_max();
    let log_mgf = |theta: f64| -> f64 {
        if let CouplingLaw::Degenerate { at, .. } = law {
            return theta * at;
        }
        // Integrate e^{θ(x - a)} to keep the exponent bounded near the optimum.
        let r = quad::adaptive(0.0, m, 1e-300, 1e-13, |x| law.density(x) * (theta * (x - a)).exp());
        r.value.ln() + theta * a
    };
    let objective = |theta: f64| theta * a - log_mgf(theta);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (-2000.0 / m, 0.0);
    let mut c = hi - gr * (hi - lo);
    let mut d = lo + gr * (hi - lo);
    let (mut fc, mut fd) = (objective(c), objective(d));
    for _ in 0..200 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = objective(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = objective(d);
        }
    }
    objective(0.5 * (lo + hi))
}

/// Unit-cube norms `‖χₓψ‖` for every integer point `x` whose cube meets the domain.
pub fn cube_norms(domain: &Domain, psi: &[f64]) -> Vec<([f64; 3], f64)> {
    let dim = domain.grid.dim;
    let mut acc: std::collections::BTreeMap<[i64; 3], f64> = Default::default();
    for (i, s) in domain.sites.iter().enumerate() {
        let p = domain.grid.position(s);
        let mut key = [0i64; 3];
        let mut tie = false;
        for a in 0..dim {
            let r = p[a].round();
            if ((p[a] - r).abs() - 0.5).abs() < 1e-9 * domain.grid.h {
                tie = true;
            }
            key[a] = r as i64;
        }
        if !tie {
            *acc.entry(key).or_insert(0.0) += psi[i] * psi[i];
        }
    }
    acc.into_iter()
        .map(|(k, v)| ([k[0] as f64, k[1] as f64, k[2] as f64], v.sqrt()))
        .collect()
}

/// Decay of `r ↦ sup_{|x-c| >= r} ‖χₓψ‖` around the cube of largest mass,
/// fitted on `r <= 0.75 r_max` above a `1e-14` floor.
pub fn vector_decay(domain: &Domain, psi: &[f64]) -> Result<(Vec<f64>, DecayModel)> {
    let dim = domain.grid.dim;
    let cubes = cube_norms(domain, psi);
    let (center, _) = cubes
        .iter()
        .cloned()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::DegenerateFit("empty vector".into()))?;
    let mut by_r: Vec<(i64, f64)> = cubes
        .iter()
        .map(|(x, v)| (lattice::max_dist(dim, x, &center).round() as i64, *v))
        .collect();
    by_r.sort_by_key(|p| p.0);
    let r_max = by_r.last().map(|p| p.0).unwrap_or(0);
    let mut env = vec![0.0f64; r_max as usize + 1];
    for &(r, v) in &by_r {
        env[r as usize] = env[r as usize].max(v);
    }
    for r in (0..r_max as usize).rev() {
        env[r] = env[r].max(env[r + 1]);
    }
    let cut = 0.75 * r_max as f64;
    let (rs, ys): (Vec<f64>, Vec<f64>) = env
        .iter()
        .enumerate()
        .filter(|(r, v)| (*r as f64) <= cut && **v > 1e-14)
        .map(|(r, v)| (r as f64, *v))
        .unzip();
    Ok((center[..dim].to_vec(), fit_decay(&rs, &ys)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenDecay {
    pub energy: f64,
    pub center: Vec<f64>,
    pub model: DecayModel,
}

pub fn eigenfunction_decay(h: &SparseOperator, domain: &Domain, window: (f64, f64)) -> Result<Vec<EigenDecay>> {
    let (values, vectors) = full_spectrum(h);
    let mut out = Vec::new();
    for (k, &e) in values.iter().enumerate() {
        if e < window.0 || e > window.1 {
            continue;
        }
        let psi: Vec<f64> = vectors.column(k).iter().cloned().collect();
        let (center, model) = vector_decay(domain, &psi)?;
        out.push(EigenDecay { energy: e, center, model });
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no eigenvalue in [{}, {}]",
            window.0, window.1
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorPoint {
    pub target: Vec<f64>,
    pub separation: f64,
    /// Mean over realizations of `sup_t ‖χₓ e^{-itH} P_I χ_y‖`.
    pub mean_sup: f64,
    pub stderr: f64,
    /// Mean of the eigenfunction-sum majorant.
    pub mean_majorant: f64,
    /// Mean over realizations of the block norm at each grid time.
    pub profile: Vec<f64>,
    /// Largest `sup_t - majorant` over realizations (should be `<= 0`).
    pub worst_excess: f64,
}

/// `sup` over the time grid of the projected propagator block, averaged
/// over `samples` realizations, for each target in `ys`.
#[allow(clippy::too_many_arguments)]
pub fn dynamical_correlator(
    ensemble: &Ensemble,
    window: (f64, f64),
    x: &[f64],
    ys: &[Vec<f64>],
    times: &[f64],
    samples: usize,
    seed: u64,
    min_spacing_periods: f64,
) -> Result<Vec<CorrelatorPoint>> {
    let domain = &ensemble.domain;
    let dim = domain.grid.dim;
    if times.is_empty() || samples == 0 {
        return Err(Error::InvalidArgument("need times and samples".into()));
    }
    let cx = lattice::indicator(domain, x);
    let cys: Vec<_> = ys.iter().map(|y| lattice::indicator(domain, y)).collect();
    let t_max = times.iter().cloned().fold(0.0f64, |a, t| a.max(t.abs()));
    let per = par::try_map_indexed(samples, |k| -> Result<Vec<(f64, f64, Vec<f64>)>> {
        let run = || -> Result<Vec<(f64, f64, Vec<f64>)>> {
            let h = ensemble.hamiltonian(seed, k as u64)?;
            let (values, vectors) = full_spectrum(&h);
            let sel: Vec<usize> = (0..values.len())
                .filter(|&n| values[n] >= window.0 && values[n] <= window.1)
                .collect();
            if k == 0 && sel.len() >= 2 && min_spacing_periods > 0.0 {
                let spacing = (values[*sel.last().unwrap()] - values[sel[0]]) / (sel.len() - 1) as f64;
                if t_max * spacing < min_spacing_periods {
                    return Err(Error::Precondition(format!(
                        "time grid up to {t_max} is shorter than {min_spacing_periods}/spacing = {}",
                        min_spacing_periods / spacing
                    )));
                }
            }
            let mut out = Vec::with_capacity(cys.len());
            for cy in &cys {
                if sel.is_empty() || cx.is_empty() || cy.is_empty() {
                    out.push((0.0, 0.0, vec![0.0; times.len()]));
                    continue;
                }
                let px: Vec<Vec<f64>> = sel
                    .iter()
                    .map(|&n| cx.indices.iter().map(|&i| vectors[(i, n)]).collect())
                    .collect();
                let py: Vec<Vec<f64>> = sel
                    .iter()
                    .map(|&n| cy.indices.iter().map(|&i| vectors[(i, n)]).collect())
                    .collect();
                let norm = |v: &Vec<f64>| v.iter().map(|a| a * a).sum::<f64>().sqrt();
                let majorant: f64 = px.iter().zip(&py).map(|(a, b)| norm(a) * norm(b)).sum();
                let mut profile = Vec::with_capacity(times.len());
                let mut sup = 0.0f64;
                for &t in times {
                    let mut block = DMatrix::<Complex64>::zeros(cx.len(), cy.len());
                    for (s, &n) in sel.iter().enumerate() {
                        let phase = Complex64::from_polar(1.0, -t * values[n]);
                        for r in 0..cx.len() {
                            let pr = phase * px[s][r];
                            for c in 0..cy.len() {
                                block[(r, c)] += pr * py[s][c];
                            }
                        }
                    }
                    let v = operator_norm(&block);
                    sup = sup.max(v);
                    profile.push(v);
                }
                if sup > majorant + 1e-9 {
                    return Err(Error::Invariant(format!(
                        "propagator block {sup} exceeds eigenfunction-sum majorant {majorant}"
                    )));
                }
                out.push((sup, majorant, profile));
            }
            Ok(out)
        };
        run().map_err(|e| e.in_realization(k as u64))
    })?;
    let mut points = Vec::with_capacity(ys.len());
    for (j, y) in ys.iter().enumerate() {
        let sups: Vec<f64> = per.iter().map(|r| r[j].0).collect();
        let majs: Vec<f64> = per.iter().map(|r| r[j].1).collect();
        let (mean_sup, stderr) = par::mean_and_stderr(&sups);
        let profile = (0..times.len())
            .map(|t| par::tree_sum(&per.iter().map(|r| r[j].2[t]).collect::<Vec<_>>()) / samples as f64)
            .collect();
        points.push(CorrelatorPoint {
            target: y.clone(),
            separation: lattice::max_dist(dim, x, y),
            mean_sup,
            stderr,
            mean_majorant: par::tree_sum(&majs) / samples as f64,
            profile,
            worst_excess: sups.iter().zip(&majs).map(|(s, m)| s - m).fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_domain, GridSpec};

    fn line(n: usize, bc: Boundary) -> Domain {
        build_domain(GridSpec::new(1, 1.0).unwrap(), Region::cube(&[0.0], n as f64 + 1.0), bc).unwrap()
    }

    #[test]
    fn three_site_spectrum() {
        let d = line(3, Boundary::Dirichlet);
        let h = assemble_hamiltonian(&d, &[0.0; 3]).unwrap();
        let e = lowest_eigenpairs(&h, 3).unwrap();
        let s = 2f64.sqrt();
        for (a, b) in e.values.iter().zip([2.0 - s, 2.0, 2.0 + s]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_perturbation_has_unit_derivative() {
        let d = line(21, Boundary::Robin { sigma: 0.0 });
        let bg = vec![0.0; d.len()];
        let v = vec![0.7; d.len()];
        let r = perturbation_derivative_check(&d, &bg, &v, &[1e-3, 5e-4]).unwrap();
        assert!((r.inner_product - 0.7).abs() < 1e-12);
        assert!(r.relative_discrepancy < 1e-8);
    }

    #[test]
    fn neumann_halves_of_free_interval() {
        let d = line(21, Boundary::Robin { sigma: 0.0 });
        let pieces = [Region::cube(&[-5.0], 11.0), Region::cube(&[5.5], 10.0)];
        let r = bracketing_check(&d, &pieces, &[0.0; 21]).unwrap();
        assert!(r.neumann_whole.abs() < 1e-12);
        assert!(r.neumann_pieces.iter().all(|e| e.abs() < 1e-12));
        assert!(r.holds);
    }

    #[test]
    fn overlapping_pieces_rejected() {
        let d = line(10, Boundary::Dirichlet);
        let pieces = [Region::cube(&[0.0], 6.0), Region::cube(&[1.0], 6.0)];
        assert!(bracketing_check(&d, &pieces, &[0.0; 10]).is_err());
    }

    #[test]
    fn planted_exponential_vector() {
        let d = line(81, Boundary::Dirichlet);
        let psi: Vec<f64> = d.sites.iter().map(|s| (-(s[0] as f64).abs()).exp()).collect();
        let (_, m) = vector_decay(&d, &psi).unwrap();
        assert!((m.rate - 1.0).abs() < 1e-3, "{m:?}");
    }

    #[test]
    fn threshold_at_mean_is_rejected() {
        let law = CouplingLaw::Uniform { eta_max: 1.0 };
        assert!(matches!(
            large_deviation_probe(&law, &[10], 1.0, 10, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn tilted_mean_limits() {
        assert!((tilted_mean(0.0, 2.0) - 1.0).abs() < 1e-12);
        assert!((tilted_mean(-100.0, 1.0) - 0.01).abs() < 1e-6);
        let th = solve_tilt(0.25, 1.0);
        assert!((tilted_mean(th, 1.0) - 0.25).abs() < 1e-10);
    }
}
