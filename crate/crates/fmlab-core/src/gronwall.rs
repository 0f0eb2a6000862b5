//! Weighted kernel `A` on `ℤ^d × ℤ^d`, its norms on `ℓ∞` and on the weighted
//! space `X` (weight `e^{μ|x-y|/2}`), and the recursion `τ = Aτ + b`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_decay, DecayModel};
use crate::par;

/// Kernel `p·e^{-(c/L)(|x-x'| + |y-y'|)}` with `p = L^{-2d-κ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedKernel {
    pub dim: usize,
    pub scale: f64,
    pub rate: f64,
    pub kappa: f64,
    pub prefactor: f64,
    /// Window `Λ_T = {|x|∞ <= T}` on each factor.
    pub radius: usize,
}

impl WeightedKernel {
    pub fn new(dim: usize, scale: f64, rate: f64, kappa: f64, radius: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) || !(scale > 0.0) || !(rate > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "kernel needs d in 1..=3, L > 0, c > 0; got d={dim} L={scale} c={rate}"
            )));
        }
        Ok(WeightedKernel {
            dim,
            scale,
            rate,
            kappa,
            prefactor: scale.powf(-(2.0 * dim as f64) - kappa),
            radius,
        })
    }

    /// Unit-prefactor kernel `e^{-μ(|x-x'| + |y-y'|)}`.
    pub fn plain(dim: usize, mu: f64, radius: usize) -> Result<Self> {
        let mut k = WeightedKernel::new(dim, 1.0, mu, 0.0, radius)?;
        k.prefactor = 1.0;
        Ok(k)
    }

    /// Decay rate `μ = c/L` per unit distance.
    pub fn mu(&self) -> f64 {
        self.rate / self.scale
    }

    pub fn entry(&self, x: &[i64], y: &[i64], xp: &[i64], yp: &[i64]) -> f64 {
        self.prefactor * (-self.mu() * (linf(x, xp) + linf(y, yp)) as f64).exp()
    }
}

fn linf(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).max().unwrap_or(0)
}

fn norm_inf(a: &[i64]) -> i64 {
    a.iter().map(|v| v.abs()).max().unwrap_or(0)
}

/// Points of `{|x|∞ <= r}` in lexicographic order.
pub fn window_points(dim: usize, r: usize) -> Vec<Vec<i64>> {
    let r = r as i64;
    let mut out = vec![vec![]];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(out.len() * (2 * r as usize + 1));
        for p in &out {
            for k in -r..=r {
                let mut q = p.clone();
                q.push(k);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Number of points with `|k|∞ = j` in `ℤ^d`.
fn shell(dim: usize, j: usize) -> f64 {
    if j == 0 {
        1.0
    } else {
        ((2 * j + 1) as f64).powi(dim as i32) - ((2 * j - 1) as f64).powi(dim as i32)
    }
}

/// `(Σ_{|k| <= T} e^{-ν|k|}, bound on Σ_{|k| > T} e^{-ν|k|})`.
fn lattice_sum(dim: usize, nu: f64, radius: usize) -> Result<(f64, f64)> {
    let head: f64 = (0..=radius).map(|j| shell(dim, j) * (-nu * j as f64).exp()).sum();
    // shell(j) <= 2d(2j+1)^{d-1}; consecutive terms shrink by at most q.
    let t = radius as f64;
    let q = ((2.0 * t + 5.0) / (2.0 * t + 3.0)).powi(dim as i32 - 1) * (-nu).exp();
    if q >= 1.0 {
        return Err(Error::TruncationTooSmall {
            radius,
            tail: f64::INFINITY,
            allowed: 0.0,
        });
    }
    let first = 2.0 * dim as f64 * (2.0 * t + 3.0).powi(dim as i32 - 1) * (-nu * (t + 1.0)).exp();
    Ok((head, first / (1.0 - q)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelNorms {
    /// Rigorous upper bound on `‖A‖_X` (window part plus tail bound).
    pub x_norm: f64,
    /// Rigorous upper bound on `‖A‖_{ℓ∞}`.
    pub linf_norm: f64,
    pub x_tail: f64,
    pub linf_tail: f64,
    /// Weight exponent `μ` of `X`; the weight is `e^{μ|x-y|/2}`.
    pub weight: f64,
    pub radius: usize,
}

/// Relative size of tail to window part accepted by [`kernel_norm`].
pub const TAIL_TOLERANCE: f64 = 1e-10;

/// Norms of `A` on `ℓ∞` and on `X` with weight `e^{weight·|x-y|/2}`.
///
/// `X` row sums depend only on `Δ = x - y`; with `c = a - b` they equal
/// `Σ_c g(c) e^{(weight/2)(|Δ| - |Δ - c|)}` where `g` is the window
/// autocorrelation of the kernel. The supremum is attained for
/// `|Δ| <= 6T + 1`, reduced further by the signed-permutation symmetry.
pub fn kernel_norm(kernel: &WeightedKernel, weight: f64, radius: usize) -> Result<KernelNorms> {
    let mu = kernel.mu();
    let half = weight / 2.0;
    if !(weight > 0.0) || half >= mu {
        return Err(Error::InvalidArgument(format!(
            "weight {weight} must satisfy 0 < weight/2 < kernel rate {mu}"
        )));
    }
    let d = kernel.dim;
    let p = kernel.prefactor;
    let (s, t) = lattice_sum(d, mu, radius)?;
    let linf_head = p * s * s;
    let linf_tail = p * ((s + t).powi(2) - s * s);
    let (sx, tx) = lattice_sum(d, mu - half, radius)?;
    let x_tail = p * ((sx + tx).powi(2) - sx * sx);
    if linf_tail > TAIL_TOLERANCE * linf_head {
        return Err(Error::TruncationTooSmall {
            radius,
            tail: linf_tail,
            allowed: TAIL_TOLERANCE * linf_head,
        });
    }

    // g(c) = Σ_{a - b = c, |a|,|b| <= T} e^{-μ(|a| + |b|)} on |c| <= 2T.
    let r = radius as i64;
    let span = (4 * r + 1) as usize;
    let cidx = |c: &[i64]| c.iter().fold(0usize, |acc, &v| acc * span + (v + 2 * r) as usize);
    let pts = window_points(d, radius);
    let decay: Vec<f64> = pts.iter().map(|a| (-mu * norm_inf(a) as f64).exp()).collect();
    let mut g = vec![0.0; span.pow(d as u32)];
    for (ia, a) in pts.iter().enumerate() {
        for (ib, b) in pts.iter().enumerate() {
            let c: Vec<i64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            g[cidx(&c)] += decay[ia] * decay[ib];
        }
    }
    let cs: Vec<(Vec<i64>, f64)> = window_points(d, 2 * radius)
        .into_iter()
        .map(|c| {
            let v = g[cidx(&c)];
            (c, v)
        })
        .filter(|(_, v)| *v > 0.0)
        .collect();
    // Δ with 0 <= Δ₁ <= … <= Δ_d <= 6T + 1.
    let top = 6 * r + 1;
    let mut deltas: Vec<Vec<i64>> = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::new();
        for p0 in &deltas {
            let start = p0.last().cloned().unwrap_or(0);
            for k in start..=top {
                let mut q = p0.clone();
                q.push(k);
                next.push(q);
            }
        }
        deltas = next;
    }
    let sums = par::map_indexed(deltas.len(), |i| {
        let delta = &deltas[i];
        let nd = norm_inf(delta);
        cs.iter()
            .map(|(c, gv)| gv * (half * (nd - linf(delta, c)) as f64).exp())
            .sum::<f64>()
    });
    let x_head = p * sums.iter().cloned().fold(0.0, f64::max);
    if x_tail > TAIL_TOLERANCE * x_head {
        return Err(Error::TruncationTooSmall {
            radius,
            tail: x_tail,
            allowed: TAIL_TOLERANCE * x_head,
        });
    }
    Ok(KernelNorms {
        x_norm: x_head + x_tail,
        linf_norm: linf_head + linf_tail,
        x_tail,
        linf_tail,
        weight,
        radius,
    })
}

/// Values `τ_{x,y}` on `Λ_T × Λ_T`, stored as `values[ix·N + iy]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySequence {
    pub dim: usize,
    pub radius: usize,
    /// Weight exponent `μ`; the `X` weight is `e^{μ|x-y|/2}`.
    pub weight: f64,
    pub values: Vec<f64>,
}

impl DecaySequence {
    pub fn from_fn(dim: usize, radius: usize, weight: f64, f: impl Fn(&[i64], &[i64]) -> f64) -> Self {
        let pts = window_points(dim, radius);
        let mut values = Vec::with_capacity(pts.len() * pts.len());
        for x in &pts {
            for y in &pts {
                values.push(f(x, y));
            }
        }
        DecaySequence {
            dim,
            radius,
            weight,
            values,
        }
    }

    pub fn zeros(dim: usize, radius: usize, weight: f64) -> Self {
        Self::from_fn(dim, radius, weight, |_, _| 0.0)
    }

    pub fn side(&self) -> usize {
        (2 * self.radius + 1).pow(self.dim as u32)
    }

    fn distances(&self) -> Vec<i64> {
        let pts = window_points(self.dim, self.radius);
        let mut out = Vec::with_capacity(self.values.len());
        for x in &pts {
            for y in &pts {
                out.push(linf(x, y));
            }
        }
        out
    }

    /// `sup e^{μ|x-y|/2}|τ_{x,y}|`.
    pub fn x_norm(&self) -> f64 {
        self.distances()
            .iter()
            .zip(&self.values)
            .map(|(&r, v)| (0.5 * self.weight * r as f64).exp() * v.abs())
            .fold(0.0, f64::max)
    }

    fn matrix(&self) -> DMatrix<f64> {
        let n = self.side();
        DMatrix::from_row_slice(n, n, &self.values)
    }
}

fn kernel_matrix(kernel: &WeightedKernel, radius: usize) -> DMatrix<f64> {
    let pts = window_points(kernel.dim, radius);
    let mu = kernel.mu();
    DMatrix::from_fn(pts.len(), pts.len(), |i, j| (-mu * linf(&pts[i], &pts[j]) as f64).exp())
}

/// `Aψ` restricted to the window of `ψ`, computed as `p·K Ψ K`.
pub fn apply(kernel: &WeightedKernel, psi: &DecaySequence) -> DecaySequence {
    let k = kernel_matrix(kernel, psi.radius);
    let out = &k * psi.matrix() * &k * kernel.prefactor;
    let n = psi.side();
    let mut values = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            values.push(out[(i, j)]);
        }
    }
    DecaySequence {
        values,
        ..psi.clone()
    }
}

/// `sup_{x,y} e^{μ|x-y|/2}(Aψ*)_{x,y}` with `ψ* = e^{-μ|x'-y'|/2}`, all on the
/// window: the `X` norm computed by applying the operator instead of summing
/// the conjugated kernel.
pub fn x_norm_by_application(kernel: &WeightedKernel, weight: f64, radius: usize) -> f64 {
    let psi = DecaySequence::from_fn(kernel.dim, radius, weight, |x, y| (-0.5 * weight * linf(x, y) as f64).exp());
    apply(kernel, &psi).x_norm()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionSolution {
    pub tau: DecaySequence,
    pub iterations: usize,
    /// `‖τ - Aτ - b‖_X`.
    pub residual: f64,
    pub kernel: KernelNorms,
    /// `‖b‖_X / (1 - ‖A‖_X)`.
    pub neumann_bound: f64,
}

pub const INCREMENT_TOL: f64 = 1e-12;
pub const RESIDUAL_TOL: f64 = 1e-10;

/// `τ = Σ Aⁿb` on the window of `b`, after checking `‖A‖_X < 1`.
pub fn solve_recursion(kernel: &WeightedKernel, b: &DecaySequence, max_iterations: usize) -> Result<RecursionSolution> {
    if b.dim != kernel.dim {
        return Err(Error::InvalidArgument("kernel and sequence dimensions differ".into()));
    }
    if b.values.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidArgument("b must be nonnegative".into()));
    }
    let norms = kernel_norm(kernel, b.weight, kernel.radius)?;
    if norms.x_norm >= 1.0 {
        return Err(Error::NotContraction { norm: norms.x_norm });
    }
    let mut tau = b.clone();
    let mut inc = b.clone();
    let mut iterations = 0;
    while inc.x_norm() >= INCREMENT_TOL {
        if iterations == max_iterations {
            return Err(Error::NoConvergence {
                iterations,
                residual: inc.x_norm(),
            });
        }
        inc = apply(kernel, &inc);
        tau.values.iter_mut().zip(&inc.values).for_each(|(t, i)| *t += i);
        iterations += 1;
    }
    let at = apply(kernel, &tau);
    let res = DecaySequence {
        values: tau
            .values
            .iter()
            .zip(&at.values)
            .zip(&b.values)
            .map(|((t, a), bb)| t - a - bb)
            .collect(),
        ..tau.clone()
    };
    let residual = res.x_norm();
    if residual > RESIDUAL_TOL {
        return Err(Error::SolveTolerance {
            residual,
            tol: RESIDUAL_TOL,
        });
    }
    Ok(RecursionSolution {
        neumann_bound: b.x_norm() / (1.0 - norms.x_norm),
        tau,
        iterations,
        residual,
        kernel: norms,
    })
}

/// Fit of `r ↦ sup_{|x-y| = r} τ_{x,y}` for `r <= T`.
pub fn envelope_extract(tau: &DecaySequence) -> Result<DecayModel> {
    if 2 * tau.radius < 8 {
        return Err(Error::DegenerateFit(format!("window diameter {} below 8", 2 * tau.radius)));
    }
    if tau.values.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidArgument("τ must be nonnegative".into()));
    }
    let mut env = vec![0.0f64; tau.radius + 1];
    for (&r, &v) in tau.distances().iter().zip(&tau.values) {
        if (r as usize) <= tau.radius {
            env[r as usize] = env[r as usize].max(v);
        }
    }
    if env.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateFit("τ vanishes".into()));
    }
    let r: Vec<f64> = (0..env.len()).map(|k| k as f64).collect();
    fit_decay(&r, &env)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_row_sum() {
        let k = WeightedKernel::plain(1, 1.0, 60).unwrap();
        let n = kernel_norm(&k, 1.0, 60).unwrap();
        let coth = 1.0 / (0.5f64).tanh();
        assert!((n.linf_norm - coth * coth).abs() < 1e-9, "{}", n.linf_norm);
    }

    #[test]
    fn small_truncation_is_rejected() {
        let k = WeightedKernel::plain(1, 0.1, 5).unwrap();
        assert!(matches!(kernel_norm(&k, 0.1, 5), Err(Error::TruncationTooSmall { .. })));
    }

    #[test]
    fn zero_source_gives_zero() {
        let k = WeightedKernel::new(1, 4.0, 1.0, 2.0, 200).unwrap();
        let b = DecaySequence::zeros(1, 200, 0.25);
        let s = solve_recursion(&k, &b, 100).unwrap();
        assert!(s.tau.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_exponential_envelope() {
        let t = DecaySequence::from_fn(1, 12, 0.3, |x, y| (-0.3 * linf(x, y) as f64).exp());
        let m = envelope_extract(&t).unwrap();
        assert!((m.rate - 0.3).abs() < 1e-6);
        assert!((m.r_squared - 1.0).abs() < 1e-12);
    }
}
