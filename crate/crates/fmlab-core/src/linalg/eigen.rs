use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use super::{BandedLu, Csr};
use crate::error::{Error, Result};

/// Lowest eigenpairs in ascending order with their residuals `‖Hv - λv‖`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Fix the sign so that the entry of largest modulus (first on ties) is positive.
fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() * (1.0 + 1e-12) {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn residual(h: &Csr, lambda: f64, v: &[f64]) -> f64 {
    let mut hv = vec![0.0; h.n];
    h.matvec(v, &mut hv);
    hv.iter()
        .zip(v)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Full symmetric eigendecomposition, ascending, `k` lowest pairs kept.
pub fn dense_eigen(h: &Csr, k: usize) -> EigenPairs {
    let eig = SymmetricEigen::new(h.to_dense());
    let mut order: Vec<usize> = (0..h.n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut out = EigenPairs {
        values: Vec::with_capacity(k),
        vectors: Vec::with_capacity(k),
        residuals: Vec::with_capacity(k),
    };
    for &c in order.iter().take(k) {
        let lambda = eig.eigenvalues[c];
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().cloned().collect();
        normalize_sign(&mut v);
        out.residuals.push(residual(h, lambda, &v));
        out.values.push(lambda);
        out.vectors.push(v);
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(w, q);
            w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
}

struct ShiftInvert<'a> {
    h: &'a Csr,
    shift: f64,
    lu: BandedLu<f64>,
}

impl<'a> ShiftInvert<'a> {
    fn new(h: &'a Csr, shift: f64) -> Result<Self> {
        let (kl, ku) = h.bandwidth();
        let lu = BandedLu::factor(
            h.n,
            kl,
            ku,
            h.triplets()
                .map(|(i, j, v)| (i, j, if i == j { v - shift } else { v }))
                .chain((0..h.n).map(|i| (i, i, 0.0))),
        )?;
        Ok(ShiftInvert { h, shift, lu })
    }

    /// Lowest `want` eigenpairs of `h` on the orthogonal complement of `locked`.
    fn run(&self, want: usize, locked: &[Vec<f64>], tol: f64, seed: u64) -> Result<Vec<(f64, Vec<f64>)>> {
        let n = self.h.n;
        let room = n - locked.len();
        let want = want.min(room);
        if want == 0 {
            return Ok(Vec::new());
        }
        let mut rng = crate::rng::stream(seed, &[locked.len() as u64]);
        let mut fresh = |basis: &[Vec<f64>]| -> Vec<f64> {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            orthogonalize(&mut v, locked);
            orthogonalize(&mut v, basis);
            let nv = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= nv);
            v
        };
        let mut m = room.min((2 * want + 20).max(40));
        loop {
            let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
            let mut alpha = Vec::with_capacity(m);
            let mut beta: Vec<f64> = Vec::with_capacity(m);
            basis.push(fresh(&[]));
            for j in 0..m {
                let mut w = self.lu.solve(&basis[j]);
                let a = dot(&w, &basis[j]);
                alpha.push(a);
                orthogonalize(&mut w, locked);
                orthogonalize(&mut w, &basis);
                if j + 1 == m {
                    break;
                }
                let b = dot(&w, &w).sqrt();
                if b <= 1e-12 * a.abs().max(1e-300) {
                    // Invariant subspace: continue from a new direction.
                    beta.push(0.0);
                    basis.push(fresh(&basis));
                } else {
                    beta.push(b);
                    w.iter_mut().for_each(|x| *x /= b);
                    basis.push(w);
                }
            }
            let t = DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    alpha[i]
                } else if i + 1 == j {
                    beta[i]
                } else if j + 1 == i {
                    beta[j]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..m).collect();
            // Largest eigenvalues of the inverse are the lowest of `h`.
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let mut pairs = Vec::with_capacity(want);
            let mut worst = 0.0f64;
            for &c in order.iter().take(want) {
                let theta = eig.eigenvalues[c];
                let s = eig.eigenvectors.column(c);
                let mut y = vec![0.0; n];
                for (q, &sj) in basis.iter().zip(s.iter()) {
                    y.iter_mut().zip(q).for_each(|(a, b)| *a += sj * b);
                }
                let ny = dot(&y, &y).sqrt();
                y.iter_mut().for_each(|x| *x /= ny);
                // Rayleigh quotient is more accurate than shift + 1/theta.
                let mut hy = vec![0.0; n];
                self.h.matvec(&y, &mut hy);
                let lambda = if theta > 0.0 { dot(&y, &hy) } else { self.shift };
                let r = residual(self.h, lambda, &y);
                worst = worst.max(r);
                pairs.push((lambda, y));
            }
            if worst <= tol {
                return Ok(pairs);
            }
            if m == room {
                return Err(Error::NoConvergence {
                    iterations: m,
                    residual: worst,
                });
            }
            m = room.min(2 * m);
        }
    }
}

/// Lowest `k` eigenpairs by shift-invert Lanczos with full reorthogonalization.
///
/// The shift sits just below the Gershgorin interval. After convergence the
/// search is repeated on the orthogonal complement of the accepted vectors,
/// which recovers copies of degenerate eigenvalues a single Krylov space
/// cannot see.
pub fn lanczos_lowest(h: &Csr, k: usize, seed: u64) -> Result<EigenPairs> {
    let (lo, hi) = h.gershgorin();
    let scale = lo.abs().max(hi.abs()).max(1.0);
    let tol = 1e-10 * scale;
    let op = ShiftInvert::new(h, lo - 1e-2 * scale.max(1.0))?;
    let k = k.min(h.n);
    let mut pairs = op.run(k, &[], tol, seed)?;
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rounds = 0;
    while pairs.len() < h.n && rounds < h.n {
        rounds += 1;
        let locked: Vec<Vec<f64>> = pairs.iter().map(|p| p.1.clone()).collect();
        let extra = op.run(1, &locked, tol, seed.wrapping_add(rounds as u64))?;
        let Some(e) = extra.into_iter().next() else { break };
        let kth = pairs.last().map(|p| p.0).unwrap_or(f64::INFINITY);
        if e.0 < kth - 1e-9 * scale {
            pairs.push(e);
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            pairs.truncate(k);
        } else {
            break;
        }
    }
    let mut out = EigenPairs {
        values: Vec::with_capacity(k),
        vectors: Vec::with_capacity(k),
        residuals: Vec::with_capacity(k),
    };
    for (lambda, mut v) in pairs {
        normalize_sign(&mut v);
        out.residuals.push(residual(h, lambda, &v));
        out.values.push(lambda);
        out.vectors.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_2d(m: usize) -> Csr {
        let idx = |i: usize, j: usize| i * m + j;
        let mut t = Vec::new();
        for i in 0..m {
            for j in 0..m {
                t.push((idx(i, j), idx(i, j), 4.0));
                if i + 1 < m {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                    t.push((idx(i + 1, j), idx(i, j), -1.0));
                }
                if j + 1 < m {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                    t.push((idx(i, j + 1), idx(i, j), -1.0));
                }
            }
        }
        Csr::from_triplets(m * m, t)
    }

    #[test]
    fn lanczos_finds_degenerate_pair() {
        let h = laplacian_2d(12);
        let dense = dense_eigen(&h, 4);
        let lz = lanczos_lowest(&h, 4, 1).unwrap();
        for (a, b) in dense.values.iter().zip(&lz.values) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // Second and third eigenvalues coincide by symmetry.
        assert!((lz.values[1] - lz.values[2]).abs() < 1e-9);
        assert!(lz.residuals.iter().all(|&r| r < 1e-8 * 8.0));
    }

    #[test]
    fn diagonal_matrix() {
        let h = Csr::from_triplets(5, (0..5).map(|i| (i, i, [3.0, -1.0, 2.0, 0.5, 7.0][i])).collect());
        let e = dense_eigen(&h, 5);
        assert_eq!(e.values, vec![-1.0, 0.5, 2.0, 3.0, 7.0]);
        let l = lanczos_lowest(&h, 3, 0).unwrap();
        for (a, b) in l.values.iter().zip([-1.0, 0.5, 2.0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
