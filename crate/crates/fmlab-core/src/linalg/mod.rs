//! Dense and banded linear algebra used by the resolvent and spectral modules.

mod banded;
mod csr;
mod eigen;

pub use banded::BandedLu;
pub use csr::Csr;
pub use eigen::{dense_eigen, lanczos_lowest, EigenPairs};

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Largest singular value. Full SVD up to 64 in the smaller dimension, power
/// iteration on `B^* B` beyond.
pub fn operator_norm(block: &DMatrix<Complex64>) -> f64 {
    let (r, c) = block.shape();
    if r == 0 || c == 0 {
        return 0.0;
    }
    if r.min(c) <= 64 {
        return block
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .cloned()
            .fold(0.0, f64::max);
    }
    power_norm(block, 1e-8, 10_000)
}

fn power_norm(block: &DMatrix<Complex64>, rel_tol: f64, max_iter: usize) -> f64 {
    let adj = block.adjoint();
    let mut v = nalgebra::DVector::from_fn(block.ncols(), |i, _| {
        Complex64::new(1.0 + 0.01 * (i as f64).sin(), 0.0)
    });
    let nv = v.norm();
    v /= Complex64::new(nv, 0.0);
    let mut last = 0.0;
    for _ in 0..max_iter {
        let w = &adj * (block * &v);
        let lambda = w.norm();
        if lambda == 0.0 {
            return 0.0;
        }
        v = w / Complex64::new(lambda, 0.0);
        if (lambda - last).abs() <= rel_tol * lambda {
            return lambda.sqrt();
        }
        last = lambda;
    }
    last.sqrt()
}

/// Frobenius (Hilbert–Schmidt) norm.
pub fn hs_norm(block: &DMatrix<Complex64>) -> f64 {
    block.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_agrees_with_svd() {
        let m = DMatrix::from_fn(70, 80, |i, j| {
            Complex64::new(((i * 7 + j * 3) % 11) as f64 - 5.0, ((i + 2 * j) % 5) as f64)
        });
        let svd = m.clone().svd(false, false).singular_values.max();
        let pw = power_norm(&m, 1e-12, 100_000);
        assert!((svd - pw).abs() < 1e-6 * svd);
        assert!((operator_norm(&m) - svd).abs() < 1e-5 * svd);
    }

    #[test]
    fn hs_dominates_operator_norm() {
        let m = DMatrix::from_fn(3, 4, |i, j| Complex64::new((i + j) as f64, i as f64 - j as f64));
        assert!(hs_norm(&m) >= operator_norm(&m));
    }
}
