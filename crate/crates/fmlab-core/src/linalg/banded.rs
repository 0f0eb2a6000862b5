use num_complex::ComplexFloat;

use crate::error::{Error, Result};

/// LU factorization with partial pivoting of a matrix with `kl` sub- and `ku`
/// super-diagonals. Row interchanges widen the upper band to `kl + ku`.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row `i` stores columns `i - kl ..= i + kl + ku` (offset `j + kl - i`).
    rows: Vec<T>,
    /// Multipliers of step `k` for rows `k+1 ..= k+kl`.
    lower: Vec<T>,
    piv: Vec<usize>,
}

impl<T> BandedLu<T>
where
    T: ComplexFloat<Real = f64>,
{
    fn width(kl: usize, ku: usize) -> usize {
        2 * kl + ku + 1
    }

    /// Factor the matrix given by `(row, col, value)` triplets. Entries outside
    /// the declared band are rejected.
    pub fn factor<I>(n: usize, kl: usize, ku: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let w = Self::width(kl, ku);
        let mut rows = vec![T::zero(); n * w];
        for (i, j, v) in entries {
            if i >= n || j >= n || j + kl < i || j > i + ku {
                return Err(Error::InvalidArgument(format!(
                    "entry ({i},{j}) outside band kl={kl} ku={ku}"
                )));
            }
            rows[i * w + (j + kl - i)] = rows[i * w + (j + kl - i)] + v;
        }
        let mut lu = BandedLu {
            n,
            kl,
            ku,
            rows,
            lower: vec![T::zero(); n * kl.max(1)],
            piv: vec![0; n],
        };
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.rows[i * Self::width(self.kl, self.ku) + (j + self.kl - i)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut T {
        let w = Self::width(self.kl, self.ku);
        &mut self.rows[i * w + (j + self.kl - i)]
    }

    fn eliminate(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.at(k, k).abs();
            for i in k + 1..=last_row {
                let a = self.at(i, k).abs();
                if a > best {
                    best = a;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular { pivot: k });
            }
            self.piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    let a = self.at(k, j);
                    let b = self.at(p, j);
                    *self.at_mut(k, j) = b;
                    *self.at_mut(p, j) = a;
                }
            }
            let pivot = self.at(k, k);
            for i in k + 1..=last_row {
                let m = self.at(i, k) / pivot;
                self.lower[k * kl + (i - k - 1)] = m;
                *self.at_mut(i, k) = T::zero();
                if m != T::zero() {
                    for j in k + 1..=last_col {
                        let v = self.at(i, j) - m * self.at(k, j);
                        *self.at_mut(i, j) = v;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != T::zero() {
                let end = (k + kl).min(n - 1);
                for (off, bi) in b[k + 1..=end].iter_mut().enumerate() {
                    *bi = *bi - self.lower[k * kl + off] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for (j, bj) in b.iter().enumerate().take((k + kl + ku).min(n - 1) + 1).skip(k + 1) {
                s = s - self.at(k, j) * *bj;
            }
            b[k] = s / self.at(k, k);
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
