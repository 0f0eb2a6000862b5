//! Log-linear decay fits and binomial confidence intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `y ≈ C e^{-μ r}` fitted by least squares on `ln y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayModel {
    pub prefactor: f64,
    pub rate: f64,
    /// Standard error of the fitted rate from the regression residuals.
    pub rate_stderr: f64,
    pub r_squared: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
}

impl DecayModel {
    pub fn eval(&self, r: f64) -> f64 {
        self.prefactor * (-self.rate * r).exp()
    }

    /// Whether `rate = 0` lies inside the `z`-sigma interval of the fit.
    pub fn consistent_with_zero(&self, z: f64) -> bool {
        self.rate.abs() <= z * self.rate_stderr
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::DegenerateFit(format!("{n} points")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - (intercept + slope * a);
            e * e
        })
        .sum();
    let r_squared = if syy <= f64::EPSILON * f64::EPSILON * nf || ss_res <= 1e-28 * syy.max(1e-300) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    let slope_stderr = if n > 2 {
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        intercept,
        slope,
        slope_stderr,
        r_squared,
    })
}

/// Fit `ln y` against `r`. Needs at least four strictly positive values.
pub fn fit_decay(r: &[f64], y: &[f64]) -> Result<DecayModel> {
    if r.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: r.len(),
            got: y.len(),
        });
    }
    let (rs, ls): (Vec<f64>, Vec<f64>) = r
        .iter()
        .zip(y)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(a, v)| (*a, v.ln()))
        .unzip();
    if rs.len() < 4 {
        return Err(Error::DegenerateFit(format!(
            "{} positive points, need at least 4",
            rs.len()
        )));
    }
    let line = linear_fit(&rs, &ls)?;
    Ok(DecayModel {
        prefactor: line.intercept.exp(),
        rate: -line.slope,
        rate_stderr: line.slope_stderr,
        r_squared: line.r_squared,
        r_min: rs.iter().cloned().fold(f64::INFINITY, f64::min),
        r_max: rs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        points: rs.len(),
    })
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential_recovers_rate() {
        let r: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let y: Vec<f64> = r.iter().map(|x| 3.0 * (-0.3 * x).exp()).collect();
        let m = fit_decay(&r, &y).unwrap();
        assert!((m.rate - 0.3).abs() < 1e-12);
        assert!((m.prefactor - 3.0).abs() < 1e-10);
        assert_eq!(m.r_squared, 1.0);
    }

    #[test]
    fn constant_profile_has_zero_rate() {
        let r: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let m = fit_decay(&r, &[0.7; 10]).unwrap();
        assert!(m.rate.abs() < 1e-12);
    }

    #[test]
    fn too_few_points_is_an_error() {
        assert!(fit_decay(&[0.0, 1.0, 2.0], &[1.0, 0.5, 0.25]).is_err());
        assert!(fit_decay(&[0.0, 1.0, 2.0, 3.0], &[1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        for (k, n) in [(0, 10), (5, 10), (10, 10), (37, 500)] {
            let (lo, hi) = wilson_interval(k, n, 1.96);
            let p = k as f64 / n as f64;
            assert!(lo <= p && p <= hi);
        }
    }
}
