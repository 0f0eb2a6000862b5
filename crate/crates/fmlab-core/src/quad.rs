//! Gauss–Legendre rules and adaptive 1D integration.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (z * p - p0) / (z * z - 1.0);
    (p, d)
}

/// A rule mapped onto [a, b].
#[derive(Debug, Clone)]
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Rule { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Composite rule with `panels` equal panels; returns (abscissae, weights).
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
        let mut xs = Vec::with_capacity(panels * self.order());
        let mut ws = Vec::with_capacity(panels * self.order());
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                xs.push(lo + 0.5 * h * (x + 1.0));
                ws.push(0.5 * h * w);
            }
        }
        (xs, ws)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adaptive {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Panel splits allowed before [`adaptive`] gives up and reports its error.
pub const MAX_SPLITS: usize = 4000;

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error).is_eq()
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive bisection with a 10-point rule: the panel with the
/// largest error estimate (coarse rule against its two halves) is split until
/// the summed estimate meets the tolerance or [`MAX_SPLITS`] is reached.
/// Handles integrable point singularities by geometric refinement.
pub fn adaptive<F: FnMut(f64) -> f64>(a: f64, b: f64, abs_tol: f64, rel_tol: f64, f: F) -> Adaptive {
    let rule = Rule::new(10);
    let mut f = f;
    let mut evals = 0usize;
    let split = |lo: f64, hi: f64, coarse: f64, f: &mut F| {
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate(lo, mid, &mut *f);
        let right = rule.integrate(mid, hi, &mut *f);
        let err = 0.5 * (left + right - coarse).abs();
        [
            Panel { lo, hi: mid, value: left, error: err },
            Panel { lo: mid, hi, value: right, error: err },
        ]
    };
    let whole = rule.integrate(a, b, &mut f);
    let mut heap = std::collections::BinaryHeap::new();
    heap.extend(split(a, b, whole, &mut f));
    evals += 3 * rule.order();
    // Panels narrower than this are kept as they are.
    let min_width = 1e-12 * (b - a).abs();
    let mut frozen: Vec<Panel> = Vec::new();
    let mut splits = 0;
    loop {
        let all = || heap.iter().chain(&frozen);
        let value: f64 = all().map(|p| p.value).sum();
        let error: f64 = all().map(|p| p.error).sum();
        let done = error <= abs_tol.max(rel_tol * value.abs()) || !error.is_finite();
        if done || splits >= MAX_SPLITS || heap.is_empty() {
            return Adaptive {
                value,
                error,
                evaluations: evals,
            };
        }
        let p = heap.pop().expect("nonempty");
        if p.hi - p.lo < min_width {
            frozen.push(p);
            continue;
        }
        heap.extend(split(p.lo, p.hi, p.value, &mut f));
        evals += 2 * rule.order();
        splits += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = Rule::new(5);
        // Exact through degree 9.
        let v = rule.integrate(0.0, 2.0, |x| x.powi(9) - 3.0 * x.powi(4) + 1.0);
        let exact = 2f64.powi(10) / 10.0 - 3.0 * 2f64.powi(5) / 5.0 + 2.0;
        assert!((v - exact).abs() < 1e-11, "{v} vs {exact}");
    }

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 7, 20, 64] {
            let (_, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn adaptive_handles_inverse_sqrt_singularity() {
        let c = 1.0 / std::f64::consts::PI;
        let r = adaptive(0.0, 1.0, 1e-10, 1e-10, |x: f64| (x - c).abs().powf(-0.5));
        let exact = 2.0 * (c.sqrt() + (1.0 - c).sqrt());
        assert!((r.value - exact).abs() < 1e-6, "{} vs {}", r.value, exact);
    }
}
