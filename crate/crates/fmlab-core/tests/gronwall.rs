use fmlab_core::gronwall::{
    apply, envelope_extract, kernel_norm, solve_recursion, x_norm_by_application, DecaySequence, WeightedKernel,
};
use fmlab_core::fit::linear_fit;
use fmlab_core::Error;

fn linf(x: &[i64], y: &[i64]) -> i64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).max().unwrap_or(0)
}

#[test]
fn unweighted_row_sum_is_coth_squared() {
    let k = WeightedKernel::plain(1, 1.0, 60).unwrap();
    let n = kernel_norm(&k, 1.0, 60).unwrap();
    // (Σ_k e^{-|k|})² = coth(1/2)².
    let s: f64 = 1.0 + 2.0 * (1..200).map(|j| (-(j as f64)).exp()).sum::<f64>();
    assert!((s - 1.0 / 0.5f64.tanh()).abs() < 1e-14);
    assert!((n.linf_norm - s * s).abs() < 1e-6, "{}", n.linf_norm);
    assert!((n.linf_norm - 4.682_694_376_831).abs() < 1e-6);
}

#[test]
fn faster_kernel_has_smaller_norm() {
    let a = kernel_norm(&WeightedKernel::plain(1, 0.5, 120).unwrap(), 0.5, 120).unwrap();
    let b = kernel_norm(&WeightedKernel::plain(1, 1.0, 120).unwrap(), 1.0, 120).unwrap();
    assert!(b.linf_norm < a.linf_norm);
}

#[test]
fn norm_scales_like_mu_to_minus_two_d() {
    let mus = [0.5, 0.25, 0.125];
    let norms: Vec<f64> = mus
        .iter()
        .map(|&mu| kernel_norm(&WeightedKernel::plain(1, mu, 420).unwrap(), mu, 420).unwrap().x_norm)
        .collect();
    let x: Vec<f64> = mus.iter().map(|m| m.ln()).collect();
    let y: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
    let slope = linear_fit(&x, &y).unwrap().slope;
    assert!((slope + 2.0).abs() < 0.2, "{slope}");
    // C(d) fitted at the largest μ bounds the whole sweep.
    let c = norms[0] * mus[0].powi(2);
    for (mu, n) in mus.iter().zip(&norms) {
        assert!(*n <= c * mu.powi(-2) * (1.0 + 1e-9), "mu={mu}");
    }
}

#[test]
fn x_norm_equals_conjugated_application() {
    for (mu, t) in [(1.0, 60usize), (0.5, 120)] {
        let k = WeightedKernel::plain(1, mu, t).unwrap();
        let n = kernel_norm(&k, mu, t).unwrap();
        let applied = x_norm_by_application(&k, mu, t);
        assert!(applied <= n.x_norm);
        assert!((n.x_norm - applied) <= 1e-9 * n.x_norm, "{} vs {applied}", n.x_norm);
    }
}

#[test]
fn weak_kernel_offset_is_not_a_contraction() {
    let k = WeightedKernel::new(1, 4.0, 1.0, 0.5, 200).unwrap();
    let b = DecaySequence::from_fn(1, 200, k.mu(), |x, y| (-(linf(x, y) as f64) / 4.0).exp());
    match solve_recursion(&k, &b, 1000) {
        Err(Error::NotContraction { norm }) => assert!(norm > 1.0),
        other => panic!("expected contraction failure, got {other:?}"),
    }
}

#[test]
fn solved_recursion_decays_exponentially() {
    let (l, c) = (4.0, 1.0);
    let k = WeightedKernel::new(1, l, c, 2.0, 200).unwrap();
    let b = DecaySequence::from_fn(1, 200, k.mu(), |x, y| (-(linf(x, y) as f64) / l).exp());
    let sol = solve_recursion(&k, &b, 1000).unwrap();
    assert!(sol.kernel.x_norm < 1.0);
    assert!(sol.residual <= 1e-10);
    assert!(sol.tau.x_norm() <= sol.neumann_bound * (1.0 + 1e-12));
    let fit = envelope_extract(&sol.tau).unwrap();
    assert!(fit.rate >= c / (2.0 * l) * 0.9, "{fit:?}");
    assert!(fit.r_squared >= 0.95, "{fit:?}");
}

#[test]
fn point_source_respects_neumann_bound() {
    let k = WeightedKernel::new(1, 4.0, 1.0, 2.0, 200).unwrap();
    let b = DecaySequence::from_fn(1, 200, k.mu(), |x, y| if x[0] == 0 && y[0] == 0 { 1.0 } else { 0.0 });
    let sol = solve_recursion(&k, &b, 1000).unwrap();
    let q = sol.kernel.x_norm;
    assert!(sol.tau.x_norm() <= b.x_norm() / (1.0 - q) * (1.0 + 1e-12));
}

#[test]
fn neumann_partial_sums_increase() {
    let k = WeightedKernel::new(1, 4.0, 1.0, 2.0, 30).unwrap();
    let b = DecaySequence::from_fn(1, 30, k.mu(), |x, y| (-(linf(x, y) as f64)).exp());
    let mut sum = b.clone();
    let mut term = b;
    for _ in 0..20 {
        term = apply(&k, &term);
        let next: Vec<f64> = sum.values.iter().zip(&term.values).map(|(s, t)| s + t).collect();
        assert!(next.iter().zip(&sum.values).all(|(n, s)| n >= s));
        sum.values = next;
    }
}

#[test]
fn constant_sequence_has_no_decay() {
    let t = DecaySequence::from_fn(1, 10, 0.1, |_, _| 2.0);
    assert!(envelope_extract(&t).unwrap().rate.abs() < 1e-12);
    assert!(matches!(envelope_extract(&DecaySequence::zeros(1, 10, 0.1)), Err(Error::DegenerateFit(_))));
}
