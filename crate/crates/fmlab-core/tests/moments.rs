use fmlab_core::disorder::{CouplingLaw, Ensemble, ImpuritySet, Interval, SingleSiteProfile};
use fmlab_core::lattice::{build_domain, Boundary, Domain, GridSpec, Region};
use fmlab_core::moments::{
    fractional_moment, moment_decay_profile, moment_grid, subadditivity_gap, tail_report, weak_l1_tail,
    workhorse_average, CouplingPair,
};
use fmlab_core::quad;
use num_complex::Complex64;
use proptest::prelude::*;

fn single_site(law: CouplingLaw) -> Ensemble {
    // One Neumann site: H = [η].
    let d = build_domain(GridSpec::new(1, 1.0).unwrap(), Region::cube(&[0.0], 1.5), Boundary::Robin { sigma: 0.0 }).unwrap();
    assert_eq!(d.len(), 1);
    let set = ImpuritySet::new(1, vec![[0.0; 3]], 1.0, None, vec![Interval::ALL]).unwrap();
    Ensemble::new(d, set, SingleSiteProfile::Box { height: 1.0, side: 1.0 }, law, vec![0.0]).unwrap()
}

fn alloy_line(side: f64, law: CouplingLaw) -> Ensemble {
    let d: Domain = build_domain(GridSpec::new(1, 1.0).unwrap(), Region::cube(&[0.0], side), Boundary::Dirichlet).unwrap();
    let set = ImpuritySet::integer_lattice(1, &[Interval::new(-side, side)]).unwrap();
    let n = d.len();
    Ensemble::new(d, set, SingleSiteProfile::Box { height: 1.0, side: 1.0 }, law, vec![0.0; n]).unwrap()
}

fn scalar_pair(energy: f64, eps: f64, m: f64) -> CouplingPair {
    CouplingPair::scalar(energy, eps, m)
}

fn random_pair(n: usize, seed: u64, eps: f64) -> CouplingPair {
    CouplingPair::random(n, eps, seed)
}

#[test]
fn scalar_moment_matches_closed_form() {
    let ens = single_site(CouplingLaw::Uniform { eta_max: 1.0 });
    let est = fractional_moment(&ens, 0.5, 1e-8, 0.5, &[0.0], &[0.0], 20_000, 2024).unwrap();
    // ∫₀¹ |v - 1/2|^{-1/2} dv = 2√2.
    let exact = 2.0 * 2f64.sqrt();
    assert!((est.mean - exact).abs() <= 3.0 * est.stderr, "{} ± {}", est.mean, est.stderr);
}

#[test]
fn deterministic_ensemble_has_zero_variance() {
    let ens = alloy_line(21.0, CouplingLaw::Degenerate { eta_max: 1.0, at: 1.0 });
    let est = fractional_moment(&ens, 0.5, 1e-3, 0.3, &[0.0], &[4.0], 100, 1).unwrap();
    assert_eq!(est.stderr, 0.0);
    let h = ens.full_hamiltonian().unwrap();
    let d = &ens.domain;
    let direct = fmlab_core::resolvent::resolvent_block(
        &h,
        0.5,
        1e-3,
        &fmlab_core::lattice::indicator(d, &[0.0]),
        &fmlab_core::lattice::indicator(d, &[4.0]),
    )
    .unwrap();
    assert!((est.mean - direct.operator_norm.powf(0.3)).abs() < 1e-14);
}

#[test]
fn moments_increase_with_s_for_large_blocks() {
    let ens = single_site(CouplingLaw::Uniform { eta_max: 0.2 });
    // |η - E|^{-1} >= 1/0.3 > 1 for every sample.
    let g: Vec<f64> = [0.1, 0.2, 0.3]
        .iter()
        .map(|&s| fractional_moment(&ens, 0.5, 1e-6, s, &[0.0], &[0.0], 200, 8).unwrap().mean)
        .collect();
    assert!(g[0] < g[1] && g[1] < g[2], "{g:?}");
}

#[test]
fn free_moment_rate_is_s_times_combes_thomas() {
    let ens = alloy_line(201.0, CouplingLaw::Degenerate { eta_max: 1.0, at: 0.0 });
    let s = 0.25;
    let seps: Vec<f64> = (1..=8).map(|k| 5.0 * k as f64).collect();
    let p = moment_decay_profile(&ens, &[(-1.0, 1e-6)], s, &[0.0], &seps, 100, 0, None).unwrap();
    let want = s * 1.5f64.acosh();
    assert!((p.model.rate - want).abs() < 0.1 * want, "{} vs {want}", p.model.rate);
}

#[test]
fn disordered_moments_decay_and_stay_capped() {
    let ens = alloy_line(81.0, CouplingLaw::Uniform { eta_max: 8.0 });
    let grid: Vec<(f64, f64)> = (0..5).map(|k| (0.05 + 0.1 * k as f64, 1e-6)).collect();
    let seps: Vec<f64> = (1..=6).map(|k| 4.0 * k as f64).collect();
    let p = moment_decay_profile(&ens, &grid, 0.25, &[-20.0], &seps, 200, 42, Some(10.0)).unwrap();
    assert!(p.model.rate > 0.0);
    assert!(p.model.r_squared >= 0.95, "{:?}", p.model);
    assert!(p.within_cap);
}

#[test]
fn moment_estimates_ignore_worker_count() {
    let ens = alloy_line(41.0, CouplingLaw::Uniform { eta_max: 3.0 });
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| moment_grid(&ens, &[(0.3, 1e-3), (0.6, 1e-6)], 0.3, &[0.0], &[vec![5.0], vec![9.0]], 120, 77).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn small_sample_counts_rejected() {
    let ens = single_site(CouplingLaw::Uniform { eta_max: 1.0 });
    assert!(fractional_moment(&ens, 0.5, 1e-3, 0.5, &[0.0], &[0.0], 99, 0).is_err());
    assert!(fractional_moment(&ens, 0.5, 1e-3, 1.2, &[0.0], &[0.0], 100, 0).is_err());
}

#[test]
fn scalar_workhorse_against_triangle_oracle() {
    let eps = 1e-6;
    let s = 0.5;
    let r = workhorse_average(&scalar_pair(1.0, eps, 1.0), s, 1e-8).unwrap();
    // v₁ + v₂ has the triangular density min(u, 2 - u) on [0, 2].
    let f = |u: f64| u.min(2.0 - u) * ((u - 1.0).powi(2) + eps * eps).powf(-s / 2.0);
    let oracle = quad::adaptive(0.0, 1.0, 1e-14, 1e-12, f).value + quad::adaptive(1.0, 2.0, 1e-14, 1e-12, f).value;
    assert!((r.value - oracle).abs() < 1e-6 * oracle, "{} vs {oracle}", r.value);
}

#[test]
fn workhorse_is_homogeneous_in_weights() {
    let s = 0.4;
    let lambda: f64 = 3.0;
    let pair = random_pair(4, 3, 0.05);
    let base = workhorse_average(&pair, s, 1e-9).unwrap();
    let mut scaled = pair.clone();
    scaled.m1 *= Complex64::new(lambda, 0.0);
    scaled.m2 *= Complex64::new(lambda, 0.0);
    let big = workhorse_average(&scaled, s, 1e-9).unwrap();
    let ratio = big.value / base.value;
    assert!((ratio - lambda.powf(2.0 * s)).abs() < 1e-7 * ratio, "{ratio}");
}

#[test]
fn workhorse_constant_bounded_on_random_family() {
    let ratios: Vec<f64> = (0..50)
        .map(|k| workhorse_average(&random_pair(16, 100 + k, 0.05), 0.5, 1e-5).unwrap().ratio)
        .collect();
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    assert!(worst.is_finite() && worst > 0.0);
    assert!(ratios.iter().all(|r| r.is_finite()));
}

#[test]
fn scalar_tail_is_triangle_area() {
    let pair = scalar_pair(0.0, 1e-9, 1.0);
    // Up to t ≈ 63 so the fitted decade keeps over a hundred exceedances.
    let thresholds: Vec<f64> = (0..=21).map(|k| 0.5 * 10f64.powf(k as f64 / 10.0)).collect();
    let rep = weak_l1_tail(&pair, &thresholds, 1_000_000, 5).unwrap();
    for (t, m) in rep.thresholds.iter().zip(&rep.measures).filter(|(t, _)| (2.0..=10.0).contains(*t)) {
        let exact = 1.0 / (2.0 * t * t);
        assert!((m - exact).abs() < 0.05 * exact, "t={t}: {m} vs {exact}");
    }
    let slope = rep.slope.unwrap();
    assert!((slope + 2.0).abs() < 0.1, "{slope} over {:?}", rep.fit_window);
}

#[test]
fn random_family_tail_constant_bounded() {
    let thresholds: Vec<f64> = (0..=20).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
    for k in 0..5 {
        let rep = weak_l1_tail(&random_pair(16, 300 + k, 0.05), &thresholds, 20_000, k).unwrap();
        assert!(rep.constant.is_finite());
        assert!(rep.measures.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn insufficient_exceedances_flagged() {
    let rep = tail_report(&[0.1; 100], &[1.0, 10.0, 100.0], 1.0).unwrap();
    assert!(rep.insufficient);
    assert!(rep.slope.is_none());
}

proptest! {
    #[test]
    fn subadditivity(a in prop::collection::vec(0.0f64..100.0, 1..20), s in 0.01f64..1.0) {
        prop_assert!(subadditivity_gap(&a, s) >= -1e-9 * a.iter().sum::<f64>().max(1.0));
    }

    #[test]
    fn tail_measures_non_increasing(values in prop::collection::vec(0.0f64..1e3, 10..300), base in 0.01f64..1.0) {
        let th: Vec<f64> = (0..25).map(|k| base * 1.3f64.powi(k)).collect();
        let rep = tail_report(&values, &th, 1.0).unwrap();
        prop_assert!(rep.measures.windows(2).all(|w| w[0] >= w[1]));
    }
}
