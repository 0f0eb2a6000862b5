use fmlab_core::disorder::{CouplingLaw, Ensemble, ImpuritySet, Interval, SingleSiteProfile};
use fmlab_core::fit::fit_decay;
use fmlab_core::lattice::{assemble_hamiltonian, build_domain, Boundary, Domain, GridSpec, Region};
use fmlab_core::spectral::{
    bracketing_check, cramer_rate, dynamical_correlator, eigenfunction_decay, full_spectrum, ground_energy,
    ils_probability, large_deviation_probe, lowest_eigenpairs, perturbation_derivative_check, BRACKETING_SLACK,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use std::f64::consts::PI;

fn grid(d: usize) -> GridSpec {
    GridSpec::new(d, 1.0).unwrap()
}

fn line(side: f64, bc: Boundary) -> Domain {
    build_domain(grid(1), Region::cube(&[0.0], side), bc).unwrap()
}

fn alloy(d: Domain, law: CouplingLaw, profile: SingleSiteProfile) -> Ensemble {
    let dim = d.grid.dim;
    let reach = d.sites.iter().flat_map(|s| s.iter().take(dim).map(|c| c.abs())).max().unwrap() as f64 + 3.0;
    let set = ImpuritySet::integer_lattice(dim, &vec![Interval::new(-reach, reach); dim]).unwrap();
    let n = d.len();
    Ensemble::new(d, set, profile, law, vec![0.0; n]).unwrap()
}

fn unit_box() -> SingleSiteProfile {
    SingleSiteProfile::Box { height: 1.0, side: 1.0 }
}

#[test]
fn ten_by_ten_box_matches_dense_oracle() {
    let d = build_domain(grid(2), Region::cube(&[0.5, 0.5], 10.0), Boundary::Dirichlet).unwrap();
    assert_eq!(d.len(), 100);
    let h = assemble_hamiltonian(&d, &vec![0.0; 100]).unwrap();
    let oracle = SymmetricEigen::new(h.matrix.to_dense()).eigenvalues.min();
    let got = lowest_eigenpairs(&h, 1).unwrap().values[0];
    assert!((got - oracle).abs() < 1e-9);
    let exact = 2.0 * (2.0 - 2.0 * (PI / 11.0).cos());
    assert!((got - exact).abs() < 1e-12);
}

#[test]
fn sparse_solver_matches_separable_spectrum() {
    // 25 × 25 = 625 sites, beyond the dense limit.
    let d = build_domain(grid(2), Region::cube(&[0.0, 0.0], 25.0), Boundary::Dirichlet).unwrap();
    assert_eq!(d.len(), 625);
    let h = assemble_hamiltonian(&d, &vec![0.0; d.len()]).unwrap();
    let r = lowest_eigenpairs(&h, 4).unwrap();
    assert!(!r.dense);
    let one = |k: usize| 2.0 - 2.0 * (k as f64 * PI / 26.0).cos();
    let mut exact: Vec<f64> = (1..=3).flat_map(|a| (1..=3).map(move |b| one(a) + one(b))).collect();
    exact.sort_by(f64::total_cmp);
    for (g, e) in r.values.iter().zip(&exact) {
        assert!((g - e).abs() < 1e-9, "{:?} vs {:?}", r.values, &exact[..4]);
    }
    for i in 0..4 {
        for j in 0..4 {
            let dot: f64 = r.vectors[i].iter().zip(&r.vectors[j]).map(|(a, b)| a * b).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((dot - want).abs() < 1e-8);
        }
    }
}

#[test]
fn ils_degenerate_laws() {
    let d = line(16.0, Boundary::Robin { sigma: 0.0 });
    let e0 = ground_energy(&assemble_hamiltonian(&d, &vec![0.0; d.len()]).unwrap()).unwrap();
    let top = alloy(d.clone(), CouplingLaw::Degenerate { eta_max: 1.0, at: 1.0 }, unit_box());
    let p = ils_probability(&top, e0, 16.0, 1.0, 50, 0).unwrap();
    assert_eq!(p.successes, 0);
    let bottom = alloy(d, CouplingLaw::Degenerate { eta_max: 1.0, at: 0.0 }, unit_box());
    let p = ils_probability(&bottom, e0, 16.0, 1.0, 50, 0).unwrap();
    assert_eq!(p.successes, 50);
    assert!(p.ci.0 <= p.estimate && p.estimate <= p.ci.1);
}

#[test]
fn ils_probability_decreases_with_length() {
    let law = CouplingLaw::PiecewiseUniform {
        eta_max: 4.0,
        p: 0.3,
        lo: 2.0,
        floor: 0.002,
    };
    let est: Vec<_> = [8.0, 16.0, 32.0]
        .iter()
        .map(|&l| {
            let d = line(l + 1.0, Boundary::Robin { sigma: 0.0 });
            let e0 = ground_energy(&assemble_hamiltonian(&d, &vec![0.0; d.len()]).unwrap()).unwrap();
            ils_probability(&alloy(d, law, unit_box()), e0, l, 1.0, 500, 11).unwrap()
        })
        .collect();
    assert!(est[0].estimate > est[1].estimate && est[1].estimate > est[2].estimate, "{est:?}");
    assert!(est[2].ci.1 < est[0].ci.0, "{est:?}");
}

#[test]
fn box_ground_energy_above_strip() {
    let box_d = build_domain(grid(2), Region::cube(&[0.0, 0.0], 7.0), Boundary::Dirichlet).unwrap();
    let strip = build_domain(
        grid(2),
        Region::Strip {
            center: vec![0.0],
            side: 7.0,
            width: 15.0,
        },
        Boundary::Dirichlet,
    )
    .unwrap();
    let ens = alloy(strip.clone(), CouplingLaw::Uniform { eta_max: 2.0 }, unit_box());
    for k in 0..10 {
        let v = ens.potential(&ens.realization(5, k));
        let vb: Vec<f64> = box_d.sites.iter().map(|s| v[strip.index_of(s).unwrap()]).collect();
        let eb = ground_energy(&assemble_hamiltonian(&box_d, &vb).unwrap()).unwrap();
        let es = ground_energy(&assemble_hamiltonian(&strip, &v).unwrap()).unwrap();
        assert!(eb >= es - 1e-10);
    }
}

fn strip_pieces(centers: &[f64], side: f64, width: f64) -> Vec<Region> {
    centers
        .iter()
        .map(|&c| Region::Strip {
            center: vec![c],
            side,
            width,
        })
        .collect()
}

#[test]
fn bracketing_on_random_strips() {
    let strip = build_domain(
        grid(2),
        Region::Strip {
            center: vec![0.0],
            side: 9.0,
            width: 7.0,
        },
        Boundary::Dirichlet,
    )
    .unwrap();
    let ens = alloy(strip.clone(), CouplingLaw::Uniform { eta_max: 3.0 }, unit_box());
    let pieces = strip_pieces(&[-3.0, 0.0, 3.0], 3.0, 7.0);
    for k in 0..20 {
        let v = ens.potential(&ens.realization(21, k));
        let rep = bracketing_check(&strip, &pieces, &v).unwrap();
        assert!(rep.holds, "{rep:?}");
        assert!(rep.upper_gap <= BRACKETING_SLACK && rep.lower_gap <= BRACKETING_SLACK);
    }
    // A single piece equal to the whole strip.
    let v = ens.potential(&ens.realization(21, 0));
    let rep = bracketing_check(&strip, &strip_pieces(&[0.0], 9.0, 7.0), &v).unwrap();
    assert!((rep.neumann_pieces[0] - rep.neumann_whole).abs() < 1e-12);
}

#[test]
fn hellmann_feynman_on_random_alloy() {
    let d = line(31.0, Boundary::Robin { sigma: 0.0 });
    let ens = alloy(d.clone(), CouplingLaw::Uniform { eta_max: 1.0 }, unit_box());
    for k in 0..5 {
        let v = ens.potential(&ens.realization(8, k));
        let rep = perturbation_derivative_check(&d, &vec![0.0; d.len()], &v, &[1e-3, 5e-4]).unwrap();
        assert!(rep.relative_discrepancy <= 1e-4, "{rep:?}");
    }
    let zero = perturbation_derivative_check(&d, &vec![0.0; d.len()], &vec![0.0; d.len()], &[1e-3, 5e-4]).unwrap();
    assert!(zero.extrapolated.abs() < 1e-12 && zero.inner_product.abs() < 1e-15);
}

/// `sup_θ θa - ln E e^{θη}` for η uniform on [0, 1], by a dense θ scan and
/// local refinement.
fn uniform_rate(a: f64) -> f64 {
    let f = |t: f64| {
        let lm = if t.abs() < 1e-8 { t / 2.0 } else { (t.exp_m1() / t).ln() };
        t * a - lm
    };
    let mut best = (0.0, f(0.0));
    for k in 0..=20_000 {
        let t = -100.0 + k as f64 * 0.01;
        let v = f(t);
        if v > best.1 {
            best = (t, v);
        }
    }
    let (mut lo, mut hi) = (best.0 - 0.01, best.0 + 0.01);
    for _ in 0..100 {
        let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    f(0.5 * (lo + hi))
}

#[test]
fn large_deviation_slope_matches_cramer() {
    let law = CouplingLaw::Uniform { eta_max: 1.0 };
    let oracle = uniform_rate(0.25);
    assert!((cramer_rate(&law, 0.25) - oracle).abs() < 1e-8, "{} vs {oracle}", cramer_rate(&law, 0.25));
    let rep = large_deviation_probe(&law, &[10, 20, 40], 0.5, 100_000, 3).unwrap();
    let slope = rep.slope.unwrap();
    assert!((slope + oracle).abs() <= 0.25 * oracle, "{slope} vs {}", -oracle);
}

#[test]
fn large_deviation_degenerate_law_never_hits() {
    let law = CouplingLaw::Degenerate { eta_max: 1.0, at: 1.0 };
    let rep = large_deviation_probe(&law, &[10, 20], 0.5, 1000, 3).unwrap();
    assert!(rep.points.iter().all(|p| p.probability == 0.0));
    assert!(rep.below_resolution);
}

#[test]
fn free_eigenvectors_do_not_decay() {
    // A half-sine profile fits with an apparent rate of order 1/L that
    // vanishes as the box grows.
    let rate = |side: f64| {
        let d = line(side, Boundary::Dirichlet);
        let h = assemble_hamiltonian(&d, &vec![0.0; d.len()]).unwrap();
        let fits = eigenfunction_decay(&h, &d, (0.0, 0.01)).unwrap();
        fits.iter().map(|f| f.model.rate.abs()).fold(0.0, f64::max)
    };
    let small = rate(41.0);
    let large = rate(161.0);
    assert!(small < 0.1, "{small}");
    assert!(large < small / 3.0, "{large} vs {small}");
}

#[test]
fn strongly_disordered_eigenvectors_decay() {
    let d = line(61.0, Boundary::Dirichlet);
    let ens = alloy(d.clone(), CouplingLaw::Uniform { eta_max: 20.0 }, unit_box());
    let h = ens.hamiltonian(4, 0).unwrap();
    let (values, _) = full_spectrum(&h);
    let fits = eigenfunction_decay(&h, &d, (values[0], values[9])).unwrap();
    assert_eq!(fits.len(), 10);
    assert!(fits.iter().all(|f| f.model.rate > 0.0), "{fits:?}");
}

#[test]
fn propagation_is_unitary() {
    let d = line(31.0, Boundary::Dirichlet);
    let ens = alloy(d, CouplingLaw::Uniform { eta_max: 2.0 }, unit_box());
    let h = ens.hamiltonian(1, 0).unwrap();
    let (values, vectors) = full_spectrum(&h);
    let n = values.len();
    let v0 = DVector::from_fn(n, |i, _| Complex64::new((i as f64 * 0.3).sin(), (i as f64 * 0.7).cos()));
    let vc = vectors.map(|x| Complex64::new(x, 0.0));
    for t in [0.1, 1.0, 37.0, 1e3] {
        let phases = DMatrix::from_diagonal(&DVector::from_fn(n, |k, _| Complex64::from_polar(1.0, -t * values[k])));
        let vt = &vc * phases * vc.transpose() * &v0;
        assert!((vt.norm() - v0.norm()).abs() < 1e-9 * v0.norm());
    }
}

#[test]
fn correlator_edge_cases() {
    let d = line(21.0, Boundary::Dirichlet);
    let ens = alloy(d, CouplingLaw::Uniform { eta_max: 2.0 }, unit_box());
    let times: Vec<f64> = (0..20).map(|k| k as f64 * 5.0).collect();
    let below = dynamical_correlator(&ens, (-10.0, -5.0), &[0.0], &[vec![3.0]], &times, 5, 0, 0.0).unwrap();
    assert_eq!(below[0].mean_sup, 0.0);
    // A window holding only the ground state of realization 0.
    let h = ens.hamiltonian(0, 0).unwrap();
    let (values, vectors) = full_spectrum(&h);
    let win = (values[0] - 1e-9, values[0] + 1e-9);
    let one = dynamical_correlator(&ens, win, &[0.0], &[vec![3.0]], &times, 1, 0, 0.0).unwrap();
    let ix = ens.domain.index_of(&[0, 0, 0]).unwrap();
    let iy = ens.domain.index_of(&[3, 0, 0]).unwrap();
    let want = (vectors[(ix, 0)] * vectors[(iy, 0)]).abs();
    assert!(one[0].profile.iter().all(|p| (p - want).abs() < 1e-12));
}

#[test]
fn correlator_decays_with_disorder_only() {
    let d = line(61.0, Boundary::Dirichlet);
    let seps: Vec<f64> = (1..=6).map(|k| 4.0 * k as f64).collect();
    let ys: Vec<Vec<f64>> = seps.iter().map(|r| vec![-24.0 + r]).collect();
    let times: Vec<f64> = (0..200).map(|k| k as f64 * 2.0).collect();
    let run = |law| {
        let ens = alloy(d.clone(), law, unit_box());
        let pts = dynamical_correlator(&ens, (0.0, 1.0), &[-24.0], &ys, &times, 40, 5, 2.0).unwrap();
        assert!(pts.iter().all(|p| p.worst_excess <= 1e-9));
        let means: Vec<f64> = pts.iter().map(|p| p.mean_sup).collect();
        fit_decay(&seps, &means).unwrap()
    };
    let disordered = run(CouplingLaw::Uniform { eta_max: 6.0 });
    assert!(disordered.rate > 0.0 && disordered.r_squared >= 0.9, "{disordered:?}");
    let free = run(CouplingLaw::Degenerate { eta_max: 1.0, at: 0.0 });
    assert!(free.consistent_with_zero(1.96) || free.rate.abs() < 0.02, "{free:?}");
}
