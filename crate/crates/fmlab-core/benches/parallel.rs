use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fmlab_core::disorder::{CouplingLaw, Ensemble, ImpuritySet, Interval, SingleSiteProfile};
use fmlab_core::lattice::{build_domain, indicator, Boundary, GridSpec, Region};
use fmlab_core::par;
use fmlab_core::resolvent::ShiftedSolver;

fn ensemble(side: f64) -> Ensemble {
    let d = build_domain(GridSpec::new(2, 1.0).unwrap(), Region::cube(&[0.0, 0.0], side), Boundary::Dirichlet).unwrap();
    let r = side / 2.0 + 2.0;
    let set = ImpuritySet::integer_lattice(2, &[Interval::new(-r, r), Interval::new(-r, r)]).unwrap();
    let n = d.len();
    Ensemble::new(d, set, SingleSiteProfile::Box { height: 1.0, side: 1.0 }, CouplingLaw::Uniform { eta_max: 4.0 }, vec![0.0; n])
        .unwrap()
}

/// One fractional-moment sample: factor, solve one column, take `‖χₓRχ_y‖^s`.
fn sample(ens: &Ensemble, k: usize) -> f64 {
    let h = ens.hamiltonian(7, k as u64).unwrap();
    let x = indicator(&ens.domain, &[0.0, 0.0]);
    let y = indicator(&ens.domain, &[6.0, 0.0]);
    ShiftedSolver::new(&h, 0.5, 1e-6).unwrap().block(&x, &y).unwrap().operator_norm.powf(0.25)
}

fn moments(c: &mut Criterion) {
    let mut group = c.benchmark_group("fractional_moment");
    group.sample_size(10);
    for side in [15.0, 31.0] {
        let ens = ensemble(side);
        let n = 64;
        group.bench_with_input(BenchmarkId::new("sequential", side), &ens, |b, e| {
            b.iter(|| par::tree_sum(&par::map_indexed_seq(n, |k| sample(e, k))))
        });
        group.bench_with_input(BenchmarkId::new("parallel", side), &ens, |b, e| {
            b.iter(|| par::tree_sum(&par::map_indexed(n, |k| sample(e, k))))
        });
    }
    group.finish();
}

criterion_group!(benches, moments);
criterion_main!(benches);
