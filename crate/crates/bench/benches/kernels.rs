use bh_phase::dynamics::ensemble::{ensemble_propagate, TrajectoryEnsemble};
use bh_phase::dynamics::generator::GeneratorSpec;
use bh_phase::grid::{husimi_grid_pure, GridOperator};
use bh_phase::{build_hamiltonian, coherent_fock, propagate, pq_to_x, FockBasis, GridGeometry, HamiltonianParams, PhasePoint};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn params(sites: usize) -> HamiltonianParams {
    let onsite = (0..sites).map(|k| 0.5 * k as f64).collect();
    HamiltonianParams::new(onsite, 1.0, 0.1).unwrap()
}

fn initial() -> PhasePoint {
    PhasePoint::new(vec![0.7, 0.3], vec![0.0, 0.7]).unwrap()
}

fn husimi_grid(c: &mut Criterion) {
    let mut group = c.benchmark_group("husimi_grid");
    for n in [10usize, 40] {
        let basis = FockBasis::new(2, n).unwrap();
        let v = coherent_fock(&pq_to_x(&initial()), &basis).unwrap();
        let g = GridGeometry::new(64, 64).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| husimi_grid_pure(black_box(&v), &basis, g).unwrap())
        });
    }
    group.finish();
}

fn generator_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("generator_apply");
    for side in [64usize, 128] {
        let g = GridGeometry::new(side, side).unwrap();
        let spec = GeneratorSpec::husimi(params(2), 20).unwrap();
        let op = GridOperator::new(&spec, g).unwrap();
        let basis = FockBasis::new(2, 20).unwrap();
        let q = husimi_grid_pure(&coherent_fock(&pq_to_x(&initial()), &basis).unwrap(), &basis, g).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(side), &side, |b, _| {
            b.iter(|| op.apply(black_box(&q)).unwrap())
        });
    }
    group.finish();
}

fn gpe_ensemble(c: &mut Criterion) {
    let x0 = pq_to_x(&initial());
    let ens = TrajectoryEnsemble::from_husimi_coherent(&x0, 32, 1000, 1).unwrap();
    let p = params(2);
    c.bench_function("gpe_ensemble_1000", |b| {
        b.iter(|| ensemble_propagate(black_box(&ens), &p, 32, 1.0, 0.05).unwrap())
    });
}

fn fock_propagate(c: &mut Criterion) {
    let mut group = c.benchmark_group("fock_propagate");
    group.sample_size(20);
    for (m, n) in [(3usize, 20usize), (4, 12)] {
        let basis = FockBasis::new(m, n).unwrap();
        let h = build_hamiltonian(&params(m), &basis).unwrap();
        let mut p = vec![0.0; m];
        p[0] = 1.0;
        let x = pq_to_x(&PhasePoint::new(p, vec![0.0; m]).unwrap());
        let v = coherent_fock(&x, &basis).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("M{m}_N{n}")), &basis.len(), |b, _| {
            b.iter(|| propagate(black_box(&v), &h, 1.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, husimi_grid, generator_apply, gpe_ensemble, fock_propagate);
criterion_main!(benches);
