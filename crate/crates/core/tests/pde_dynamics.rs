use bh_phase::coherent::{coherent_fock, overlap, pq_to_x, AmplitudeParams, PhasePoint};
use bh_phase::dynamics::generator::{GeneratorSpec, Order};
use bh_phase::dynamics::{evolve_pde, GpeFlow, PdeOptions, PdeSolver};
use bh_phase::fock::{build_hamiltonian, propagate, FockBasis, HamiltonianParams};
use bh_phase::grid::{husimi_grid_pure, GridGeometry, GridOperator, PhaseGrid2};
use bh_phase::Error;
use rayon::prelude::*;

fn x0() -> AmplitudeParams {
    pq_to_x(&PhasePoint::new(vec![0.7, 0.3], vec![0.0, 0.7]).unwrap())
}

fn coherent_q(n: usize, g: GridGeometry) -> PhaseGrid2 {
    let basis = FockBasis::new(2, n).unwrap();
    husimi_grid_pure(&coherent_fock(&x0(), &basis).unwrap(), &basis, g).unwrap()
}

fn stable_dt(solver: &PdeSolver, t: f64) -> f64 {
    t.abs() / (t.abs() / solver.max_stable_step()).ceil()
}

#[test]
fn zero_time_returns_input() {
    let g = GridGeometry::new(32, 32).unwrap();
    let q0 = coherent_q(6, g);
    let spec = GeneratorSpec::husimi(HamiltonianParams::new(vec![0.0, 0.5], 1.0, 0.1).unwrap(), 6).unwrap();
    assert_eq!(evolve_pde(&q0, &spec, 0.0, 0.01).unwrap(), q0);
}

#[test]
fn oversized_step_is_rejected() {
    let g = GridGeometry::new(32, 32).unwrap();
    let q0 = coherent_q(6, g);
    let spec = GeneratorSpec::husimi(HamiltonianParams::new(vec![0.0, 0.5], 1.0, 0.1).unwrap(), 6).unwrap();
    assert!(matches!(evolve_pde(&q0, &spec, 1.0, 0.5), Err(Error::StepTooLarge { .. })));
}

#[test]
fn noninteracting_flow_follows_characteristics() {
    let n = 10;
    let t = 1.0;
    let params = HamiltonianParams::new(vec![0.0, 0.5], 1.0, 0.0).unwrap();
    let g = GridGeometry::new(256, 256).unwrap();
    let q0 = coherent_q(n, g);
    let spec = GeneratorSpec::husimi(params.clone(), n).unwrap();
    let solver = PdeSolver::new(&spec, g, PdeOptions::default()).unwrap();
    let q1 = solver.evolve(&q0, t, stable_dt(&solver, t)).unwrap();
    // Q(x, t) = Q₀(Φ₋ₜ x) with Q₀ = |⟨x|x₀⟩|^{2N}
    let flow = GpeFlow::new(params, n as f64).unwrap();
    let values: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|m| {
            let x = pq_to_x(&g.point(m / g.n_q, m % g.n_q));
            let back = AmplitudeParams::from_unnormalized(flow.advance(x.as_slice(), -t).unwrap()).unwrap();
            overlap(&back, &x0(), n).norm_sqr()
        })
        .collect();
    let oracle = PhaseGrid2::new(g, values).unwrap();
    let err = q1.relative_l2(&oracle).unwrap();
    assert!(err < 1e-3, "{err:e}");
}

#[test]
fn interacting_flow_matches_fock_oracle() {
    let n = 20;
    let params = HamiltonianParams::new(vec![0.0, 0.5], 1.0, 1.0 / n as f64).unwrap();
    let g = GridGeometry::new(64, 64).unwrap();
    let basis = FockBasis::new(2, n).unwrap();
    let v0 = coherent_fock(&x0(), &basis).unwrap();
    let q0 = husimi_grid_pure(&v0, &basis, g).unwrap();
    let oracle = husimi_grid_pure(&propagate(&v0, &build_hamiltonian(&params, &basis).unwrap(), 1.0).unwrap(), &basis, g).unwrap();
    let spec = GeneratorSpec::husimi(params, n).unwrap();
    let solver = PdeSolver::new(&spec, g, PdeOptions::default()).unwrap();
    let q1 = solver.evolve(&q0, 1.0, stable_dt(&solver, 1.0)).unwrap();
    let err = q1.relative_l2(&oracle).unwrap();
    assert!(err < 1e-2, "{err:e}");
}

#[test]
fn full_and_truncated_flows_conserve_mass() {
    let n = 12;
    let params = HamiltonianParams::new(vec![0.0, 0.5], 1.0, 0.1).unwrap();
    let g = GridGeometry::new(64, 64).unwrap();
    let q0 = coherent_q(n, g);
    for spec in [
        GeneratorSpec::husimi(params.clone(), n).unwrap(),
        GeneratorSpec::husimi(params.clone(), n).unwrap().with_order(Order::FirstOrder),
        GeneratorSpec::glauber(params.clone(), n).unwrap().with_order(Order::FirstOrder),
        GeneratorSpec::liouville(params.clone(), n).unwrap(),
    ] {
        let solver = PdeSolver::new(&spec, g, PdeOptions::default()).unwrap();
        let q1 = solver.evolve(&q0, 1.0, stable_dt(&solver, 1.0)).unwrap();
        let drift = (q1.mass(n) / q0.mass(n) - 1.0).abs();
        assert!(drift < 1e-6, "{:?} {:?}: {drift:e}", spec.kind, spec.order);
    }
}

#[test]
fn backward_evolution_returns_to_start() {
    let n = 10;
    let params = HamiltonianParams::new(vec![0.0, 0.5], 1.0, 0.1).unwrap();
    let g = GridGeometry::new(48, 48).unwrap();
    let basis = FockBasis::new(2, n).unwrap();
    let v0 = coherent_fock(&x0(), &basis).unwrap();
    let q0 = husimi_grid_pure(&v0, &basis, g).unwrap();
    let oracle = husimi_grid_pure(&propagate(&v0, &build_hamiltonian(&params, &basis).unwrap(), 1.0).unwrap(), &basis, g).unwrap();
    let spec = GeneratorSpec::husimi(params, n).unwrap();
    let solver = PdeSolver::new(&spec, g, PdeOptions::default()).unwrap();
    let dt = stable_dt(&solver, 1.0);
    let q1 = solver.evolve(&q0, 1.0, dt).unwrap();
    let one_way = q1.relative_l2(&oracle).unwrap();
    let back = solver.evolve(&q1, -1.0, dt).unwrap();
    let round_trip = back.relative_l2(&q0).unwrap();
    assert!(round_trip <= 2.0 * one_way, "{round_trip:e} vs {one_way:e}");
}

#[test]
fn second_order_terms_scale_inversely_with_particle_number() {
    let g = GridGeometry::new(96, 64).unwrap();
    let f = PhaseGrid2::from_fn(g, |p, q| (-8.0 * (p - 0.4).powi(2)).exp() * (1.0 + 0.5 * (q - 1.0).cos()));
    let ratio = |n: usize| {
        let params = HamiltonianParams::new(vec![0.0, 0.5], 1.0, 1.0 / n as f64).unwrap();
        let full = GeneratorSpec::husimi(params.clone(), n).unwrap();
        let first = full.clone().with_order(Order::FirstOrder);
        let lf = GridOperator::new(&full, g).unwrap().apply(&f).unwrap();
        let l1 = GridOperator::new(&first, g).unwrap().apply(&f).unwrap();
        lf.zip_with(&l1, |a, b| a - b).unwrap().l2_norm() / l1.l2_norm()
    };
    let ns = [16usize, 32, 64, 128];
    let scaled: Vec<f64> = ns.iter().map(|&n| ratio(n) * n as f64).collect();
    for w in scaled.windows(2) {
        assert!((w[1] / w[0] - 1.0).abs() < 0.1, "{scaled:?}");
    }
}
