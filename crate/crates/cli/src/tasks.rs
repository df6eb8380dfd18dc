//! One function per configured task.

use bh_phase::dynamics::ensemble::{ensemble_propagate, TrajectoryEnsemble};
use bh_phase::dynamics::generator::GeneratorSpec;
use bh_phase::dynamics::pde::{PdeOptions, PdeSolver};
use bh_phase::dynamics::residual::husimi_generator_residual;
use bh_phase::fock::{expectation_pure, propagate_with, PropagateOptions};
use bh_phase::grid::husimi_grid_pure;
use bh_phase::io::{self, GridHeader, ReportRow};
use bh_phase::thermo::{thermal_husimi_grid, BlochKind, BlochOptions, BlochSolver};
use bh_phase::{
    build_hamiltonian, classical_gibbs, classical_quantum_gap, coherent_fock, expect_all_from_q,
    expect_from_ensemble, expect_from_husimi_ensemble, expectation_fock, pq_to_x, sample_measure, BlochSpec,
    DensityMatrix, Estimator, FockBasis, FockVector, ObservableReport, PhaseGrid2, SitePair,
};

use crate::config::{RunConfig, Task};
use crate::{Artifacts, CliError, TaskOutput};

/// Trajectory step cap when `numerics.dt` is absent.
const DEFAULT_TRAJECTORY_DT: f64 = 0.05;
/// Pass threshold for both residuals in `verify-residual`.
const RESIDUAL_TOL: f64 = 1e-3;
/// Accepted log-log slope of the scaled error against N.
const SLOPE_RANGE: (f64, f64) = (-1.3, -0.7);
/// Standard errors allowed in `verify-identity`.
const IDENTITY_SIGMAS: f64 = 3.0;
/// Per-particle log window for the classical/quantum comparison.
const GAP_WINDOW: f64 = 0.3;
/// Largest sector for which the ensemble task also runs the Fock oracle.
const ORACLE_MAX_DIM: usize = 20_000;

pub(crate) fn run_task(config: &RunConfig, art: &mut Artifacts) -> Result<TaskOutput, CliError> {
    match config.task {
        Task::Exact => exact(config, art),
        Task::Pde => pde(config, art),
        Task::Ensemble => ensemble(config, art),
        Task::Thermo => thermo(config, art),
        Task::VerifyResidual => verify_residual(config, art),
        Task::VerifyScaling => verify_scaling(config, art),
        Task::VerifyIdentity => verify_identity(config, art),
    }
}

fn snapshot_times(config: &RunConfig) -> Vec<f64> {
    let n = config.numerics.snapshots;
    (0..=n).map(|i| config.numerics.t_final * i as f64 / n as f64).collect()
}

fn write_reports(art: &mut Artifacts, stem: &str, rows: &[ReportRow]) -> Result<(), CliError> {
    art.csv(&format!("{stem}.csv"), |buf| io::write_reports_csv(rows, buf))?;
    art.json(&format!("{stem}.json"), &rows)
}

fn fock_reports(v: &FockVector, basis: &FockBasis) -> bh_phase::Result<Vec<ObservableReport>> {
    SitePair::all(basis.sites())
        .into_iter()
        .map(|pair| {
            Ok(ObservableReport {
                pair,
                value: expectation_pure(v, pair, basis)?,
                estimator: Estimator::Fock,
                mc_stderr: 0.0,
            })
        })
        .collect()
}

fn exact(config: &RunConfig, art: &mut Artifacts) -> Result<TaskOutput, CliError> {
    let (m, n) = (config.model.sites, config.model.particles);
    let params = config.model.params()?;
    let basis = FockBasis::new(m, n)?;
    let h = build_hamiltonian(&params, &basis)?;
    let mut v = coherent_fock(&pq_to_x(&config.initial_point()), &basis)?;
    let e0 = h.expectation(v.as_slice());
    let opts = PropagateOptions::default();
    let (mut rows, mut t_prev) = (Vec::new(), 0.0);
    let (mut norm_drift, mut energy_drift) = (0.0f64, 0.0f64);
    for t in snapshot_times(config) {
        v = propagate_with(&v, &h, t - t_prev, &opts)?;
        t_prev = t;
        norm_drift = norm_drift.max((v.norm() - 1.0).abs());
        energy_drift = energy_drift.max((h.expectation(v.as_slice()) - e0).abs());
        rows.extend(fock_reports(&v, &basis)?.iter().map(|r| ReportRow::new(r, n, m, t)));
    }
    write_reports(art, "observables", &rows)?;
    let mut out = TaskOutput::default();
    out.metric("dimension", basis.len());
    out.metric("energy", e0);
    out.metric("norm_drift", norm_drift);
    out.metric("energy_drift", energy_drift);
    Ok(out)
}

fn grid_header(config: &RunConfig, time: f64, kind: &str) -> GridHeader {
    GridHeader {
        n_p: config.numerics.grid[0],
        n_q: config.numerics.grid[1],
        sites: config.model.sites,
        particles: config.model.particles,
        time,
        kind: kind.into(),
    }
}

fn write_grid(art: &mut Artifacts, stem: &str, grid: &PhaseGrid2, header: &GridHeader) -> Result<(), CliError> {
    art.csv(&format!("{stem}.csv"), |buf| io::write_grid_csv(grid, buf))?;
    art.json(&format!("{stem}.json"), header)
}

fn pde(config: &RunConfig, art: &mut Artifacts) -> Result<TaskOutput, CliError> {
    let nm = &config.numerics;
    let n = config.model.particles;
    let params = config.model.params()?;
    let geometry = nm.geometry()?;
    let spec = GeneratorSpec::new(nm.generator, params.clone(), n, nm.order)?;
    let basis = FockBasis::new(2, n)?;
    let v0 = coherent_fock(&pq_to_x(&config.initial_point()), &basis)?;
    let grid0 = husimi_grid_pure(&v0, &basis, geometry)?;
    let opts = PdeOptions {
        stability_constant: nm.stability_constant,
        ..PdeOptions::default()
    };
    let solver = PdeSolver::new(&spec, geometry, opts)?;
    let dt = nm.dt.unwrap_or_else(|| solver.max_stable_step());
    let grid = solver.evolve(&grid0, nm.t_final, dt)?;
    let kind = serde_json::to_value(nm.generator).expect("kind serializes");
    let kind = kind.as_str().unwrap_or_default();
    write_grid(art, "grid_initial", &grid0, &grid_header(config, 0.0, kind))?;
    write_grid(art, "grid_final", &grid, &grid_header(config, nm.t_final, kind))?;
    let h = build_hamiltonian(&params, &basis)?;
    let exact = husimi_grid_pure(&propagate_with(&v0, &h, nm.t_final, &PropagateOptions::default())?, &basis, geometry)?;
    let mut out = TaskOutput::default();
    out.metric("dt", dt);
    out.metric("max_stable_step", solver.max_stable_step());
    out.metric("mass_drift", (grid.mass(n) - grid0.mass(n)).abs());
    out.metric("oracle_relative_l2", grid.relative_l2(&exact)?);
    Ok(out)
}

fn ensemble(config: &RunConfig, art: &mut Artifacts) -> Result<TaskOutput, CliError> {
    let nm = &config.numerics;
    let (m, n) = (config.model.sites, config.model.particles);
    let params = config.model.params()?;
    let seed = nm.seed.expect("validated");
    let x0 = pq_to_x(&config.initial_point());
    let mut ens = TrajectoryEnsemble::from_husimi_coherent(&x0, n, nm.samples, seed)?;
    art.csv("ensemble_initial.csv", |buf| io::write_ensemble_csv(&ens, buf))?;
    let dt = nm.dt.unwrap_or(DEFAULT_TRAJECTORY_DT);
    let (mut rows, mut t_prev) = (Vec::new(), 0.0);
    for t in snapshot_times(config) {
        if t > t_prev {
            ens = ensemble_propagate(&ens, &params, n, t - t_prev, dt)?;
            t_prev = t;
        }
        for pair in SitePair::all(m) {
            rows.push(ReportRow::new(&expect_from_husimi_ensemble(&ens, pair, n)?, n, m, t));
        }
    }
    art.csv("ensemble_final.csv", |buf| io::write_ensemble_csv(&ens, buf))?;
    write_reports(art, "observables", &rows)?;
    let mut out = TaskOutput::default();
    out.metric("trajectories", ens.len());
    out.metric("dt", dt);
    if let Ok(basis) = FockBasis::with_limit(m, n, ORACLE_MAX_DIM) {
        let h = build_hamiltonian(&params, &basis)?;
        let v0 = coherent_fock(&x0, &basis)?;
        let v = propagate_with(&v0, &h, nm.t_final, &PropagateOptions::default())?;
        let exact = fock_reports(&v, &basis)?;
        let last = &rows[rows.len() - exact.len()..];
        let dev = last
            .iter()
            .zip(&exact)
            .map(|(r, e)| ((r.re - e.value.re).powi(2) + (r.im - e.value.im).powi(2)).sqrt())
            .fold(0.0f64, f64::max);
        out.metric("fock_max_deviation", dev);
        out.metric("fock_max_deviation_per_particle", dev / n as f64);
    }
    Ok(out)
}

fn thermo(config: &RunConfig, art: &mut Artifacts) -> Result<TaskOutput, CliError> {
    let nm = &config.numerics;
    let n = config.model.particles;
    let params = config.model.params()?;
    let geometry = nm.geometry()?;
    let spec = BlochSpec::new(nm.bloch, params.clone(), n)?;
    let opts = BlochOptions {
        stability_constant: nm.stability_constant,
        ..BlochOptions::default()
    };
    let solver = BlochSolver::new(&spec, geometry, opts)?;
    let kind = serde_json::to_value(nm.bloch).expect("kind serializes");
    let kind = kind.as_str().unwrap_or_default();
    // the flow is autonomous in β, so each snapshot restarts from the previous one
    let mut grid = PhaseGrid2::constant(geometry, 1.0);
    let mut sweep = Vec::with_capacity(nm.snapshots + 1);
    let mut beta_prev = 0.0;
    for (i, beta) in (0..=nm.snapshots).map(|i| (i, nm.beta_final * i as f64 / nm.snapshots as f64)) {
        grid = solver.evolve(&grid, beta - beta_prev)?;
        beta_prev = beta;
        let stem = format!("thermal_{i:03}");
        write_grid(art, &stem, &grid, &grid_header(config, beta, kind))?;
        sweep.push(serde_json::json!({ "beta": beta, "integral": grid.integral(), "grid": format!("{stem}.csv") }));
    }
    art.json("thermal_sweep.json", &sweep)?;
    let mut out = TaskOutput::default();
    out.metric("integral", grid.integral());
    let (i, j) = grid.argmax();
    out.metric("argmax_pq", [geometry.p(i), geometry.q(j)]);
    match nm.bloch {
        BlochKind::Husimi => {
            let oracle = thermal_husimi_grid(&params, n, nm.beta_final, geometry)?;
            let normalized = |g: &PhaseGrid2| g.scaled(1.0 / g.integral());
            out.metric("oracle_relative_l2", normalized(&grid).relative_l2(&normalized(&oracle))?);
            if nm.beta_final > 0.0 {
                let gap = classical_quantum_gap(&params, n, nm.beta_final, geometry, GAP_WINDOW)?;
                out.metric("classical_gap_rms", gap.rms_gap);
                out.metric("classical_gap_coverage", gap.coverage);
            }
        }
        BlochKind::Classical => {
            let mut values = Vec::with_capacity(geometry.len());
            for i in 0..geometry.n_p {
                for j in 0..geometry.n_q {
                    values.push(classical_gibbs(&geometry.point(i, j), nm.beta_final, &params, n)?);
                }
            }
            let exact = PhaseGrid2::new(geometry, values)?;
            out.metric("oracle_relative_l2", grid.relative_l2(&exact)?);
        }
        BlochKind::GlauberP => {}
    }
    Ok(out)
}

fn verify_residual(config: &RunConfig, art: &mut Artifacts) -> Result<TaskOutput, CliError> {
    let nm = &config.numerics;
    let n = config.model.particles;
    let params = config.model.params()?;
    let geometry = nm.geometry()?;
    let spec = GeneratorSpec::husimi(params.clone(), n)?;
    let basis = FockBasis::new(2, n)?;
    let v0 = coherent_fock(&pq_to_x(&config.initial_point()), &basis)?;
    let dynamic = husimi_generator_residual(&spec, &v0, nm.t_final, nm.delta, geometry)?;
    let bloch = bh_phase::bloch_residual(&params, n, nm.beta_final, nm.delta, geometry)?;
    art.json("residuals.json", &serde_json::json!({ "husimi": dynamic, "bloch": bloch }))?;
    let mut out = TaskOutput::default();
    out.metric("husimi_residual", dynamic.relative);
    out.metric("bloch_residual", bloch.relative);
    let pass = dynamic.relative < RESIDUAL_TOL && bloch.relative < RESIDUAL_TOL;
    out.verdict = Some((
        pass,
        format!(
            "relative residuals {:.3e} (time) and {:.3e} (temperature), tolerance {RESIDUAL_TOL:e}",
            dynamic.relative, bloch.relative
        ),
    ));
    Ok(out)
}

/// Least-squares slope of log y against log x.
fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

fn verify_scaling(config: &RunConfig, art: &mut Artifacts) -> Result<TaskOutput, CliError> {
    let nm = &config.numerics;
    let m = config.model.sites;
    let un = config.model.interaction * config.model.particles as f64;
    let seed = nm.seed.expect("validated");
    let x0 = pq_to_x(&config.initial_point());
    let dt = nm.dt.unwrap_or(DEFAULT_TRAJECTORY_DT);
    let mut errors = Vec::with_capacity(nm.particle_sweep.len());
    for &n in &nm.particle_sweep {
        let params = bh_phase::HamiltonianParams::new(config.model.onsite.clone(), config.model.hopping, un / n as f64)?
            .with_periodic(config.model.periodic);
        let basis = FockBasis::new(m, n)?;
        let h = build_hamiltonian(&params, &basis)?;
        let v = propagate_with(&coherent_fock(&x0, &basis)?, &h, nm.t_final, &PropagateOptions::default())?;
        let ens = TrajectoryEnsemble::from_husimi_coherent(&x0, n, nm.samples, seed)?;
        let ens = ensemble_propagate(&ens, &params, n, nm.t_final, dt)?;
        let mut sq = 0.0;
        for pair in SitePair::all(m) {
            let e = expect_from_ensemble(&ens, pair, n)?.value;
            sq += (e - expectation_pure(&v, pair, &basis)?).norm_sqr();
        }
        errors.push(sq.sqrt() / n as f64);
    }
    let ns: Vec<f64> = nm.particle_sweep.iter().map(|&n| n as f64).collect();
    let slope = loglog_slope(&ns, &errors);
    art.csv("scaling.csv", |buf| {
        let mut w = String::from("N,scaled_error\n");
        for (n, e) in nm.particle_sweep.iter().zip(&errors) {
            w.push_str(&format!("{n},{e:.16e}\n"));
        }
        buf.extend_from_slice(w.as_bytes());
        Ok(())
    })?;
    let mut out = TaskOutput::default();
    out.metric("particles", &nm.particle_sweep);
    out.metric("scaled_errors", &errors);
    out.metric("slope", slope);
    let pass = slope >= SLOPE_RANGE.0 && slope <= SLOPE_RANGE.1;
    out.verdict = Some((pass, format!("log-log slope {slope:.3}, accepted range {SLOPE_RANGE:?}")));
    Ok(out)
}

fn verify_identity(config: &RunConfig, art: &mut Artifacts) -> Result<TaskOutput, CliError> {
    let nm = &config.numerics;
    let (m, n) = (config.model.sites, config.model.particles);
    let seed = nm.seed.expect("validated");
    let basis = FockBasis::new(m, n)?;
    let rho = DensityMatrix::random(basis.len(), seed);
    let sample = sample_measure(m, n, nm.samples, seed.wrapping_add(1))?;
    let reports = expect_all_from_q(&rho, &sample, &basis)?;
    let mut rows = Vec::with_capacity(2 * reports.len());
    let mut worst = 0.0f64;
    for r in &reports {
        let exact = expectation_fock(&rho, r.pair, &basis)?;
        worst = worst.max(r.deviation(exact));
        rows.push(ReportRow::new(r, n, m, 0.0));
        let fock = ObservableReport {
            value: exact,
            estimator: Estimator::Fock,
            mc_stderr: 0.0,
            ..*r
        };
        rows.push(ReportRow::new(&fock, n, m, 0.0));
    }
    write_reports(art, "identity", &rows)?;
    let mut out = TaskOutput::default();
    out.metric("dimension", basis.len());
    out.metric("max_deviation_sigmas", worst);
    let pass = worst < IDENTITY_SIGMAS;
    out.verdict = Some((pass, format!("largest deviation {worst:.2} standard errors, limit {IDENTITY_SIGMAS}")));
    Ok(out)
}
