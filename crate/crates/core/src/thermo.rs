//! Imaginary-time (Bloch) generators for the unnormalized canonical
//! operator e^{−βH}, the classical Gibbs weight and their comparison.
//!
//! Husimi and Glauber-P Bloch operators are provided for two sites, where
//! the phase space is a grid; the classical weight works for any M.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherent::PhasePoint;
use crate::dynamics::gpe::hamiltonian_function;
use crate::dynamics::pde::SemiDiscrete;
use crate::dynamics::residual::ResidualReport;
use crate::error::{Error, Result};
use crate::fock::{build_hamiltonian, FockBasis, HamiltonianParams, Spectrum};
use crate::grid::{husimi_grid_mixture, GridGeometry, GridOperator, PhaseGrid2};
use crate::operator::{LocalOperator, PhaseSpaceOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlochKind {
    #[serde(rename = "q")]
    Husimi,
    #[serde(rename = "p")]
    GlauberP,
    #[serde(rename = "classical")]
    Classical,
}

/// Generator of ∂f/∂β.
#[derive(Clone, Debug, PartialEq)]
pub struct BlochSpec {
    pub kind: BlochKind,
    pub params: HamiltonianParams,
    pub particles: usize,
}

impl BlochSpec {
    pub fn new(kind: BlochKind, params: HamiltonianParams, particles: usize) -> Result<Self> {
        params.validate()?;
        if kind != BlochKind::Classical && params.sites() != 2 {
            return Err(Error::Unsupported("quantum Bloch operators are implemented for two sites".into()));
        }
        if params.sites() < 2 {
            return Err(Error::InvalidArgument("phase space needs at least two sites".into()));
        }
        Ok(Self { kind, params, particles })
    }
}

impl PhaseSpaceOperator for BlochSpec {
    fn sites(&self) -> usize {
        self.params.sites()
    }

    fn local(&self, pt: &PhasePoint) -> LocalOperator {
        let n = self.particles as f64;
        let mut l = LocalOperator::zeros(self.sites());
        if self.kind == BlochKind::Classical {
            l.c0 = -n * hamiltonian_function(pt, &self.params, n);
            return l;
        }
        let (e1, e2) = (self.params.onsite[0], self.params.onsite[1]);
        let (delta, u) = (self.params.hopping, self.params.interaction);
        let p1 = pt.p()[0];
        let p = pt.p()[1];
        let q = pt.q()[1];
        let s = (p * p1).sqrt();
        let pp = p * p1;
        let tilt = 1.0 - 2.0 * p;
        // Husimi operator −Re 𝒟(H)
        let c0 = -n * (e1 * p1 + e2 * p) + 2.0 * n * delta * s * q.cos() - 0.5 * u * n * (n - 1.0) * (p1 * p1 + p * p);
        let ap = delta * s * q.cos() * tilt + (n - 1.0) * u * pp * tilt + (e1 - e2) * pp;
        let aq = -delta * q.sin() / (2.0 * s);
        let bpp = -u * pp * pp;
        let bqq = 0.25 * u;
        match self.kind {
            BlochKind::Husimi => {
                l.c0 = c0;
                l.first = vec![ap, aq];
            }
            // formal adjoint of the Husimi operator with respect to dp dq
            _ => {
                l.c0 = c0 + 4.0 * delta * s * q.cos() - (n + 1.0) * u * (1.0 - 6.0 * pp) - (e1 - e2) * tilt;
                l.first = vec![-ap - 4.0 * u * pp * tilt, -aq];
            }
        }
        *l.second_mut(0, 0) = bpp;
        *l.second_mut(1, 1) = bqq;
        l
    }
}

fn apply_checked(grid: &PhaseGrid2, spec: &BlochSpec, kind: BlochKind) -> Result<PhaseGrid2> {
    if spec.kind != kind {
        return Err(Error::InvalidArgument(format!("expected a {kind:?} Bloch operator, got {:?}", spec.kind)));
    }
    GridOperator::new(spec, grid.geometry())?.apply(grid)
}

/// ∂Q/∂β on a two-site grid.
pub fn apply_bloch_q(grid: &PhaseGrid2, spec: &BlochSpec) -> Result<PhaseGrid2> {
    apply_checked(grid, spec, BlochKind::Husimi)
}

/// ∂P/∂β on a two-site grid.
pub fn apply_bloch_p(grid: &PhaseGrid2, spec: &BlochSpec) -> Result<PhaseGrid2> {
    apply_checked(grid, spec, BlochKind::GlauberP)
}

/// e^{−βN𝓗(p, q)}, unnormalized.
pub fn classical_gibbs(pt: &PhasePoint, beta: f64, params: &HamiltonianParams, particles: usize) -> Result<f64> {
    if beta < 0.0 || beta.is_nan() {
        return Err(Error::NegativeBeta(beta));
    }
    let n = particles as f64;
    Ok((-beta * n * hamiltonian_function(pt, params, n)).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlochOptions {
    /// Relative local error per step, measured against max|f|.
    pub tol: f64,
    /// Abort once max f / min f exceeds this ratio.
    pub max_ratio: f64,
    pub stability_constant: f64,
}

impl Default for BlochOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_ratio: 1e12,
            stability_constant: 0.5,
        }
    }
}

/// Imaginary-time integrator: RK4 with step-doubling error control.
#[derive(Clone, Debug)]
pub struct BlochSolver {
    spec: BlochSpec,
    semi: SemiDiscrete,
    opts: BlochOptions,
}

impl BlochSolver {
    pub fn new(spec: &BlochSpec, geometry: GridGeometry, opts: BlochOptions) -> Result<Self> {
        if spec.params.sites() != 2 {
            return Err(Error::Unsupported("grid evolution needs two sites".into()));
        }
        let project = spec.kind != BlochKind::Classical;
        Ok(Self {
            spec: spec.clone(),
            semi: SemiDiscrete::new(spec, geometry, spec.particles, project)?,
            opts,
        })
    }

    fn check(&self, y: &[f64], beta: f64) -> Result<()> {
        let max = y.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let min = y.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        if !max.is_finite() || !min.is_finite() {
            return Err(Error::Unstable {
                at: beta,
                reason: "non-finite values".into(),
            });
        }
        if self.spec.kind != BlochKind::GlauberP {
            if min < -1e-10 * max {
                return Err(Error::Unstable {
                    at: beta,
                    reason: format!("positivity lost: min {min:e}, max {max:e}"),
                });
            }
            if min <= 0.0 || max / min > self.opts.max_ratio {
                return Err(Error::Unstable {
                    at: beta,
                    reason: format!("max/min ratio exceeds {:e}", self.opts.max_ratio),
                });
            }
        }
        Ok(())
    }

    /// Integrates from β = 0 data `grid0` to `beta_final`.
    pub fn evolve(&self, grid0: &PhaseGrid2, beta_final: f64) -> Result<PhaseGrid2> {
        if beta_final < 0.0 || beta_final.is_nan() {
            return Err(Error::NegativeBeta(beta_final));
        }
        if grid0.geometry() != self.semi.geometry() {
            return Err(Error::InvalidArgument("grid geometry does not match the solver".into()));
        }
        if beta_final == 0.0 {
            return Ok(grid0.clone());
        }
        let h_max = self.semi.max_stable_step(self.opts.stability_constant);
        let mut h = h_max.min(beta_final);
        let mut beta = 0.0;
        let mut y = grid0.values().to_vec();
        while beta < beta_final {
            let last = h >= beta_final - beta;
            let step = if last { beta_final - beta } else { h };
            let coarse = self.semi.rk4_step(&y, step);
            let half = self.semi.rk4_step(&y, 0.5 * step);
            let fine = self.semi.rk4_step(&half, 0.5 * step);
            let scale = fine.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / (15.0 * scale);
            if err <= self.opts.tol {
                y = fine;
                beta = if last { beta_final } else { beta + step };
                self.check(&y, beta)?;
            }
            let factor = if err == 0.0 { 2.0 } else { (0.9 * (self.opts.tol / err).powf(0.2)).clamp(0.2, 2.0) };
            h = (step * factor).min(h_max);
            if h < beta_final * 1e-12 {
                return Err(Error::StepUnderflow(beta));
            }
        }
        PhaseGrid2::new(grid0.geometry(), y)
    }
}

/// Integrates the Bloch equation with default options from β = 0 data.
pub fn evolve_bloch(grid0: &PhaseGrid2, spec: &BlochSpec, beta_final: f64) -> Result<PhaseGrid2> {
    BlochSolver::new(spec, grid0.geometry(), BlochOptions::default())?.evolve(grid0, beta_final)
}

/// Oracle Husimi function of e^{−βH} on a grid.
pub fn thermal_husimi_grid(params: &HamiltonianParams, particles: usize, beta: f64, geometry: GridGeometry) -> Result<PhaseGrid2> {
    let basis = FockBasis::new(params.sites(), particles)?;
    let spectrum = Spectrum::new(&build_hamiltonian(params, &basis)?)?;
    husimi_grid_mixture(&spectrum.thermal_mixture(beta)?, &basis, geometry)
}

/// Residual of the Husimi Bloch operator against Q of e^{−βH}, with a
/// centred difference of half-width `delta` in β.
pub fn bloch_residual(
    params: &HamiltonianParams,
    particles: usize,
    beta: f64,
    delta: f64,
    geometry: GridGeometry,
) -> Result<ResidualReport> {
    if !(delta > 0.0) || delta > beta {
        return Err(Error::InvalidArgument("need 0 < delta ≤ beta".into()));
    }
    let spec = BlochSpec::new(BlochKind::Husimi, params.clone(), particles)?;
    let basis = FockBasis::new(params.sites(), particles)?;
    let spectrum = Spectrum::new(&build_hamiltonian(params, &basis)?)?;
    let q_at = |b: f64| -> Result<PhaseGrid2> { husimi_grid_mixture(&spectrum.thermal_mixture(b)?, &basis, geometry) };
    let (qm, q0, qp) = (q_at(beta - delta)?, q_at(beta)?, q_at(beta + delta)?);
    let dq = qp.zip_with(&qm, |a, b| (a - b) / (2.0 * delta))?;
    let lq = apply_bloch_q(&q0, &spec)?;
    let residual_norm = lq.zip_with(&dq, |a, b| a - b)?.l2_norm();
    let reference_norm = dq.l2_norm();
    Ok(ResidualReport {
        relative: residual_norm / reference_norm,
        residual_norm,
        reference_norm,
    })
}

/// Comparison of per-particle log densities of the classical and quantum canonical distributions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossoverReport {
    pub particles: usize,
    /// Root-mean-square of (1/N)(log ρ_cl − log Q) over the compared region.
    pub rms_gap: f64,
    /// Fraction of the phase space (by measure) that was compared.
    pub coverage: f64,
}

/// Both distributions are normalized to unit integral over dp dq/2π. The
/// comparison region is fixed in phase space: nodes where the classical
/// per-particle log density lies within `window` of its maximum.
pub fn classical_quantum_gap(
    params: &HamiltonianParams,
    particles: usize,
    beta: f64,
    geometry: GridGeometry,
    window: f64,
) -> Result<CrossoverReport> {
    if !(window > 0.0) {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    let quantum = thermal_husimi_grid(params, particles, beta, geometry)?;
    let classical = PhaseGrid2::from_fn(geometry, |p, q| {
        let pt = PhasePoint::new(vec![1.0 - p, p], vec![0.0, q]).expect("grid node");
        -beta * particles as f64 * hamiltonian_function(&pt, params, particles as f64)
    });
    // classical held in log form to avoid overflow
    let cmax = classical.max();
    let n = particles as f64;
    let inside: Vec<bool> = classical.values().iter().map(|&v| (v - cmax) / n > -window).collect();
    let classical = classical.map(|v| (v - cmax).exp());
    let qn = quantum.scaled(1.0 / quantum.integral());
    let cn = classical.scaled(1.0 / classical.integral());
    let w = geometry.p_weights();
    let nq = geometry.n_q;
    let (sum, mass) = (0..geometry.len())
        .into_par_iter()
        .map(|m| {
            let (a, b) = (qn.values()[m], cn.values()[m]);
            if inside[m] && a > 0.0 {
                let d = (b.ln() - a.ln()) / n;
                let wt = w[m / nq] / nq as f64;
                (wt * d * d, wt)
            } else {
                (0.0, 0.0)
            }
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    if mass == 0.0 {
        return Err(Error::InvalidArgument("no grid node inside the comparison window".into()));
    }
    Ok(CrossoverReport {
        particles,
        rms_gap: (sum / mass).sqrt(),
        coverage: mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> HamiltonianParams {
        HamiltonianParams::new(vec![0.0, 0.5], 1.0, 0.1).unwrap()
    }

    #[test]
    fn zero_hamiltonian_is_stationary() {
        let p = HamiltonianParams::new(vec![0.0, 0.0], 0.0, 0.0).unwrap();
        let g = GridGeometry::new(24, 16).unwrap();
        let f = PhaseGrid2::from_fn(g, |p, q| 1.0 + p * q.cos());
        for kind in [BlochKind::Husimi, BlochKind::GlauberP, BlochKind::Classical] {
            let spec = BlochSpec::new(kind, p.clone(), 6).unwrap();
            let out = GridOperator::new(&spec, g).unwrap().apply(&f).unwrap();
            assert_eq!(out.max_abs(), 0.0);
        }
    }

    #[test]
    fn p_and_q_first_order_terms_are_related() {
        let pt = PhasePoint::new(vec![0.63, 0.37], vec![0.0, 2.2]).unwrap();
        let n = 9;
        let q = BlochSpec::new(BlochKind::Husimi, params(), n).unwrap().local(&pt);
        let p = BlochSpec::new(BlochKind::GlauberP, params(), n).unwrap().local(&pt);
        // flipped first-order signs; the interaction drift turns N−1 into N+M+1
        assert_abs_diff_eq!(p.first[1], -q.first[1], epsilon = 1e-15);
        let mut shifted = params();
        shifted.interaction *= (n + 3) as f64 / (n - 1) as f64;
        let qs = BlochSpec::new(BlochKind::Husimi, shifted, n).unwrap().local(&pt);
        assert_abs_diff_eq!(p.first[0], -qs.first[0], epsilon = 1e-14);
        assert_eq!(p.second, q.second);
    }

    #[test]
    fn delta_transport_lowers_classical_energy() {
        // a point mass moves with velocity −(first-order coefficients)
        let pr = HamiltonianParams::new(vec![0.0, 0.3], 1.0, 0.0).unwrap();
        let spec = BlochSpec::new(BlochKind::GlauberP, pr.clone(), 20).unwrap();
        for (p, q) in [(0.2, 0.4), (0.7, 2.5), (0.45, 5.9), (0.9, 3.3)] {
            let pt = PhasePoint::new(vec![1.0 - p, p], vec![0.0, q]).unwrap();
            let l = spec.local(&pt);
            let (dp, dq) = crate::dynamics::gpe::hamiltonian_gradient(&pt, &pr, 20.0);
            let rate = -l.first[0] * dp[0] - l.first[1] * dq[0];
            assert!(rate < 0.0, "({p}, {q}): {rate}");
        }
        // the mean-field ground state is a fixed point
        let pr = HamiltonianParams::new(vec![0.0, 0.0], 1.0, 0.0).unwrap();
        let spec = BlochSpec::new(BlochKind::GlauberP, pr, 20).unwrap();
        let l = spec.local(&PhasePoint::new(vec![0.5, 0.5], vec![0.0, 0.0]).unwrap());
        assert!(l.first[0].abs() < 1e-15 && l.first[1].abs() < 1e-15);
    }

    #[test]
    fn classical_gibbs_examples() {
        let pt = PhasePoint::new(vec![0.3, 0.7], vec![0.0, 1.0]).unwrap();
        assert_eq!(classical_gibbs(&pt, 0.0, &params(), 10).unwrap(), 1.0);
        let lg = classical_gibbs(&pt, 0.8, &params(), 10).unwrap().ln();
        assert_abs_diff_eq!(lg, -0.8 * 10.0 * hamiltonian_function(&pt, &params(), 10.0), epsilon = 1e-12);
        assert!(classical_gibbs(&pt, -1.0, &params(), 10).is_err());
        let flat = HamiltonianParams::new(vec![0.0; 3], 0.0, 1.0).unwrap();
        let centre = PhasePoint::new(vec![1.0 / 3.0; 3], vec![0.0, 1.0, 2.0]).unwrap();
        let off = PhasePoint::new(vec![0.5, 0.3, 0.2], vec![0.0, 1.0, 2.0]).unwrap();
        assert!(classical_gibbs(&centre, 1.0, &flat, 4).unwrap() > classical_gibbs(&off, 1.0, &flat, 4).unwrap());
    }

    #[test]
    fn bloch_zero_beta_is_identity() {
        let g = GridGeometry::new(24, 16).unwrap();
        let one = PhaseGrid2::constant(g, 1.0);
        let spec = BlochSpec::new(BlochKind::Husimi, params(), 4).unwrap();
        assert_eq!(evolve_bloch(&one, &spec, 0.0).unwrap(), one);
    }
}
