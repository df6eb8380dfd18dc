//! Discrete Gross-Pitaevskii (mean-field) dynamics and the classical
//! Hamiltonian function it derives from.
//!
//! `particles` is a real number here: the interaction enters as U·n with
//! n = N for Husimi/Liouville flows and n = N + M for Glauber-P flows.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use super::ode::dopri5;
use crate::coherent::{pq_to_x, AmplitudeParams, PhasePoint};
use crate::error::{Error, Result};
use crate::fock::HamiltonianParams;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn neighbours(params: &HamiltonianParams, x: &[Complex64], j: usize) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for &(a, b) in &params.bonds() {
        if a == j {
            s += x[b];
        }
        if b == j {
            s += x[a];
        }
    }
    s
}

/// ẋ_j = −i(ε_j x_j − Δ Σ_nb x_nb + U n |x_j|² x_j).
pub fn gpe_rhs(x: &[Complex64], params: &HamiltonianParams, particles: f64) -> Vec<Complex64> {
    let un = params.interaction * particles;
    (0..x.len())
        .map(|j| -I * (params.onsite[j] * x[j] - params.hopping * neighbours(params, x, j) + un * x[j].norm_sqr() * x[j]))
        .collect()
}

/// 𝓗 evaluated on amplitudes.
pub fn hamiltonian_amplitudes(x: &[Complex64], params: &HamiltonianParams, particles: f64) -> f64 {
    let onsite: f64 = x.iter().zip(&params.onsite).map(|(z, e)| e * z.norm_sqr()).sum();
    let hop: f64 = params.bonds().iter().map(|&(a, b)| 2.0 * (x[a].conj() * x[b]).re).sum();
    let inter: f64 = x.iter().map(|z| z.norm_sqr().powi(2)).sum();
    onsite - params.hopping * hop + 0.5 * params.interaction * particles * inter
}

/// 𝓗(p, q) = −2Δ Σ √(p_k p_{k+1}) cos(q_{k+1} − q_k) + (Un/2) Σ p_k² + Σ ε_k p_k.
pub fn hamiltonian_function(pt: &PhasePoint, params: &HamiltonianParams, particles: f64) -> f64 {
    let (p, q) = (pt.p(), pt.q());
    let hop: f64 = params
        .bonds()
        .iter()
        .map(|&(a, b)| 2.0 * (p[a] * p[b]).sqrt() * (q[b] - q[a]).cos())
        .sum();
    let inter: f64 = p.iter().map(|v| v * v).sum();
    let onsite: f64 = p.iter().zip(&params.onsite).map(|(a, e)| a * e).sum();
    -params.hopping * hop + 0.5 * params.interaction * particles * inter + onsite
}

/// (∂𝓗/∂p_k, ∂𝓗/∂q_k) for the independent coordinates k = 2…M, with p₁ = 1 − Σ p_k.
pub fn hamiltonian_gradient(pt: &PhasePoint, params: &HamiltonianParams, particles: f64) -> (Vec<f64>, Vec<f64>) {
    let m = pt.sites();
    let (p, q) = (pt.p(), pt.q());
    let mut gp: Vec<f64> = (0..m)
        .map(|k| params.onsite[k] + params.interaction * particles * p[k])
        .collect();
    let mut gq = vec![0.0; m];
    for &(a, b) in &params.bonds() {
        let phase = q[b] - q[a];
        gp[a] -= params.hopping * (p[b] / p[a]).sqrt() * phase.cos();
        gp[b] -= params.hopping * (p[a] / p[b]).sqrt() * phase.cos();
        let s = 2.0 * params.hopping * (p[a] * p[b]).sqrt() * phase.sin();
        gq[b] += s;
        gq[a] -= s;
    }
    let dp = (1..m).map(|k| gp[k] - gp[0]).collect();
    (dp, gq[1..].to_vec())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpeOptions {
    /// Local error tolerance per step (max-norm on amplitudes).
    pub tol: f64,
    /// Upper bound on the internal step.
    pub max_step: f64,
}

impl Default for GpeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_step: f64::INFINITY,
        }
    }
}

/// Fourth-order splitting integrator: exact single-particle propagation
/// alternating with exact on-site phase rotations, composed to fourth order.
/// Each sub-step is unitary, so ‖x‖ is conserved to rounding.
#[derive(Clone, Debug)]
pub struct GpeFlow {
    params: HamiltonianParams,
    particles: f64,
    opts: GpeOptions,
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

const YOSHIDA_OUTER: f64 = 1.351_207_191_959_657_8;
const YOSHIDA_INNER: f64 = -1.702_414_383_919_315_3;

impl GpeFlow {
    pub fn new(params: HamiltonianParams, particles: f64) -> Result<Self> {
        Self::with_options(params, particles, GpeOptions::default())
    }

    pub fn with_options(params: HamiltonianParams, particles: f64, opts: GpeOptions) -> Result<Self> {
        params.validate()?;
        if !(opts.tol > 0.0) || !(opts.max_step > 0.0) {
            return Err(Error::InvalidArgument("tolerance and step bound must be positive".into()));
        }
        let m = params.sites();
        let mut h1 = DMatrix::from_diagonal(&DVector::from_vec(params.onsite.clone()));
        for &(a, b) in &params.bonds() {
            h1[(a, b)] -= params.hopping;
            h1[(b, a)] -= params.hopping;
        }
        let eig = SymmetricEigen::new(h1);
        debug_assert_eq!(eig.eigenvalues.len(), m);
        Ok(Self {
            params,
            particles,
            opts,
            vectors: eig.eigenvectors,
            values: eig.eigenvalues,
        })
    }

    pub fn params(&self) -> &HamiltonianParams {
        &self.params
    }

    pub fn particles(&self) -> f64 {
        self.particles
    }

    pub fn options(&self) -> GpeOptions {
        self.opts
    }

    fn linear(&self, x: &mut [Complex64], tau: f64) {
        let m = x.len();
        let c: Vec<Complex64> = (0..m)
            .map(|n| {
                let s: Complex64 = (0..m).map(|i| x[i] * self.vectors[(i, n)]).sum();
                s * Complex64::from_polar(1.0, -self.values[n] * tau)
            })
            .collect();
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = (0..m).map(|n| c[n] * self.vectors[(i, n)]).sum();
        }
    }

    fn nonlinear(&self, x: &mut [Complex64], tau: f64) {
        let un = self.params.interaction * self.particles;
        if un == 0.0 {
            return;
        }
        for z in x.iter_mut() {
            *z *= Complex64::from_polar(1.0, -un * z.norm_sqr() * tau);
        }
    }

    fn strang(&self, x: &mut [Complex64], h: f64) {
        self.linear(x, 0.5 * h);
        self.nonlinear(x, h);
        self.linear(x, 0.5 * h);
    }

    fn fourth(&self, x: &mut [Complex64], h: f64) {
        self.strang(x, YOSHIDA_OUTER * h);
        self.strang(x, YOSHIDA_INNER * h);
        self.strang(x, YOSHIDA_OUTER * h);
    }

    /// Advances amplitudes by time `t` (either sign) with step-doubling control.
    pub fn advance(&self, x0: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
        if x0.len() != self.params.sites() {
            return Err(Error::DimensionMismatch {
                expected: self.params.sites(),
                found: x0.len(),
            });
        }
        let mut x = x0.to_vec();
        if t == 0.0 {
            return Ok(x);
        }
        let dir = t.signum();
        let total = t.abs();
        let scale = self.values.amax() + (self.params.interaction * self.particles).abs() + 1e-300;
        let mut h = (0.5 / scale).min(total).min(self.opts.max_step);
        let mut done = 0.0;
        let mut rejects = 0usize;
        while done < total {
            let last = h >= total - done;
            let step = if last { total - done } else { h };
            let mut coarse = x.clone();
            self.fourth(&mut coarse, dir * step);
            let mut fine = x.clone();
            self.fourth(&mut fine, dir * step * 0.5);
            self.fourth(&mut fine, dir * step * 0.5);
            let err = coarse.iter().zip(&fine).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / 15.0;
            if err <= self.opts.tol {
                x = fine;
                done = if last { total } else { done + step };
                rejects = 0;
            } else {
                rejects += 1;
                if rejects > 60 {
                    return Err(Error::StepUnderflow(done * dir));
                }
            }
            let factor = if err == 0.0 { 4.0 } else { (0.9 * (self.opts.tol / err).powf(0.2)).clamp(0.1, 4.0) };
            h = (step * factor).min(self.opts.max_step);
        }
        Ok(x)
    }
}

/// Amplitudes sampled at multiples of `dt` (the last sample lands on `t_final`).
#[derive(Clone, Debug, PartialEq)]
pub struct GpeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<Complex64>>,
}

pub fn integrate_gpe(
    x0: &AmplitudeParams,
    params: &HamiltonianParams,
    particles: f64,
    t_final: f64,
    dt: f64,
) -> Result<GpeTrajectory> {
    let flow = GpeFlow::new(params.clone(), particles)?;
    integrate_with(&flow, x0.as_slice(), t_final, dt)
}

pub fn integrate_with(flow: &GpeFlow, x0: &[Complex64], t_final: f64, dt: f64) -> Result<GpeTrajectory> {
    if !(dt > 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidArgument("dt must be positive and t_final finite".into()));
    }
    let n = (t_final.abs() / dt).ceil().max(0.0) as usize;
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    for s in 1..=n {
        let t = (s as f64 * dt).min(t_final.abs()) * t_final.signum();
        let prev = *times.last().unwrap();
        let x = flow.advance(states.last().unwrap(), t - prev)?;
        times.push(t);
        states.push(x);
    }
    Ok(GpeTrajectory { times, states })
}

/// Hamilton's equations in the (p, q) chart: ṗ_k = −∂𝓗/∂q_k, q̇_k = ∂𝓗/∂p_k.
pub fn integrate_hamilton_pq(
    pt: &PhasePoint,
    params: &HamiltonianParams,
    particles: f64,
    t: f64,
    tol: f64,
) -> Result<PhasePoint> {
    let m = pt.sites();
    let rhs = |z: &[f64]| -> Vec<f64> {
        let pt = PhasePoint::from_reduced_unchecked(z);
        let (dp, dq) = hamiltonian_gradient(&pt, params, particles);
        dq.iter().map(|v| -v).chain(dp).collect()
    };
    let z = dopri5(rhs, &pt.reduced(), t, tol)?;
    if z[..m - 1].iter().any(|&v| !(0.0..=1.0).contains(&v)) || z[..m - 1].iter().sum::<f64>() > 1.0 {
        return Err(Error::Unstable {
            at: t,
            reason: "trajectory left the (p, q) chart".into(),
        });
    }
    PhasePoint::from_reduced(&z)
}

/// Amplitudes of a phase-space point, convenience for flows.
pub fn amplitudes(pt: &PhasePoint) -> Vec<Complex64> {
    pq_to_x(pt).into_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::x_to_pq;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn norm2(x: &[Complex64]) -> f64 {
        x.iter().map(|z| z.norm_sqr()).sum()
    }

    #[test]
    fn rhs_examples() {
        let p = HamiltonianParams::new(vec![0.7; 3], 0.0, 0.0).unwrap();
        let x = [c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0)];
        let d = gpe_rhs(&x, &p, 4.0);
        for (a, b) in d.iter().zip(&x) {
            assert_abs_diff_eq!((a - (-I * 0.7 * b)).norm(), 0.0, epsilon = 1e-16);
        }
        let p = HamiltonianParams::new(vec![0.0; 2], 1.3, 0.0).unwrap();
        let d = gpe_rhs(&[c(1.0, 0.0), c(0.0, 0.0)], &p, 4.0);
        assert_eq!(d, vec![c(0.0, 0.0), c(0.0, 1.3)]);
    }

    #[test]
    fn hamiltonian_examples() {
        let p = HamiltonianParams::new(vec![0.0; 2], 1.0, 0.5).unwrap();
        let top = PhasePoint::new(vec![1.0, 0.0], vec![0.0, 2.0]).unwrap();
        assert_abs_diff_eq!(hamiltonian_function(&top, &p, 8.0), 2.0);
        let mid = PhasePoint::new(vec![0.5, 0.5], vec![0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(hamiltonian_function(&mid, &p, 8.0), -1.0 + 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rabi_oscillation() {
        let p = HamiltonianParams::new(vec![0.0; 2], 0.9, 0.0).unwrap();
        let traj = integrate_gpe(&AmplitudeParams::reference(2), &p, 10.0, 5.0, 0.25).unwrap();
        for (t, x) in traj.times.iter().zip(&traj.states) {
            assert_abs_diff_eq!(x[1].norm_sqr(), (0.9 * t).sin().powi(2), epsilon = 1e-12);
        }
        assert_eq!(*traj.times.last().unwrap(), 5.0);
    }

    #[test]
    fn conserves_norm_and_energy() {
        let p = HamiltonianParams::new(vec![0.1, -0.3, 0.2], 1.0, 0.4).unwrap();
        let x0 = AmplitudeParams::from_unnormalized(vec![c(0.9, 0.0), c(0.2, 0.3), c(-0.1, 0.1)]).unwrap();
        let n = 20.0;
        let flow = GpeFlow::with_options(p.clone(), n, GpeOptions { tol: 1e-11, ..Default::default() }).unwrap();
        let e0 = hamiltonian_amplitudes(x0.as_slice(), &p, n);
        let traj = integrate_with(&flow, x0.as_slice(), 100.0, 10.0).unwrap();
        for x in &traj.states {
            assert_abs_diff_eq!(norm2(x), 1.0, epsilon = 1e-10);
            let e = hamiltonian_amplitudes(x, &p, n);
            assert!(((e - e0) / e0).abs() < 1e-8, "{e} vs {e0}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = HamiltonianParams::new(vec![0.1, -0.3, 0.2, 0.05], 1.0, 0.4).unwrap().with_periodic(true);
        let z = [0.2, 0.3, 0.15, 1.0, 2.0, 5.5];
        let pt = PhasePoint::from_reduced(&z).unwrap();
        let (dp, dq) = hamiltonian_gradient(&pt, &p, 7.0);
        let h = 1e-6;
        for a in 0..6 {
            let mut zp = z;
            let mut zm = z;
            zp[a] += h;
            zm[a] -= h;
            let fd = (hamiltonian_function(&PhasePoint::from_reduced(&zp).unwrap(), &p, 7.0)
                - hamiltonian_function(&PhasePoint::from_reduced(&zm).unwrap(), &p, 7.0))
                / (2.0 * h);
            let an = if a < 3 { dp[a] } else { dq[a - 3] };
            assert_abs_diff_eq!(fd, an, epsilon = 1e-8);
        }
    }

    #[test]
    fn hamiltonian_charts_agree() {
        let p = HamiltonianParams::new(vec![0.3, -0.2, 0.6], 0.7, 1.1).unwrap();
        let x = AmplitudeParams::from_unnormalized(vec![c(0.5, 0.0), c(0.2, -0.6), c(0.4, 0.3)]).unwrap();
        assert_abs_diff_eq!(
            hamiltonian_amplitudes(x.as_slice(), &p, 5.0),
            hamiltonian_function(&x_to_pq(&x), &p, 5.0),
            epsilon = 1e-14
        );
    }

    #[test]
    fn charts_give_the_same_flow() {
        let p = HamiltonianParams::new(vec![0.0, 0.5, -0.2], 1.0, 0.3).unwrap();
        let x0 = AmplitudeParams::from_unnormalized(vec![c(0.7, 0.0), c(0.4, 0.2), c(0.3, -0.4)]).unwrap();
        let flow = GpeFlow::with_options(p.clone(), 3.0, GpeOptions { tol: 1e-14, ..Default::default() }).unwrap();
        let xa = flow.advance(x0.as_slice(), 1.5).unwrap();
        let pa = x_to_pq(&AmplitudeParams::from_unnormalized(xa).unwrap());
        let pb = integrate_hamilton_pq(&x_to_pq(&x0), &p, 3.0, 1.5, 1e-13).unwrap();
        for (a, b) in pa.reduced().iter().zip(pb.reduced()) {
            let d = (a - b).abs().min(std::f64::consts::TAU - (a - b).abs());
            assert!(d < 1e-9, "{a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn rhs_preserves_norm(re in prop::collection::vec(-1.0f64..1.0, 4), im in prop::collection::vec(-1.0f64..1.0, 4), u in -2.0f64..2.0) {
            let raw: Vec<_> = re.iter().zip(&im).map(|(&a, &b)| c(a, b)).collect();
            prop_assume!(norm2(&raw) > 1e-2);
            let x = AmplitudeParams::from_unnormalized(raw).unwrap();
            let p = HamiltonianParams::new(vec![0.2, -0.1, 0.5, 0.0], 0.9, u).unwrap().with_periodic(true);
            let d = gpe_rhs(x.as_slice(), &p, 12.0);
            let dn: f64 = x.as_slice().iter().zip(&d).map(|(a, b)| 2.0 * (a.conj() * b).re).sum();
            prop_assert!(dn.abs() < 1e-14);
        }
    }
}
