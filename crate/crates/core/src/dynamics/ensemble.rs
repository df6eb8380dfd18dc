//! Weighted phase-space ensembles carried along the mean-field flow.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gpe::{integrate_hamilton_pq, GpeFlow, GpeOptions};
use crate::coherent::{pq_to_x, sample_husimi_coherent, x_to_pq, AmplitudeParams, PhasePoint};
use crate::error::{Error, Result};
use crate::fock::HamiltonianParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    points: Vec<PhasePoint>,
    weights: Vec<f64>,
    time: f64,
}

impl TrajectoryEnsemble {
    pub fn new(points: Vec<PhasePoint>, weights: Vec<f64>, time: f64) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidArgument("need one weight per point and at least one point".into()));
        }
        let m = points[0].sites();
        if points.iter().any(|p| p.sites() != m) {
            return Err(Error::InvalidArgument("points have different site counts".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be non-negative".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {s}")));
        }
        Ok(Self { points, weights, time })
    }

    pub fn uniform(points: Vec<PhasePoint>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n as f64; n], 0.0)
    }

    /// A single point carrying all the weight.
    pub fn delta(x0: &AmplitudeParams) -> Self {
        Self {
            points: vec![x_to_pq(x0)],
            weights: vec![1.0],
            time: 0.0,
        }
    }

    /// Exact samples of the Husimi function of the coherent state |x₀⟩.
    pub fn from_husimi_coherent(x0: &AmplitudeParams, particles: usize, count: usize, seed: u64) -> Result<Self> {
        let pts = sample_husimi_coherent(x0, particles, count, seed)?;
        Self::uniform(pts.iter().map(x_to_pq).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn sites(&self) -> usize {
        self.points[0].sites()
    }

    pub fn points(&self) -> &[PhasePoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn time(&self) -> f64 {
        self.time
    }
}

/// Coordinate chart used to integrate each trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Chart {
    #[default]
    Amplitude,
    /// (p, q) chart; points closer than [`CHART_MARGIN`] to its boundary fall back to amplitudes.
    PhaseSpace,
}

pub const CHART_MARGIN: f64 = 1e-6;

/// Advances every point along the flow with interaction prefactor U·N.
pub fn ensemble_propagate(
    ens: &TrajectoryEnsemble,
    params: &HamiltonianParams,
    particles: usize,
    t_final: f64,
    dt: f64,
) -> Result<TrajectoryEnsemble> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let flow = GpeFlow::with_options(
        params.clone(),
        particles as f64,
        GpeOptions {
            max_step: dt,
            ..GpeOptions::default()
        },
    )?;
    ensemble_propagate_with(ens, &flow, t_final, Chart::Amplitude)
}

pub fn ensemble_propagate_with(
    ens: &TrajectoryEnsemble,
    flow: &GpeFlow,
    t_final: f64,
    chart: Chart,
) -> Result<TrajectoryEnsemble> {
    if ens.sites() != flow.params().sites() {
        return Err(Error::DimensionMismatch {
            expected: flow.params().sites(),
            found: ens.sites(),
        });
    }
    let points = ens
        .points
        .par_iter()
        .map(|pt| {
            let inside = pt.p().iter().all(|&p| p > CHART_MARGIN);
            if chart == Chart::PhaseSpace && inside {
                if let Ok(out) = integrate_hamilton_pq(pt, flow.params(), flow.particles(), t_final, flow.options().tol) {
                    return Ok(out);
                }
            }
            let x = flow.advance(pq_to_x(pt).as_slice(), t_final)?;
            Ok(x_to_pq(&AmplitudeParams::from_unnormalized(x)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryEnsemble {
        points,
        weights: ens.weights.clone(),
        time: ens.time + t_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::gpe::integrate_gpe;
    use num_complex::Complex64;

    #[test]
    fn weights_are_validated_and_carried() {
        let pt = PhasePoint::new(vec![0.5, 0.5], vec![0.0, 1.0]).unwrap();
        assert!(TrajectoryEnsemble::new(vec![pt.clone(), pt.clone()], vec![0.5, 0.4], 0.0).is_err());
        let ens = TrajectoryEnsemble::new(vec![pt.clone(), pt], vec![0.25, 0.75], 0.0).unwrap();
        let p = HamiltonianParams::new(vec![0.0, 0.2], 1.0, 0.3).unwrap();
        let out = ensemble_propagate(&ens, &p, 4, 1.0, 0.1).unwrap();
        assert_eq!(out.weights(), ens.weights());
        assert_eq!(out.time(), 1.0);
    }

    #[test]
    fn single_point_matches_integrator() {
        let p = HamiltonianParams::new(vec![0.0, 0.2, 0.1], 1.0, 0.0).unwrap();
        let x0 = AmplitudeParams::from_unnormalized(vec![
            Complex64::new(0.8, 0.0),
            Complex64::new(0.1, 0.3),
            Complex64::new(0.0, -0.4),
        ])
        .unwrap();
        let ens = TrajectoryEnsemble::delta(&x0);
        let out = ensemble_propagate(&ens, &p, 6, 2.0, 0.5).unwrap();
        let traj = integrate_gpe(&x0, &p, 6.0, 2.0, 0.5).unwrap();
        let want = x_to_pq(&AmplitudeParams::from_unnormalized(traj.states.last().unwrap().clone()).unwrap());
        for (a, b) in out.points()[0].reduced().iter().zip(want.reduced()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn chart_covariance() {
        let p = HamiltonianParams::new(vec![0.0, 0.5], 1.0, 0.2).unwrap();
        let x0 = AmplitudeParams::from_unnormalized(vec![Complex64::new(0.8, 0.0), Complex64::new(0.3, 0.4)]).unwrap();
        let ens = TrajectoryEnsemble::from_husimi_coherent(&x0, 10, 64, 3).unwrap();
        let flow = GpeFlow::with_options(p, 10.0, GpeOptions { tol: 1e-13, ..Default::default() }).unwrap();
        let a = ensemble_propagate_with(&ens, &flow, 1.0, Chart::Amplitude).unwrap();
        let b = ensemble_propagate_with(&ens, &flow, 1.0, Chart::PhaseSpace).unwrap();
        for (pa, pb) in a.points().iter().zip(b.points()) {
            for k in 0..2 {
                let dq = (pa.q()[k] - pb.q()[k]).abs();
                assert!((pa.p()[k] - pb.p()[k]).abs() < 1e-8);
                assert!(dq.min(std::f64::consts::TAU - dq) < 1e-8);
            }
        }
    }
}
