//! Observables ⟨E_jk⟩ from phase-space distributions and from the oracle.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherent::{AmplitudeParams, CoherentEvaluator, MeasureSample};
use crate::dynamics::ensemble::TrajectoryEnsemble;
use crate::error::{Error, Result};
use crate::fock::{check_len, expectation_fock, DensityMatrix, FockBasis, SitePair};

/// Number of jackknife blocks used for Monte Carlo error bars.
pub const JACKKNIFE_BLOCKS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    QIntegral,
    PIntegral,
    Ensemble,
    Fock,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableReport {
    pub pair: SitePair,
    pub value: Complex64,
    pub estimator: Estimator,
    /// Zero for deterministic estimators.
    pub mc_stderr: f64,
}

impl ObservableReport {
    fn exact(pair: SitePair, value: Complex64, estimator: Estimator) -> Self {
        Self {
            pair,
            value,
            estimator,
            mc_stderr: 0.0,
        }
    }

    /// |value − reference| in units of the standard error.
    pub fn deviation(&self, reference: Complex64) -> f64 {
        (self.value - reference).norm() / self.mc_stderr
    }
}

fn check_pair(pair: SitePair, sites: usize) -> Result<()> {
    if pair.j >= sites || pair.k >= sites {
        return Err(Error::InvalidArgument(format!("site pair ({}, {}) out of range for {sites} sites", pair.j, pair.k)));
    }
    Ok(())
}

fn kronecker(pair: SitePair) -> f64 {
    if pair.j == pair.k {
        1.0
    } else {
        0.0
    }
}

/// Weighted mean Σ w f / Σ w and its block-jackknife standard error
/// (√(var Re + var Im)). Blocks are contiguous index ranges, summed in a
/// fixed order.
fn jackknife(weights: &[f64], values: &[Complex64], blocks: usize) -> (Complex64, f64) {
    let n = values.len();
    let b = blocks.min(n).max(1);
    let sums: Vec<(f64, Complex64)> = (0..b)
        .into_par_iter()
        .map(|i| {
            let (lo, hi) = (i * n / b, (i + 1) * n / b);
            (lo..hi).fold((0.0, Complex64::new(0.0, 0.0)), |(sw, sf), m| (sw + weights[m], sf + values[m] * weights[m]))
        })
        .collect();
    let (tw, tf) = sums.iter().fold((0.0, Complex64::new(0.0, 0.0)), |a, s| (a.0 + s.0, a.1 + s.1));
    let mean = tf / tw;
    if b < 2 {
        return (mean, 0.0);
    }
    let loo: Vec<Complex64> = sums.iter().map(|(w, f)| (tf - f) / (tw - w)).collect();
    let avg: Complex64 = loo.iter().sum::<Complex64>() / b as f64;
    let (vr, vi) = loo
        .iter()
        .fold((0.0, 0.0), |(r, i), z| (r + (z.re - avg.re).powi(2), i + (z.im - avg.im).powi(2)));
    let scale = (b - 1) as f64 / b as f64;
    (mean, (scale * (vr + vi)).sqrt())
}

fn check_sample(sample: &MeasureSample, basis: &FockBasis) -> Result<()> {
    if sample.sites != basis.sites() || sample.particles != basis.particles() {
        return Err(Error::InvalidArgument(format!(
            "sample drawn for (M, N) = ({}, {}) but basis is ({}, {})",
            sample.sites,
            sample.particles,
            basis.sites(),
            basis.particles()
        )));
    }
    if sample.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    Ok(())
}

/// Monte Carlo estimate of (N+M)∫x_k x_j* Q dμ − δ_jk for every pair at once.
/// ρ is normalized to unit trace first.
pub fn expect_all_from_q(rho: &DensityMatrix, sample: &MeasureSample, basis: &FockBasis) -> Result<Vec<ObservableReport>> {
    check_sample(sample, basis)?;
    check_len(basis.len(), rho.dim())?;
    let rho = rho.normalized()?;
    let eval = CoherentEvaluator::new(basis);
    let m = basis.sites();
    let prefactor = (basis.particles() + m) as f64 * sample.weight * sample.len() as f64;
    // per point: Q(x) and the bilinears x_k x_j*
    let per_point: Vec<(f64, Vec<Complex64>)> = sample
        .points
        .par_iter()
        .map_init(
            || vec![Complex64::new(0.0, 0.0); basis.len()],
            |buf, pt| {
                let x = crate::coherent::pq_to_x(pt);
                eval.fill(x.as_slice(), buf);
                let v = nalgebra::DVectorView::from_slice(buf, buf.len());
                let q = v.dotc(&(rho.matrix() * v)).re;
                let xs = x.as_slice();
                let bil = SitePair::all(m).into_iter().map(|p| xs[p.k] * xs[p.j].conj()).collect();
                (q, bil)
            },
        )
        .collect();
    let ones = vec![1.0; per_point.len()];
    Ok(SitePair::all(m)
        .into_iter()
        .enumerate()
        .map(|(idx, pair)| {
            let f: Vec<Complex64> = per_point.iter().map(|(q, b)| b[idx] * (*q * prefactor)).collect();
            let (mean, err) = jackknife(&ones, &f, JACKKNIFE_BLOCKS);
            ObservableReport {
                pair,
                value: mean - kronecker(pair),
                estimator: Estimator::QIntegral,
                mc_stderr: err,
            }
        })
        .collect())
}

/// Monte Carlo estimate of ⟨E_jk⟩ through the Husimi integral identity.
pub fn expect_from_q(rho: &DensityMatrix, pair: SitePair, sample: &MeasureSample, basis: &FockBasis) -> Result<ObservableReport> {
    check_pair(pair, basis.sites())?;
    let all = expect_all_from_q(rho, sample, basis)?;
    Ok(all[pair.j * basis.sites() + pair.k])
}

/// N x_{k,0} x*_{j,0}, exact for P = δ(x − x₀).
pub fn expect_from_p_delta(x0: &AmplitudeParams, pair: SitePair, particles: usize) -> Result<ObservableReport> {
    check_pair(pair, x0.sites())?;
    let x = x0.as_slice();
    Ok(ObservableReport::exact(pair, x[pair.k] * x[pair.j].conj() * particles as f64, Estimator::PIntegral))
}

fn ensemble_mean(ens: &TrajectoryEnsemble, pair: SitePair) -> Result<(Complex64, f64)> {
    check_pair(pair, ens.sites())?;
    let f: Vec<Complex64> = ens.points().iter().map(|pt| pt.bilinear(pair.j, pair.k)).collect();
    if ens.len() < JACKKNIFE_BLOCKS {
        let mean = f.iter().zip(ens.weights()).map(|(z, w)| z * w).sum();
        return Ok((mean, 0.0));
    }
    Ok(jackknife(ens.weights(), &f, JACKKNIFE_BLOCKS))
}

/// Classical statistical average N Σ w_i x_{k,i} x*_{j,i}; the standard
/// error is reported when the ensemble has at least [`JACKKNIFE_BLOCKS`] points.
pub fn expect_from_ensemble(ens: &TrajectoryEnsemble, pair: SitePair, particles: usize) -> Result<ObservableReport> {
    let (mean, err) = ensemble_mean(ens, pair)?;
    let n = particles as f64;
    Ok(ObservableReport {
        pair,
        value: mean * n,
        estimator: Estimator::Ensemble,
        mc_stderr: err * n,
    })
}

/// (N+M) Σ w_i x_{k,i} x*_{j,i} − δ_jk, the Husimi identity applied to an
/// ensemble whose points were drawn from a Q function. Exact at the sampling
/// time up to Monte Carlo error.
pub fn expect_from_husimi_ensemble(ens: &TrajectoryEnsemble, pair: SitePair, particles: usize) -> Result<ObservableReport> {
    let (mean, err) = ensemble_mean(ens, pair)?;
    let c = (particles + ens.sites()) as f64;
    Ok(ObservableReport {
        pair,
        value: mean * c - kronecker(pair),
        estimator: Estimator::QIntegral,
        mc_stderr: err * c,
    })
}

/// Oracle value wrapped as a report.
pub fn expect_fock(rho: &DensityMatrix, pair: SitePair, basis: &FockBasis) -> Result<ObservableReport> {
    Ok(ObservableReport::exact(pair, expectation_fock(rho, pair, basis)?, Estimator::Fock))
}
