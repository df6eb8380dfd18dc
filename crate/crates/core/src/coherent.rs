//! SU(M) coherent states: charts, Fock realization, Husimi values and
//! sampling of the invariant measure.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{check_len, DensityMatrix, FockBasis, FockVector};

const NORM_TOL: f64 = 1e-12;

/// Below this probability a phase is undefined and reported as 0.
pub const DEGENERATE_P: f64 = 1e-14;

/// Normalized amplitudes x with x₁ real and non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeParams {
    x: Vec<Complex64>,
}

impl AmplitudeParams {
    pub fn new(x: Vec<Complex64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidArgument("amplitudes need at least one site".into()));
        }
        let n: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!("amplitude norm² is {n}, expected 1")));
        }
        if x[0].im != 0.0 || x[0].re < 0.0 {
            return Err(Error::InvalidArgument("x₁ must be real and non-negative".into()));
        }
        Ok(Self { x })
    }

    /// Normalizes and removes the global phase.
    pub fn from_unnormalized(x: Vec<Complex64>) -> Result<Self> {
        let n = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if x.is_empty() || !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidArgument("cannot normalize amplitudes".into()));
        }
        let phase = if x[0].norm() > 0.0 {
            x[0].conj() / x[0].norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let mut x: Vec<Complex64> = x.iter().map(|z| z * phase / n).collect();
        x[0] = Complex64::new(x[0].norm(), 0.0);
        Ok(Self { x })
    }

    /// (1, 0, …, 0).
    pub fn reference(sites: usize) -> Self {
        let mut x = vec![Complex64::new(0.0, 0.0); sites.max(1)];
        x[0] = Complex64::new(1.0, 0.0);
        Self { x }
    }

    pub fn sites(&self) -> usize {
        self.x.len()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.x
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.x
    }
}

/// Coset coordinates y₂…y_M with Σ|y_k|² ≤ (π/2)².
#[derive(Clone, Debug, PartialEq)]
pub struct CosetParams {
    y: Vec<Complex64>,
}

impl CosetParams {
    pub fn new(y: Vec<Complex64>) -> Result<Self> {
        let r = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(r <= PI / 2.0 * (1.0 + NORM_TOL)) {
            return Err(Error::InvalidArgument(format!("‖y‖ = {r} exceeds π/2")));
        }
        Ok(Self { y })
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.y
    }
}

pub fn y_to_x(y: &CosetParams) -> AmplitudeParams {
    let r = y.y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let sinc = if r < 1e-8 { 1.0 - r * r / 6.0 } else { r.sin() / r };
    let mut x = Vec::with_capacity(y.y.len() + 1);
    x.push(Complex64::new(r.cos().max(0.0), 0.0));
    x.extend(y.y.iter().map(|z| z * sinc));
    AmplitudeParams { x }
}

/// Probabilities p and phases q with q₁ = 0, all phases in [0, 2π).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    p: Vec<f64>,
    q: Vec<f64>,
}

impl PhasePoint {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.len() != q.len() {
            return Err(Error::InvalidArgument("p and q must have equal nonzero length".into()));
        }
        if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidArgument("probabilities must lie in [0, 1]".into()));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!("probabilities sum to {s}")));
        }
        if q[0] != 0.0 {
            return Err(Error::InvalidArgument("q₁ must be exactly 0".into()));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("phases must be finite".into()));
        }
        Ok(Self {
            p,
            q: q.into_iter().map(wrap_phase).collect(),
        })
    }

    /// Builds from the independent coordinates z = (p₂…p_M, q₂…q_M).
    pub fn from_reduced(z: &[f64]) -> Result<Self> {
        if !z.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument("reduced coordinates have odd length".into()));
        }
        let m1 = z.len() / 2;
        let rest: f64 = z[..m1].iter().sum();
        let mut p = vec![(1.0 - rest).max(0.0)];
        p.extend_from_slice(&z[..m1]);
        let mut q = vec![0.0];
        q.extend_from_slice(&z[m1..]);
        Self::new(p, q)
    }

    /// As [`PhasePoint::from_reduced`] without validation or phase wrapping,
    /// for intermediate integrator stages.
    pub(crate) fn from_reduced_unchecked(z: &[f64]) -> Self {
        let m1 = z.len() / 2;
        let mut p = vec![1.0 - z[..m1].iter().sum::<f64>()];
        p.extend_from_slice(&z[..m1]);
        let mut q = vec![0.0];
        q.extend_from_slice(&z[m1..]);
        Self { p, q }
    }

    /// Independent coordinates (p₂…p_M, q₂…q_M).
    pub fn reduced(&self) -> Vec<f64> {
        self.p[1..].iter().chain(&self.q[1..]).copied().collect()
    }

    pub fn sites(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// True where the phase chart is singular and q_k was set to 0.
    pub fn is_degenerate(&self, k: usize) -> bool {
        self.p[k] < DEGENERATE_P
    }

    /// x_k x_j* = √(p_j p_k) e^{i(q_j − q_k)}.
    pub fn bilinear(&self, j: usize, k: usize) -> Complex64 {
        Complex64::from_polar((self.p[j] * self.p[k]).sqrt(), self.q[j] - self.q[k])
    }
}

pub(crate) fn wrap_phase(q: f64) -> f64 {
    let r = q.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

pub fn x_to_pq(x: &AmplitudeParams) -> PhasePoint {
    let mut p: Vec<f64> = x.x.iter().map(|z| z.norm_sqr()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v = (*v / s).min(1.0));
    let q = x
        .x
        .iter()
        .zip(&p)
        .enumerate()
        .map(|(k, (z, &pk))| {
            if k == 0 || pk < DEGENERATE_P {
                0.0
            } else {
                wrap_phase(-z.arg())
            }
        })
        .collect();
    PhasePoint { p, q }
}

pub fn pq_to_x(pt: &PhasePoint) -> AmplitudeParams {
    let x = pt
        .p
        .iter()
        .zip(&pt.q)
        .map(|(&p, &q)| Complex64::from_polar(p.sqrt(), -q))
        .collect::<Vec<_>>();
    let mut x = x;
    x[0] = Complex64::new(pt.p[0].sqrt(), 0.0);
    AmplitudeParams { x }
}

/// Precomputed log multinomials for repeated coherent-vector evaluation on one basis.
#[derive(Clone, Debug)]
pub struct CoherentEvaluator<'a> {
    basis: &'a FockBasis,
    half_log_multinomial: Vec<f64>,
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for k in 1..=n {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
}

impl<'a> CoherentEvaluator<'a> {
    pub fn new(basis: &'a FockBasis) -> Self {
        let lf = ln_factorials(basis.particles());
        let n = basis.particles();
        let half_log_multinomial = basis
            .states()
            .iter()
            .map(|s| 0.5 * (lf[n] - s.iter().map(|&k| lf[k as usize]).sum::<f64>()))
            .collect();
        Self {
            basis,
            half_log_multinomial,
        }
    }

    pub fn basis(&self) -> &FockBasis {
        self.basis
    }

    /// Coefficients √(N!/Πn_i!) Π x_i^{n_i} written into `out`.
    pub fn fill(&self, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.basis.particles();
        let powers: Vec<Vec<Complex64>> = x
            .iter()
            .map(|&xi| {
                let mut v = Vec::with_capacity(n + 1);
                let mut acc = Complex64::new(1.0, 0.0);
                for _ in 0..=n {
                    v.push(acc);
                    acc *= xi;
                }
                v
            })
            .collect();
        for ((o, s), lm) in out.iter_mut().zip(self.basis.states()).zip(&self.half_log_multinomial) {
            let mut c = Complex64::new(lm.exp(), 0.0);
            for (pw, &k) in powers.iter().zip(s) {
                c *= pw[k as usize];
            }
            *o = c;
        }
    }

    pub fn vector(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.basis.len()];
        self.fill(x, &mut out);
        out
    }
}

/// |x⟩ = (Σ x_k a_k†)^N |0⟩ / √N!.
pub fn coherent_fock(x: &AmplitudeParams, basis: &FockBasis) -> Result<FockVector> {
    check_len(basis.sites(), x.sites())?;
    Ok(FockVector::from_vec(CoherentEvaluator::new(basis).vector(&x.x)))
}

/// ⟨x|x′⟩ = (Σ x_k* x′_k)^N.
pub fn overlap(x: &AmplitudeParams, xp: &AmplitudeParams, particles: usize) -> Complex64 {
    let s: Complex64 = x.x.iter().zip(&xp.x).map(|(a, b)| a.conj() * b).sum();
    s.powu(particles as u32)
}

/// Q(x) = ⟨x|ρ|x⟩.
pub fn husimi(rho: &DensityMatrix, x: &AmplitudeParams, basis: &FockBasis) -> Result<f64> {
    check_len(basis.len(), rho.dim())?;
    let c = coherent_fock(x, basis)?;
    let v = rho.matrix() * c.coeffs();
    let q = c.coeffs().dotc(&v).re;
    if q < -1e-12 * rho.trace().abs().max(1.0) {
        return Err(Error::InvalidDensity(format!("negative Husimi value {q:e}")));
    }
    Ok(q.max(0.0))
}

/// Invariant-measure sample normalized so that Σ weight·|x_i⟩⟨x_i| → I.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSample {
    pub sites: usize,
    pub particles: usize,
    pub seed: u64,
    pub weight: f64,
    pub points: Vec<PhasePoint>,
}

impl MeasureSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = AmplitudeParams> + '_ {
        self.points.iter().map(pq_to_x)
    }
}

/// Independent generator for point `index` of a cloud drawn with `seed`.
pub(crate) fn point_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn gaussian_vector<R: Rng>(rng: &mut R, m: usize) -> Vec<Complex64> {
    (0..m)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im)
        })
        .collect()
}

/// Draws `count` points from the Fubini-Study measure on CP^{M−1}.
pub fn sample_measure(sites: usize, particles: usize, count: usize, seed: u64) -> Result<MeasureSample> {
    if count == 0 || sites == 0 {
        return Err(Error::InvalidArgument("need at least one site and one sample".into()));
    }
    let dim = crate::fock::binomial((particles + sites - 1) as u64, (sites - 1) as u64)
        .ok_or_else(|| Error::InvalidArgument("sector size overflows".into()))? as f64;
    let points = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = point_rng(seed, i as u64);
            let x = AmplitudeParams::from_unnormalized(gaussian_vector(&mut rng, sites))
                .expect("gaussian vector is nonzero");
            x_to_pq(&x)
        })
        .collect();
    Ok(MeasureSample {
        sites,
        particles,
        seed,
        weight: dim / count as f64,
        points,
    })
}

/// Exact draws from the Husimi density |⟨x|x₀⟩|^{2N} dμ of a coherent state.
pub fn sample_husimi_coherent(
    x0: &AmplitudeParams,
    particles: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<AmplitudeParams>> {
    let m = x0.sites();
    if m < 2 {
        return Ok(vec![x0.clone(); count]);
    }
    let beta = Beta::new(particles as f64 + 1.0, m as f64 - 1.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let u = x0.as_slice();
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = point_rng(seed, i as u64);
            let t: f64 = beta.sample(&mut rng);
            // uniform unit vector orthogonal to x₀
            let w = loop {
                let mut g = gaussian_vector(&mut rng, m);
                let c: Complex64 = u.iter().zip(&g).map(|(a, b)| a.conj() * b).sum();
                g.iter_mut().zip(u).for_each(|(gi, ui)| *gi -= c * ui);
                let n = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if n > 1e-12 {
                    break g.into_iter().map(|z| z / n).collect::<Vec<_>>();
                }
            };
            let (a, b) = (t.sqrt(), (1.0 - t).max(0.0).sqrt());
            let x = u.iter().zip(&w).map(|(ui, wi)| ui * a + wi * b).collect();
            AmplitudeParams::from_unnormalized(x).expect("unit vector")
        })
        .collect())
}
