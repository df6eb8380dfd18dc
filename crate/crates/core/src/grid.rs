//! Two-site phase-space grids over (p₂, q₂) and their differentiation.
//!
//! p nodes sit at (i + ½)/n_p, strictly inside (0, 1); q nodes are uniform
//! and periodic. Fourier modes in q are differentiated spectrally. Along p
//! each mode e^{iκq} of an N-particle distribution behaves like
//! s^{|κ|}·(polynomial) with s = √(p(1−p)), so odd modes are divided by s
//! before finite differencing and recombined with the product rule.

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::coherent::{CoherentEvaluator, PhasePoint};
use crate::error::{Error, Result};
use crate::fock::{check_len, DensityMatrix, FockBasis, FockVector};
use crate::operator::{LocalOperator, PhaseSpaceOperator};

/// Number of corrected weights at each end of the midpoint rule.
const END_CORRECTIONS: usize = 6;
const MIN_NP: usize = 2 * END_CORRECTIONS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub n_p: usize,
    pub n_q: usize,
}

impl GridGeometry {
    pub fn new(n_p: usize, n_q: usize) -> Result<Self> {
        if n_p < MIN_NP || n_q < 4 || !n_q.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "grid {n_p}×{n_q} too small: need n_p ≥ {MIN_NP} and even n_q ≥ 4"
            )));
        }
        Ok(Self { n_p, n_q })
    }

    pub fn len(&self) -> usize {
        self.n_p * self.n_q
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h_p(&self) -> f64 {
        1.0 / self.n_p as f64
    }

    pub fn h_q(&self) -> f64 {
        TAU / self.n_q as f64
    }

    pub fn p(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n_p as f64
    }

    pub fn q(&self, j: usize) -> f64 {
        TAU * j as f64 / self.n_q as f64
    }

    pub fn point(&self, i: usize, j: usize) -> PhasePoint {
        let p = self.p(i);
        PhasePoint::new(vec![1.0 - p, p], vec![0.0, self.q(j)]).expect("grid node is a valid point")
    }

    /// Signed wavenumber of FFT bin k.
    pub fn wavenumber(&self, k: usize) -> i64 {
        if k <= self.n_q / 2 {
            k as i64
        } else {
            k as i64 - self.n_q as i64
        }
    }

    /// Midpoint weights with Euler-Maclaurin end corrections; they sum to 1
    /// are positive, and integrate polynomials of degree ≤ 5 on [0, 1] exactly.
    pub fn p_weights(&self) -> Vec<f64> {
        let m = END_CORRECTIONS;
        // Σ_i c_i (i+½)^s = B_{s+1}(½)/(s+1)
        let bern_half = [0.0, -1.0 / 12.0, 0.0, 7.0 / 240.0, 0.0, -31.0 / 1344.0];
        let a = DMatrix::from_fn(m, m, |s, i| (i as f64 + 0.5).powi(s as i32));
        let rhs = DVector::from_fn(m, |s, _| bern_half[s] / (s as f64 + 1.0));
        let c = a.lu().solve(&rhs).expect("Vandermonde system is regular");
        let h = self.h_p();
        let mut w = vec![h; self.n_p];
        for i in 0..m {
            w[i] += h * c[i];
            w[self.n_p - 1 - i] += h * c[i];
        }
        w
    }
}

/// Real field on a [`GridGeometry`], row-major with p as the slow index.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid2 {
    geometry: GridGeometry,
    values: Vec<f64>,
}

impl PhaseGrid2 {
    pub fn new(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        check_len(geometry.len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("grid values must be finite".into()));
        }
        Ok(Self { geometry, values })
    }

    pub fn from_fn(geometry: GridGeometry, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        let values = (0..geometry.len())
            .into_par_iter()
            .map(|n| f(geometry.p(n / geometry.n_q), geometry.q(n % geometry.n_q)))
            .collect();
        Self { geometry, values }
    }

    pub fn constant(geometry: GridGeometry, value: f64) -> Self {
        Self {
            geometry,
            values: vec![value; geometry.len()],
        }
    }

    pub(crate) fn from_raw(geometry: GridGeometry, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), geometry.len());
        Self { geometry, values }
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.geometry.n_q + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Node (i, j) of the largest value.
    pub fn argmax(&self) -> (usize, usize) {
        let n = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (n, &v)| if v > acc.1 { (n, v) } else { acc })
            .0;
        (n / self.geometry.n_q, n % self.geometry.n_q)
    }

    /// ∫ f dp dq/2π.
    pub fn integral(&self) -> f64 {
        let w = self.geometry.p_weights();
        let nq = self.geometry.n_q;
        w.iter()
            .enumerate()
            .map(|(i, wi)| wi * self.values[i * nq..(i + 1) * nq].iter().sum::<f64>())
            .sum::<f64>()
            / nq as f64
    }

    /// ∫ f dμ with dμ normalized so that ∫ Q dμ = Tr ρ for N particles.
    pub fn mass(&self, particles: usize) -> f64 {
        (particles + 1) as f64 * self.integral()
    }

    /// (∫ f² dp dq/2π)^{1/2}.
    pub fn l2_norm(&self) -> f64 {
        self.map(|v| v * v).integral().max(0.0).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            geometry: self.geometry,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.geometry != other.geometry {
            return Err(Error::InvalidArgument("grid geometries differ".into()));
        }
        Ok(Self {
            geometry: self.geometry,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// ‖self − other‖ / ‖other‖ in the L² norm.
    pub fn relative_l2(&self, other: &Self) -> Result<f64> {
        Ok(self.zip_with(other, |a, b| a - b)?.l2_norm() / other.l2_norm())
    }
}

/// Finite-difference weights for derivatives 0..=order at `x0` (Fornberg).
pub fn fornberg_weights(x0: f64, nodes: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

type Stencil = Vec<(usize, f64)>;

/// All first and second derivatives of a grid field.
#[derive(Clone, Debug, Default)]
pub struct Derivatives {
    pub f: Vec<f64>,
    pub fp: Vec<f64>,
    pub fq: Vec<f64>,
    pub fpp: Vec<f64>,
    pub fpq: Vec<f64>,
    pub fqq: Vec<f64>,
}

/// Which derivative fields to produce.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Needs {
    pub fp: bool,
    pub fq: bool,
    pub fpp: bool,
    pub fpq: bool,
    pub fqq: bool,
}

impl Needs {
    pub fn all() -> Self {
        Self {
            fp: true,
            fq: true,
            fpp: true,
            fpq: true,
            fqq: true,
        }
    }
}

/// FFT plans and p-stencils for one geometry.
#[derive(Clone)]
pub struct Differentiator {
    geometry: GridGeometry,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    d1: Vec<Stencil>,
    d2: Vec<Stencil>,
    s: Vec<f64>,
    ds: Vec<f64>,
    dds: Vec<f64>,
}

impl std::fmt::Debug for Differentiator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Differentiator").field("geometry", &self.geometry).finish()
    }
}

impl Differentiator {
    pub fn new(geometry: GridGeometry) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(geometry.n_q);
        let ifft = planner.plan_fft_inverse(geometry.n_q);
        let n = geometry.n_p;
        let nodes: Vec<f64> = (0..n).map(|i| geometry.p(i)).collect();
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        for i in 0..n {
            // five-point centred stencil inside, six nearest nodes near the ends
            let (lo, len) = if i >= 2 && i + 2 < n {
                (i - 2, 5)
            } else if i < 2 {
                (0, 6)
            } else {
                (n - 6, 6)
            };
            let local = &nodes[lo..lo + len];
            let w = fornberg_weights(nodes[i], local, 2);
            d1.push((0..len).map(|k| (lo + k, w[1][k])).collect());
            d2.push((0..len).map(|k| (lo + k, w[2][k])).collect());
        }
        let s: Vec<f64> = nodes.iter().map(|&p| (p * (1.0 - p)).sqrt()).collect();
        let ds: Vec<f64> = nodes.iter().zip(&s).map(|(&p, &s)| (1.0 - 2.0 * p) / (2.0 * s)).collect();
        let dds = s.iter().zip(&ds).map(|(&s, &d)| -(1.0 + d * d) / s).collect();
        Self {
            geometry,
            fft,
            ifft,
            d1,
            d2,
            s,
            ds,
            dds,
        }
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    /// Row-wise forward FFT of real values.
    pub fn spectrum(&self, values: &[f64]) -> Vec<Complex64> {
        let nq = self.geometry.n_q;
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.par_chunks_mut(nq).for_each(|row| self.fft.process(row));
        buf
    }

    /// Row-wise inverse FFT, keeping the real part.
    pub fn real_field(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        let nq = self.geometry.n_q;
        let scale = 1.0 / nq as f64;
        spec.par_chunks_mut(nq).for_each(|row| self.ifft.process(row));
        spec.into_iter().map(|z| z.re * scale).collect()
    }

    fn column(spec: &[Complex64], nq: usize, k: usize) -> Vec<Complex64> {
        spec.iter().skip(k).step_by(nq).copied().collect()
    }

    fn apply_stencil(st: &[Stencil], g: &[Complex64]) -> Vec<Complex64> {
        st.iter().map(|row| row.iter().map(|&(c, w)| g[c] * w).sum()).collect()
    }

    /// p-derivatives (first, second) of one Fourier column.
    fn p_derivatives(&self, col: &[Complex64], odd: bool) -> (Vec<Complex64>, Vec<Complex64>) {
        if !odd {
            return (Self::apply_stencil(&self.d1, col), Self::apply_stencil(&self.d2, col));
        }
        let g: Vec<Complex64> = col.iter().zip(&self.s).map(|(c, s)| c / s).collect();
        let g1 = Self::apply_stencil(&self.d1, &g);
        let g2 = Self::apply_stencil(&self.d2, &g);
        let n = col.len();
        let mut f1 = Vec::with_capacity(n);
        let mut f2 = Vec::with_capacity(n);
        for i in 0..n {
            f1.push(g[i] * self.ds[i] + g1[i] * self.s[i]);
            f2.push(g[i] * self.dds[i] + g1[i] * (2.0 * self.ds[i]) + g2[i] * self.s[i]);
        }
        (f1, f2)
    }

    pub fn derivatives(&self, values: &[f64], needs: Needs) -> Derivatives {
        let g = self.geometry;
        let (np, nq) = (g.n_p, g.n_q);
        let spec = self.spectrum(values);
        let want_p = needs.fp || needs.fpp || needs.fpq;
        let cols: Vec<(Vec<Complex64>, Vec<Complex64>)> = if want_p {
            (0..nq)
                .into_par_iter()
                .map(|k| {
                    let col = Self::column(&spec, nq, k);
                    self.p_derivatives(&col, g.wavenumber(k).rem_euclid(2) == 1)
                })
                .collect()
        } else {
            Vec::new()
        };
        let kq = |k: usize| -> f64 {
            let w = g.wavenumber(k);
            if 2 * w.unsigned_abs() as usize == nq {
                0.0
            } else {
                w as f64
            }
        };
        let gather = |pick: &(dyn Fn(usize, usize) -> Complex64 + Sync)| -> Vec<f64> {
            let mut s = vec![Complex64::new(0.0, 0.0); np * nq];
            s.par_chunks_mut(nq).enumerate().for_each(|(i, row)| {
                for (k, z) in row.iter_mut().enumerate() {
                    *z = pick(i, k);
                }
            });
            self.real_field(s)
        };
        let i_unit = Complex64::new(0.0, 1.0);
        let mut d = Derivatives {
            f: values.to_vec(),
            ..Default::default()
        };
        if needs.fp {
            d.fp = gather(&|i, k| cols[k].0[i]);
        }
        if needs.fpp {
            d.fpp = gather(&|i, k| cols[k].1[i]);
        }
        if needs.fpq {
            d.fpq = gather(&|i, k| cols[k].0[i] * i_unit * kq(k));
        }
        if needs.fq {
            d.fq = gather(&|i, k| spec[i * nq + k] * i_unit * kq(k));
        }
        if needs.fqq {
            d.fqq = gather(&|i, k| {
                let w = g.wavenumber(k) as f64;
                -spec[i * nq + k] * w * w
            });
        }
        d
    }
}

/// Orthogonal projector onto the span of N-particle Husimi functions.
///
/// Fourier mode κ of such a function is (p(1−p))^{|κ|/2} times a polynomial
/// of degree ≤ N − |κ| in p; modes with |κ| > N vanish.
#[derive(Clone, Debug)]
pub struct BandProjector {
    geometry: GridGeometry,
    particles: usize,
    sqrt_w: Vec<f64>,
    modes: Vec<DMatrix<f64>>,
}

fn legendre_column(x: f64, deg: usize) -> Vec<f64> {
    let mut v = vec![1.0];
    if deg >= 1 {
        v.push(x);
    }
    for n in 1..deg {
        let nf = n as f64;
        v.push(((2.0 * nf + 1.0) * x * v[n] - nf * v[n - 1]) / (nf + 1.0));
    }
    v
}

impl BandProjector {
    pub fn new(geometry: GridGeometry, particles: usize) -> Result<Self> {
        if particles + 1 > geometry.n_p / 2 || 2 * particles + 2 > geometry.n_q {
            return Err(Error::InvalidArgument(format!(
                "grid {}×{} cannot resolve {particles} particles",
                geometry.n_p, geometry.n_q
            )));
        }
        let w = geometry.p_weights();
        if w.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidArgument("quadrature weights are not positive".into()));
        }
        let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let np = geometry.n_p;
        let modes = (0..=particles)
            .map(|kappa| {
                let deg = particles - kappa;
                let phi = DMatrix::from_fn(np, deg + 1, |i, j| {
                    let p = geometry.p(i);
                    let leg = legendre_column(2.0 * p - 1.0, deg);
                    sqrt_w[i] * (p * (1.0 - p)).powf(kappa as f64 / 2.0) * leg[j]
                });
                // column scaling keeps the QR well conditioned for large κ
                let scale = DVector::from_fn(deg + 1, |j, _| 1.0 / phi.column(j).norm());
                let phi = DMatrix::from_fn(np, deg + 1, |i, j| phi[(i, j)] * scale[j]);
                phi.qr().q()
            })
            .collect();
        Ok(Self {
            geometry,
            particles,
            sqrt_w,
            modes,
        })
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn geometry(&self) -> GridGeometry {
        self.geometry
    }

    /// Projects a row-wise spectrum in place.
    pub fn project_spectrum(&self, spec: &mut [Complex64]) {
        let g = self.geometry;
        let (np, nq) = (g.n_p, g.n_q);
        let cols: Vec<Option<Vec<Complex64>>> = (0..nq)
            .into_par_iter()
            .map(|k| {
                let kappa = g.wavenumber(k).unsigned_abs() as usize;
                if kappa > self.particles {
                    return None;
                }
                let q = &self.modes[kappa];
                let re = DVector::from_fn(np, |i, _| spec[i * nq + k].re * self.sqrt_w[i]);
                let im = DVector::from_fn(np, |i, _| spec[i * nq + k].im * self.sqrt_w[i]);
                let pr = q * q.tr_mul(&re);
                let pi = q * q.tr_mul(&im);
                Some((0..np).map(|i| Complex64::new(pr[i], pi[i]) / self.sqrt_w[i]).collect())
            })
            .collect();
        for (k, col) in cols.into_iter().enumerate() {
            for i in 0..np {
                spec[i * nq + k] = col.as_ref().map_or(Complex64::new(0.0, 0.0), |c| c[i]);
            }
        }
    }

    pub fn project(&self, diff: &Differentiator, values: &[f64]) -> Vec<f64> {
        let mut spec = diff.spectrum(values);
        self.project_spectrum(&mut spec);
        diff.real_field(spec)
    }
}

/// Operator coefficients sampled on every node of a grid.
#[derive(Clone, Debug)]
pub struct GridOperator {
    diff: Differentiator,
    c0: Vec<f64>,
    ap: Vec<f64>,
    aq: Vec<f64>,
    bpp: Vec<f64>,
    bpq: Vec<f64>,
    bqq: Vec<f64>,
    needs: Needs,
}

impl GridOperator {
    pub fn new<O: PhaseSpaceOperator + ?Sized>(op: &O, geometry: GridGeometry) -> Result<Self> {
        Self::with_differentiator(op, Differentiator::new(geometry))
    }

    pub fn with_differentiator<O: PhaseSpaceOperator + ?Sized>(op: &O, diff: Differentiator) -> Result<Self> {
        if op.sites() != 2 {
            return Err(Error::Unsupported(format!(
                "grid operators need two sites, operator has {}",
                op.sites()
            )));
        }
        let g = diff.geometry();
        let locals: Vec<LocalOperator> = (0..g.len())
            .into_par_iter()
            .map(|n| op.local(&g.point(n / g.n_q, n % g.n_q)))
            .collect();
        let field = |f: &dyn Fn(&LocalOperator) -> f64| locals.iter().map(f).collect::<Vec<f64>>();
        let c0 = field(&|l| l.c0);
        let ap = field(&|l| l.first[0]);
        let aq = field(&|l| l.first[1]);
        let bpp = field(&|l| l.second_at(0, 0));
        let bpq = field(&|l| l.mixed(0, 1));
        let bqq = field(&|l| l.second_at(1, 1));
        let nz = |v: &[f64]| v.iter().any(|&x| x != 0.0);
        let needs = Needs {
            fp: nz(&ap),
            fq: nz(&aq),
            fpp: nz(&bpp),
            fpq: nz(&bpq),
            fqq: nz(&bqq),
        };
        Ok(Self {
            diff,
            c0,
            ap,
            aq,
            bpp,
            bpq,
            bqq,
            needs,
        })
    }

    pub fn geometry(&self) -> GridGeometry {
        self.diff.geometry()
    }

    pub fn differentiator(&self) -> &Differentiator {
        &self.diff
    }

    pub fn apply_values(&self, values: &[f64]) -> Vec<f64> {
        let d = self.diff.derivatives(values, self.needs);
        let n = values.len();
        let mut out = vec![0.0; n];
        out.par_iter_mut().enumerate().for_each(|(m, o)| {
            let mut acc = self.c0[m] * d.f[m];
            if self.needs.fp {
                acc += self.ap[m] * d.fp[m];
            }
            if self.needs.fq {
                acc += self.aq[m] * d.fq[m];
            }
            if self.needs.fpp {
                acc += self.bpp[m] * d.fpp[m];
            }
            if self.needs.fpq {
                acc += self.bpq[m] * d.fpq[m];
            }
            if self.needs.fqq {
                acc += self.bqq[m] * d.fqq[m];
            }
            *o = acc;
        });
        out
    }

    pub fn apply(&self, grid: &PhaseGrid2) -> Result<PhaseGrid2> {
        if grid.geometry() != self.geometry() {
            return Err(Error::InvalidArgument("grid geometry does not match the operator".into()));
        }
        Ok(PhaseGrid2::from_raw(self.geometry(), self.apply_values(grid.values())))
    }
}

/// Q = Σ_n w_n |⟨x|ψ_n⟩|² on every node.
pub fn husimi_grid_mixture(states: &[(f64, FockVector)], basis: &FockBasis, geometry: GridGeometry) -> Result<PhaseGrid2> {
    if basis.sites() != 2 {
        return Err(Error::Unsupported("grids need two sites".into()));
    }
    for (_, v) in states {
        check_len(basis.len(), v.len())?;
    }
    let eval = CoherentEvaluator::new(basis);
    let nq = geometry.n_q;
    let mut values = vec![0.0; geometry.len()];
    values.par_chunks_mut(nq).enumerate().for_each(|(i, row)| {
        let p = geometry.p(i);
        let mut c = vec![Complex64::new(0.0, 0.0); basis.len()];
        for (j, out) in row.iter_mut().enumerate() {
            let x = [Complex64::new((1.0 - p).sqrt(), 0.0), Complex64::from_polar(p.sqrt(), -geometry.q(j))];
            eval.fill(&x, &mut c);
            *out = states
                .iter()
                .map(|(w, v)| w * c.iter().zip(v.as_slice()).map(|(a, b)| a.conj() * b).sum::<Complex64>().norm_sqr())
                .sum();
        }
    });
    Ok(PhaseGrid2 { geometry, values })
}

pub fn husimi_grid_pure(v: &FockVector, basis: &FockBasis, geometry: GridGeometry) -> Result<PhaseGrid2> {
    husimi_grid_mixture(&[(1.0, v.clone())], basis, geometry)
}

/// Q = ⟨x|ρ|x⟩ on every node, via the eigen-decomposition of ρ.
pub fn husimi_grid(rho: &DensityMatrix, basis: &FockBasis, geometry: GridGeometry) -> Result<PhaseGrid2> {
    check_len(basis.len(), rho.dim())?;
    let eig = rho.matrix().clone().symmetric_eigen();
    let states: Vec<(f64, FockVector)> = (0..rho.dim())
        .filter(|&n| eig.eigenvalues[n] != 0.0)
        .map(|n| (eig.eigenvalues[n], FockVector::new(eig.eigenvectors.column(n).into_owned())))
        .collect();
    husimi_grid_mixture(&states, basis, geometry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::{coherent_fock, AmplitudeParams};
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadrature_exact_for_low_degree() {
        let g = GridGeometry::new(20, 4).unwrap();
        let w = g.p_weights();
        assert!(w.iter().all(|&v| v > 0.0));
        for deg in 0..=5 {
            let s: f64 = (0..20).map(|i| w[i] * g.p(i).powi(deg)).sum();
            assert_abs_diff_eq!(s, 1.0 / (deg as f64 + 1.0), epsilon = 1e-14);
        }
        let s: f64 = (0..20).map(|i| w[i] * g.p(i).powi(6)).sum();
        assert_abs_diff_eq!(s, 1.0 / 7.0, epsilon = 1e-6);
    }

    #[test]
    fn fornberg_reproduces_central_weights() {
        let w = fornberg_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 2);
        let want1 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        let want2 = [-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0];
        for k in 0..5 {
            assert_abs_diff_eq!(w[1][k], want1[k], epsilon = 1e-14);
            assert_abs_diff_eq!(w[2][k], want2[k], epsilon = 1e-14);
        }
    }

    fn pole_field(p: f64, q: f64) -> f64 {
        // mixes even and odd Fourier modes with the pole behaviour of Husimi functions
        let s = (p * (1.0 - p)).sqrt();
        1.0 + p * p - 0.3 * p + s * (1.0 + p) * q.cos() + 0.4 * s * s * (2.0 * q).sin() + s.powi(3) * (3.0 * q).cos()
    }

    fn pole_derivs(p: f64, q: f64) -> [f64; 5] {
        let u = p * (1.0 - p);
        let du = 1.0 - 2.0 * p;
        let s = u.sqrt();
        let ds = du / (2.0 * s);
        let dds = -1.0 / (4.0 * s * s * s);
        let a = s * (1.0 + p);
        let da = ds * (1.0 + p) + s;
        let dda = dds * (1.0 + p) + 2.0 * ds;
        let s3 = s * u;
        let dds3 = 1.5 * (du * du / (2.0 * s) - 2.0 * s);
        [
            2.0 * p - 0.3 + da * q.cos() + 0.4 * du * (2.0 * q).sin() + 1.5 * s * du * (3.0 * q).cos(),
            -a * q.sin() + 0.8 * u * (2.0 * q).cos() - 3.0 * s3 * (3.0 * q).sin(),
            2.0 + dda * q.cos() - 0.8 * (2.0 * q).sin() + dds3 * (3.0 * q).cos(),
            -da * q.sin() + 0.8 * du * (2.0 * q).cos() - 4.5 * s * du * (3.0 * q).sin(),
            -a * q.cos() - 1.6 * u * (2.0 * q).sin() - 9.0 * s3 * (3.0 * q).cos(),
        ]
    }

    fn smooth_field(p: f64, q: f64) -> f64 {
        let s = (p * (1.0 - p)).sqrt();
        p.exp() * (1.0 + s * q.cos())
    }

    fn smooth_derivs(p: f64, q: f64) -> [f64; 5] {
        let s = (p * (1.0 - p)).sqrt();
        let ds = (1.0 - 2.0 * p) / (2.0 * s);
        let dds = -1.0 / (4.0 * s * s * s);
        let e = p.exp();
        let a = s * e;
        let da = (ds + s) * e;
        let dda = (dds + 2.0 * ds + s) * e;
        [e + da * q.cos(), -a * q.sin(), e + dda * q.cos(), -da * q.sin(), -a * q.cos()]
    }

    fn max_error(n: usize, f: fn(f64, f64) -> f64, want: fn(f64, f64) -> [f64; 5]) -> f64 {
        let g = GridGeometry::new(n, 16).unwrap();
        let grid = PhaseGrid2::from_fn(g, f);
        let d = Differentiator::new(g).derivatives(grid.values(), Needs::all());
        let mut e: f64 = 0.0;
        for i in 0..n {
            for j in 0..16 {
                let m = i * 16 + j;
                let w = want(g.p(i), g.q(j));
                let got = [d.fp[m], d.fq[m], d.fpp[m], d.fpq[m], d.fqq[m]];
                for k in 0..5 {
                    e = e.max((w[k] - got[k]).abs() / (1.0 + w[k].abs()));
                }
            }
        }
        e
    }

    #[test]
    fn derivatives_exact_on_band_structure() {
        assert!(max_error(32, pole_field, pole_derivs) < 1e-10);
    }

    #[test]
    fn derivatives_converge_at_fourth_order() {
        let e1 = max_error(64, smooth_field, smooth_derivs);
        let e2 = max_error(128, smooth_field, smooth_derivs);
        assert!(e2 < 1e-6, "{e1} {e2}");
        assert!(e1 / e2 > 12.0, "{e1} {e2}");
    }

    #[test]
    fn projector_fixes_husimi_functions() {
        let b = FockBasis::new(2, 6).unwrap();
        let g = GridGeometry::new(48, 32).unwrap();
        let x = AmplitudeParams::from_unnormalized(vec![Complex64::new(0.7, 0.0), Complex64::new(0.2, 0.5)]).unwrap();
        let q = husimi_grid_pure(&coherent_fock(&x, &b).unwrap(), &b, g).unwrap();
        let proj = BandProjector::new(g, 6).unwrap();
        let d = Differentiator::new(g);
        let pq = proj.project(&d, q.values());
        let err = q.values().iter().zip(&pq).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        // idempotent on an arbitrary field
        let r = PhaseGrid2::from_fn(g, |p, q| (5.0 * p).sin() * (q + p).cos());
        let once = proj.project(&d, r.values());
        let twice = proj.project(&d, &once);
        let err = once.iter().zip(&twice).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn husimi_grid_mass_is_trace() {
        let b = FockBasis::new(2, 5).unwrap();
        let g = GridGeometry::new(64, 16).unwrap();
        let x = AmplitudeParams::from_unnormalized(vec![Complex64::new(0.5, 0.0), Complex64::new(0.1, -0.8)]).unwrap();
        let rho = DensityMatrix::pure(&coherent_fock(&x, &b).unwrap());
        let q = husimi_grid(&rho, &b, g).unwrap();
        assert_abs_diff_eq!(q.mass(5), 1.0, epsilon = 1e-10);
    }
}
