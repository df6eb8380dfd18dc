//! Real-time propagation exp(−iHt) and thermal operators exp(−βH).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use super::{check_len, DensityMatrix, FockVector, SparseMatrix};
use crate::error::{Error, Result};

/// Sectors up to this size are propagated by dense diagonalization.
pub const DENSE_LIMIT: usize = 4000;

#[derive(Clone, Copy, Debug)]
pub struct PropagateOptions {
    pub dense_limit: usize,
    pub krylov_dim: usize,
    /// Local error tolerance of each Krylov substep, relative to ‖v‖.
    pub krylov_tol: f64,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self {
            dense_limit: DENSE_LIMIT,
            krylov_dim: 30,
            krylov_tol: 1e-13,
        }
    }
}

const SYMMETRY_TOL: f64 = 1e-12;

fn check_hermitian(h: &SparseMatrix) -> Result<()> {
    let d = h.symmetry_defect();
    if d > SYMMETRY_TOL {
        return Err(Error::NotHermitian(d));
    }
    Ok(())
}

/// Eigendecomposition H = V diag(λ) Vᵀ of a real symmetric sector Hamiltonian.
#[derive(Clone, Debug)]
pub struct Spectrum {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn new(h: &SparseMatrix) -> Result<Self> {
        check_hermitian(h)?;
        Ok(Self::from_dense(h.to_dense()))
    }

    pub fn from_dense(h: DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(h);
        Self {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn ground_energy(&self) -> f64 {
        self.values.min()
    }

    /// Applies f(λ) in the eigenbasis.
    fn apply_fn(&self, v: &FockVector, f: impl Fn(f64) -> Complex64) -> Result<FockVector> {
        check_len(self.dim(), v.len())?;
        let re = DVector::from_iterator(v.len(), v.as_slice().iter().map(|z| z.re));
        let im = DVector::from_iterator(v.len(), v.as_slice().iter().map(|z| z.im));
        let cr = self.vectors.tr_mul(&re);
        let ci = self.vectors.tr_mul(&im);
        let mut yr = DVector::zeros(v.len());
        let mut yi = DVector::zeros(v.len());
        for n in 0..v.len() {
            let z = Complex64::new(cr[n], ci[n]) * f(self.values[n]);
            yr[n] = z.re;
            yi[n] = z.im;
        }
        let out_r = &self.vectors * yr;
        let out_i = &self.vectors * yi;
        Ok(FockVector::from_vec(
            out_r.iter().zip(out_i.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect(),
        ))
    }

    /// exp(−iHt) v.
    pub fn evolve(&self, v: &FockVector, t: f64) -> Result<FockVector> {
        self.apply_fn(v, |e| Complex64::from_polar(1.0, -e * t))
    }

    /// Unnormalized exp(−βH).
    pub fn gibbs(&self, beta: f64) -> Result<DensityMatrix> {
        if beta < 0.0 || beta.is_nan() {
            return Err(Error::NegativeBeta(beta));
        }
        let w = self.values.map(|e| (-beta * e).exp());
        let scaled = DMatrix::from_fn(self.dim(), self.dim(), |i, n| self.vectors[(i, n)] * w[n]);
        let m = scaled * self.vectors.transpose();
        let m = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            Complex64::new(0.5 * (m[(i, j)] + m[(j, i)]), 0.0)
        });
        DensityMatrix::new(m)
    }

    /// Boltzmann weights e^{−βλ_n} paired with eigenvectors, for mixture evaluations.
    pub fn thermal_mixture(&self, beta: f64) -> Result<Vec<(f64, FockVector)>> {
        if beta < 0.0 || beta.is_nan() {
            return Err(Error::NegativeBeta(beta));
        }
        Ok((0..self.dim())
            .map(|n| {
                let col = self.vectors.column(n);
                let v = FockVector::from_vec(col.iter().map(|&a| Complex64::new(a, 0.0)).collect());
                ((-beta * self.values[n]).exp(), v)
            })
            .collect())
    }
}

/// exp(−iHt) v with the default strategy.
pub fn propagate(v: &FockVector, h: &SparseMatrix, t: f64) -> Result<FockVector> {
    propagate_with(v, h, t, &PropagateOptions::default())
}

pub fn propagate_with(v: &FockVector, h: &SparseMatrix, t: f64, opts: &PropagateOptions) -> Result<FockVector> {
    check_len(h.dim(), v.len())?;
    check_hermitian(h)?;
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time {t} is not finite")));
    }
    if t == 0.0 {
        return Ok(v.clone());
    }
    if h.dim() <= opts.dense_limit {
        Spectrum::from_dense(h.to_dense()).evolve(v, t)
    } else {
        krylov_expmv(h, v, t, opts)
    }
}

/// Unnormalized e^{−βH} via dense diagonalization.
pub fn gibbs(h: &SparseMatrix, beta: f64) -> Result<DensityMatrix> {
    if beta < 0.0 || beta.is_nan() {
        return Err(Error::NegativeBeta(beta));
    }
    Spectrum::new(h)?.gibbs(beta)
}

fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Lanczos approximation of exp(−iHt)v with substep error control.
fn krylov_expmv(h: &SparseMatrix, v: &FockVector, t: f64, opts: &PropagateOptions) -> Result<FockVector> {
    let n = v.len();
    let mut w: Vec<Complex64> = v.as_slice().to_vec();
    let scale = norm(&w);
    if scale == 0.0 {
        return Ok(v.clone());
    }
    let m_max = opts.krylov_dim.clamp(2, n);
    let sign = t.signum();
    let total = t.abs();
    let mut done = 0.0;
    let mut tau = total;
    while done < total {
        let beta0 = norm(&w);
        let mut basis: Vec<Vec<Complex64>> = vec![w.iter().map(|z| z / beta0).collect()];
        let mut alpha = Vec::with_capacity(m_max);
        let mut beta = Vec::with_capacity(m_max);
        let mut happy = false;
        for j in 0..m_max {
            let mut u = h.matvec(&basis[j]);
            for b in &basis {
                let c = dotc(b, &u);
                u.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            // second pass of Gram-Schmidt keeps the basis orthogonal to working precision
            for b in &basis {
                let c = dotc(b, &u);
                u.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let a = dotc(&basis[j], &h.matvec(&basis[j])).re;
            alpha.push(a);
            let bn = norm(&u);
            beta.push(bn);
            if bn <= 1e-13 * beta0.max(1.0) * (a.abs() + 1.0) {
                happy = true;
                break;
            }
            if j + 1 < m_max {
                basis.push(u.iter().map(|z| z / bn).collect());
            }
        }
        let m = alpha.len();
        let tri = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(tri);
        let remaining = total - done;
        let mut step = if happy { remaining } else { tau.min(remaining) };
        let coeffs = loop {
            let y: Vec<Complex64> = (0..m)
                .map(|i| {
                    (0..m)
                        .map(|k| {
                            let s = eig.eigenvectors[(i, k)] * eig.eigenvectors[(0, k)];
                            Complex64::from_polar(s, -sign * eig.eigenvalues[k] * step)
                        })
                        .sum::<Complex64>()
                })
                .collect();
            let err = if happy { 0.0 } else { beta[m - 1] * y[m - 1].norm() * beta0 };
            if err <= opts.krylov_tol * scale {
                break y;
            }
            step *= 0.5;
            if step < total * 1e-12 {
                return Err(Error::StepUnderflow(done));
            }
        };
        let mut next = vec![Complex64::new(0.0, 0.0); n];
        for (c, b) in coeffs.iter().zip(&basis) {
            next.iter_mut().zip(b).for_each(|(x, y)| *x += c * beta0 * y);
        }
        w = next;
        done += step;
        tau = step * 1.5;
    }
    Ok(FockVector::from_vec(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{build_hamiltonian, FockBasis, HamiltonianParams};
    use approx::assert_abs_diff_eq;

    fn random_vector(n: usize, seed: u64) -> FockVector {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        FockVector::from_vec((0..n).map(|_| Complex64::new(next(), next())).collect())
            .normalized()
            .unwrap()
    }

    #[test]
    fn rabi_oscillation() {
        let p = HamiltonianParams::new(vec![0.0, 0.0], 1.0, 0.0).unwrap();
        let b = FockBasis::new(2, 1).unwrap();
        let h = build_hamiltonian(&p, &b).unwrap();
        let v = FockVector::basis_state(&b, &[1, 0]).unwrap();
        let w = propagate(&v, &h, std::f64::consts::FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(w.as_slice()[1].norm_sqr(), 1.0, epsilon = 1e-14);
        assert_eq!(propagate(&v, &h, 0.0).unwrap(), v);
    }

    #[test]
    fn diagonal_phase() {
        let p = HamiltonianParams::new(vec![0.3, -0.7], 0.0, 0.4).unwrap();
        let b = FockBasis::new(2, 3).unwrap();
        let h = build_hamiltonian(&p, &b).unwrap();
        let v = FockVector::basis_state(&b, &[1, 2]).unwrap();
        let e = 0.3 - 1.4 + 0.4;
        let w = propagate(&v, &h, 1.7).unwrap();
        assert_abs_diff_eq!((w.as_slice()[2] - Complex64::from_polar(1.0, -e * 1.7)).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn krylov_matches_dense() {
        let p = HamiltonianParams::new(vec![0.2, -0.1, 0.4, 0.0], 1.0, 0.7).unwrap();
        let b = FockBasis::new(4, 6).unwrap();
        let h = build_hamiltonian(&p, &b).unwrap();
        let v = random_vector(b.len(), 3);
        let dense = propagate(&v, &h, 3.3).unwrap();
        let opts = PropagateOptions {
            dense_limit: 0,
            ..Default::default()
        };
        for t in [3.3, -3.3] {
            let k = propagate_with(&v, &h, t, &opts).unwrap();
            let d = propagate(&v, &h, t).unwrap();
            assert!((k.coeffs() - d.coeffs()).norm() < 1e-10, "t = {t}");
        }
        assert!((propagate_with(&v, &h, 3.3, &opts).unwrap().coeffs() - dense.coeffs()).norm() < 1e-10);
    }

    #[test]
    fn rejects_non_hermitian() {
        let h = SparseMatrix::from_rows(2, vec![vec![(1, 1.0)], vec![]]);
        let v = FockVector::from_vec(vec![Complex64::new(1.0, 0.0); 2]);
        assert!(matches!(propagate(&v, &h, 1.0), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn gibbs_examples() {
        let h = SparseMatrix::from_rows(2, vec![vec![(0, 0.0)], vec![(1, 1.0)]]);
        let g = gibbs(&h, 1.0).unwrap();
        assert_abs_diff_eq!(g.matrix()[(0, 0)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.matrix()[(1, 1)].re, (-1.0f64).exp(), epsilon = 1e-15);
        let id = gibbs(&h, 0.0).unwrap();
        assert_abs_diff_eq!((id.matrix() - DMatrix::identity(2, 2)).norm(), 0.0, epsilon = 1e-15);
        assert!(matches!(gibbs(&h, -0.1), Err(Error::NegativeBeta(_))));
    }

    #[test]
    fn bloch_equation_richardson() {
        let p = HamiltonianParams::new(vec![0.0, 0.5, -0.2], 1.0, 0.6).unwrap();
        let b = FockBasis::new(3, 3).unwrap();
        let h = build_hamiltonian(&p, &b).unwrap();
        let hd = h.to_dense().map(|x| Complex64::new(x, 0.0));
        let spec = Spectrum::new(&h).unwrap();
        let beta = 0.7;
        let res = |step: f64| {
            let rp = spec.gibbs(beta + step).unwrap();
            let rm = spec.gibbs(beta - step).unwrap();
            let r = spec.gibbs(beta).unwrap();
            let d = (rp.matrix() - rm.matrix()).unscale(2.0 * step);
            (d + (r.matrix() * &hd + &hd * r.matrix()).scale(0.5)).norm()
        };
        let ratio = res(1e-2) / res(5e-3);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }
}
