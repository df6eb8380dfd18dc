//! Fixed-(M, N) Fock sector of the Bose-Hubbard chain.
//!
//! Sites are zero-indexed throughout the crate. The basis is ordered
//! lexicographically descending in the occupation tuple, so for two sites
//! and three particles the order is (3,0), (2,1), (1,2), (0,3).

mod propagate;
mod sparse;

pub use propagate::{gibbs, propagate, propagate_with, PropagateOptions, Spectrum};
pub use sparse::SparseMatrix;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the sector size.
pub const DEFAULT_MAX_DIM: usize = 200_000;

/// Ordered pair of site indices addressing E_jk = a_j† a_k.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SitePair {
    pub j: usize,
    pub k: usize,
}

impl SitePair {
    pub fn new(j: usize, k: usize) -> Self {
        Self { j, k }
    }

    /// All M² pairs in row-major order.
    pub fn all(sites: usize) -> Vec<SitePair> {
        (0..sites)
            .flat_map(|j| (0..sites).map(move |k| SitePair { j, k }))
            .collect()
    }

    pub fn transposed(self) -> Self {
        Self { j: self.k, k: self.j }
    }
}

/// Site energies ε, hopping Δ and on-site interaction U.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianParams {
    pub onsite: Vec<f64>,
    pub hopping: f64,
    pub interaction: f64,
    /// Adds the bond (M, 1) for chains of three or more sites.
    #[serde(default)]
    pub periodic: bool,
}

impl HamiltonianParams {
    pub fn new(onsite: Vec<f64>, hopping: f64, interaction: f64) -> Result<Self> {
        let p = Self {
            onsite,
            hopping,
            interaction,
            periodic: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_periodic(mut self, periodic: bool) -> Self {
        self.periodic = periodic;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.onsite.is_empty() {
            return Err(Error::InvalidArgument("onsite energies must cover at least one site".into()));
        }
        if !self.onsite.iter().all(|e| e.is_finite()) {
            return Err(Error::InvalidArgument("onsite energies must be finite".into()));
        }
        if !self.hopping.is_finite() || !self.interaction.is_finite() {
            return Err(Error::InvalidArgument("hopping and interaction must be finite".into()));
        }
        Ok(())
    }

    pub fn sites(&self) -> usize {
        self.onsite.len()
    }

    /// Nearest-neighbour bonds (i, i+1), plus the wrap bond when periodic and M ≥ 3.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let m = self.sites();
        let mut b: Vec<_> = (0..m.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        if self.periodic && m >= 3 {
            b.push((m - 1, 0));
        }
        b
    }

    /// The Hamiltonian −H; its forward flow is the backward flow of H.
    pub fn negated(&self) -> Self {
        Self {
            onsite: self.onsite.iter().map(|e| -e).collect(),
            hopping: -self.hopping,
            interaction: -self.interaction,
            periodic: self.periodic,
        }
    }
}

pub(crate) fn binomial(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        acc = acc.checked_mul(n as u128 - k as u128 + i)? / i;
    }
    Some(acc)
}

/// Occupation-number basis of the sector with `sites` modes and `particles` bosons.
#[derive(Clone, Debug)]
pub struct FockBasis {
    sites: usize,
    particles: usize,
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl FockBasis {
    pub fn new(sites: usize, particles: usize) -> Result<Self> {
        Self::with_limit(sites, particles, DEFAULT_MAX_DIM)
    }

    pub fn with_limit(sites: usize, particles: usize, max_dim: usize) -> Result<Self> {
        if sites == 0 {
            return Err(Error::InvalidArgument("a basis needs at least one site".into()));
        }
        let size = binomial((particles + sites - 1) as u64, (sites - 1) as u64);
        match size {
            Some(s) if s <= max_dim as u128 => {}
            other => {
                return Err(Error::SectorTooLarge {
                    size: other.unwrap_or(u128::MAX),
                    limit: max_dim,
                })
            }
        }
        let mut states = Vec::new();
        let mut cur = Vec::with_capacity(sites);
        fill(sites, particles as u32, &mut cur, &mut states);
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Self {
            sites,
            particles,
            states,
            index,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[u32] {
        &self.states[i]
    }

    pub fn index_of(&self, occupation: &[u32]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    /// Target index and amplitude of E_jk acting on basis state `i`, if nonzero.
    pub fn hop(&self, pair: SitePair, i: usize) -> Option<(usize, f64)> {
        let s = &self.states[i];
        let (j, k) = (pair.j, pair.k);
        if j == k {
            let n = s[j];
            return (n > 0).then_some((i, n as f64));
        }
        if s[k] == 0 {
            return None;
        }
        let mut t = s.clone();
        let amp = ((s[j] as f64 + 1.0) * s[k] as f64).sqrt();
        t[k] -= 1;
        t[j] += 1;
        Some((self.index[&t], amp))
    }

    fn check_pair(&self, pair: SitePair) -> Result<()> {
        if pair.j >= self.sites || pair.k >= self.sites {
            return Err(Error::InvalidArgument(format!(
                "site pair ({}, {}) out of range for {} sites",
                pair.j, pair.k, self.sites
            )));
        }
        Ok(())
    }
}

fn fill(sites_left: usize, n_left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if sites_left == 1 {
        cur.push(n_left);
        out.push(cur.clone());
        cur.pop();
        return;
    }
    for n in (0..=n_left).rev() {
        cur.push(n);
        fill(sites_left - 1, n_left - n, cur, out);
        cur.pop();
    }
}

/// State vector over a [`FockBasis`].
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector(DVector<Complex64>);

impl FockVector {
    pub fn new(coeffs: DVector<Complex64>) -> Self {
        Self(coeffs)
    }

    pub fn from_vec(coeffs: Vec<Complex64>) -> Self {
        Self(DVector::from_vec(coeffs))
    }

    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len))
    }

    pub fn basis_state(basis: &FockBasis, occupation: &[u32]) -> Result<Self> {
        let i = basis
            .index_of(occupation)
            .ok_or_else(|| Error::InvalidArgument(format!("{occupation:?} is not in the sector")))?;
        let mut v = DVector::zeros(basis.len());
        v[i] = Complex64::new(1.0, 0.0);
        Ok(Self(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.0.as_slice()
    }

    pub fn coeffs(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<Complex64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &FockVector) -> Complex64 {
        self.0.dotc(&other.0)
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidArgument("cannot normalize a zero or non-finite vector".into()));
        }
        Ok(Self(self.0.unscale(n)))
    }
}

/// E_jk |v⟩.
pub fn apply_e(pair: SitePair, v: &FockVector, basis: &FockBasis) -> Result<FockVector> {
    basis.check_pair(pair)?;
    check_len(basis.len(), v.len())?;
    let mut out = DVector::zeros(basis.len());
    for (i, c) in v.as_slice().iter().enumerate() {
        if let Some((t, amp)) = basis.hop(pair, i) {
            out[t] += c * amp;
        }
    }
    Ok(FockVector(out))
}

/// Dense matrix of E_jk in the given basis.
pub fn e_matrix(pair: SitePair, basis: &FockBasis) -> Result<DMatrix<f64>> {
    basis.check_pair(pair)?;
    let mut m = DMatrix::zeros(basis.len(), basis.len());
    for i in 0..basis.len() {
        if let Some((t, amp)) = basis.hop(pair, i) {
            m[(t, i)] += amp;
        }
    }
    Ok(m)
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Bose-Hubbard Hamiltonian of the sector as a real symmetric sparse matrix.
pub fn build_hamiltonian(params: &HamiltonianParams, basis: &FockBasis) -> Result<SparseMatrix> {
    params.validate()?;
    check_len(basis.sites(), params.sites())?;
    let bonds = params.bonds();
    let rows: Vec<Vec<(usize, f64)>> = (0..basis.len())
        .map(|i| {
            let s = basis.state(i);
            let diag: f64 = s
                .iter()
                .zip(&params.onsite)
                .map(|(&n, e)| {
                    let n = n as f64;
                    e * n + 0.5 * params.interaction * n * (n - 1.0)
                })
                .sum();
            let mut row = vec![(i, diag)];
            if params.hopping != 0.0 {
                for &(a, b) in &bonds {
                    for pair in [SitePair::new(a, b), SitePair::new(b, a)] {
                        if let Some((t, amp)) = basis.hop(pair, i) {
                            row.push((t, -params.hopping * amp));
                        }
                    }
                }
            }
            row
        })
        .collect();
    Ok(SparseMatrix::from_rows(basis.len(), rows))
}

/// Total number operator Σ_j E_jj.
pub fn number_operator(basis: &FockBasis) -> SparseMatrix {
    let rows = (0..basis.len())
        .map(|i| vec![(i, basis.state(i).iter().map(|&n| n as f64).sum())])
        .collect();
    SparseMatrix::from_rows(basis.len(), rows)
}

/// Density operator over a Fock sector.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(DMatrix<Complex64>);

impl DensityMatrix {
    /// Accepts a square matrix that is Hermitian within 1e-12 relative to its largest entry.
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidDensity("matrix is not square".into()));
        }
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut dev: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in 0..=i {
                dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        if !(dev <= 1e-12 * scale) {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self(m))
    }

    /// As [`DensityMatrix::new`], additionally requiring eigenvalues ≥ −1e-10·tr ρ.
    pub fn physical(m: DMatrix<Complex64>) -> Result<Self> {
        let d = Self::new(m)?;
        let tr = d.trace();
        if !(tr > 0.0) {
            return Err(Error::InvalidDensity(format!("trace {tr} is not positive")));
        }
        let min = d.0.clone().symmetric_eigenvalues().min();
        if min < -1e-10 * tr {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {min:e}")));
        }
        Ok(d)
    }

    pub fn pure(v: &FockVector) -> Self {
        let c = v.coeffs();
        Self(c * c.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if !(tr > 0.0) {
            return Err(Error::InvalidDensity(format!("trace {tr} is not positive")));
        }
        Ok(Self(self.0.unscale(tr)))
    }

    /// Unit-trace G G† with G a square complex Ginibre matrix drawn from `seed`.
    pub fn random(dim: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(dim, dim, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        });
        let m = &g * g.adjoint();
        let tr = m.trace().re;
        Self(m.unscale(tr))
    }
}

/// Tr(E_jk ρ)/Tr ρ.
pub fn expectation_fock(rho: &DensityMatrix, pair: SitePair, basis: &FockBasis) -> Result<Complex64> {
    basis.check_pair(pair)?;
    check_len(basis.len(), rho.dim())?;
    let tr = rho.trace();
    if !(tr > 0.0) {
        return Err(Error::InvalidDensity(format!("trace {tr} is not positive")));
    }
    let m = rho.matrix();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..basis.len() {
        if let Some((t, amp)) = basis.hop(pair, i) {
            acc += m[(i, t)] * amp;
        }
    }
    Ok(acc / tr)
}

/// ⟨v|E_jk|v⟩/⟨v|v⟩.
pub fn expectation_pure(v: &FockVector, pair: SitePair, basis: &FockBasis) -> Result<Complex64> {
    let ev = apply_e(pair, v, basis)?;
    Ok(v.inner(&ev) / v.inner(v).re)
}

/// Single-particle density matrix σ_jk = ⟨E_kj⟩/N.
pub fn single_particle_density(rho: &DensityMatrix, basis: &FockBasis) -> Result<DMatrix<Complex64>> {
    let m = basis.sites();
    let n = basis.particles() as f64;
    let mut s = DMatrix::zeros(m, m);
    for pair in SitePair::all(m) {
        s[(pair.j, pair.k)] = expectation_fock(rho, pair.transposed(), basis)? / n;
    }
    Ok(s)
}

/// Tr σ² of a single-particle density matrix; 1 for a fully condensed state.
pub fn purity(sigma: &DMatrix<Complex64>) -> f64 {
    (sigma * sigma).trace().re
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn small_bases() {
        let b = FockBasis::new(2, 3).unwrap();
        assert_eq!(b.states(), &[vec![3, 0], vec![2, 1], vec![1, 2], vec![0, 3]]);
        assert_eq!(FockBasis::new(1, 5).unwrap().states(), &[vec![5]]);
        let b = FockBasis::new(3, 4).unwrap();
        assert_eq!(b.len(), 15);
        let mut brute = vec![];
        for a in (0..=4u32).rev() {
            for bb in (0..=4 - a).rev() {
                brute.push(vec![a, bb, 4 - a - bb]);
            }
        }
        assert_eq!(b.states(), &brute[..]);
    }

    #[test]
    fn basis_invariants() {
        for (m, n) in [(1, 0), (2, 0), (3, 5), (4, 6), (5, 3)] {
            let b = FockBasis::new(m, n).unwrap();
            assert_eq!(b.len() as u128, binomial((n + m - 1) as u64, (m - 1) as u64).unwrap());
            let total: u32 = b.states().iter().flatten().sum();
            assert_eq!(total as usize, n * b.len());
            for (i, s) in b.states().iter().enumerate() {
                assert_eq!(b.index_of(s), Some(i));
            }
        }
    }

    #[test]
    fn overflow_guard() {
        assert!(matches!(
            FockBasis::new(10, 40),
            Err(Error::SectorTooLarge { .. })
        ));
        assert!(FockBasis::with_limit(3, 4, 14).is_err());
        assert!(FockBasis::with_limit(3, 4, 15).is_ok());
        assert!(FockBasis::new(0, 1).is_err());
    }

    #[test]
    fn ladder_examples() {
        let b = FockBasis::new(2, 3).unwrap();
        let v = FockVector::basis_state(&b, &[1, 2]).unwrap();
        let w = apply_e(SitePair::new(0, 1), &v, &b).unwrap();
        let want = FockVector::basis_state(&b, &[2, 1]).unwrap();
        assert_abs_diff_eq!((w.coeffs() - want.coeffs().scale(2.0)).norm(), 0.0, epsilon = 1e-14);
        let v = FockVector::basis_state(&b, &[3, 0]).unwrap();
        let w = apply_e(SitePair::new(0, 0), &v, &b).unwrap();
        assert_abs_diff_eq!((w.coeffs() - v.coeffs().scale(3.0)).norm(), 0.0, epsilon = 1e-14);
        assert!(apply_e(SitePair::new(0, 2), &v, &b).is_err());
    }

    #[test]
    fn commutation_relations() {
        let b = FockBasis::new(3, 4).unwrap();
        let e = |j, k| e_matrix(SitePair::new(j, k), &b).unwrap();
        for (j, k, m, n) in [(0, 1, 1, 0), (0, 1, 1, 2), (2, 0, 0, 2), (1, 2, 0, 1)] {
            let lhs = &e(j, k) * &e(m, n) - &e(m, n) * &e(j, k);
            let mut rhs = DMatrix::zeros(b.len(), b.len());
            if k == m {
                rhs += e(j, n);
            }
            if n == j {
                rhs -= e(m, k);
            }
            assert_abs_diff_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn hamiltonian_examples() {
        let p = HamiltonianParams::new(vec![0.0, 0.0], 1.0, 0.0).unwrap();
        let h = build_hamiltonian(&p, &FockBasis::new(2, 1).unwrap()).unwrap().to_dense();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]));
        let p = HamiltonianParams::new(vec![0.0, 0.0], 0.0, 1.0).unwrap();
        let h = build_hamiltonian(&p, &FockBasis::new(2, 2).unwrap()).unwrap().to_dense();
        assert_eq!(h, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 1.0])));
    }

    #[test]
    fn hamiltonian_is_symmetric_and_conserves_number() {
        let p = HamiltonianParams::new(vec![0.1, -0.4, 0.3, 0.2], 0.8, 1.3).unwrap().with_periodic(true);
        let b = FockBasis::new(4, 4).unwrap();
        let h = build_hamiltonian(&p, &b).unwrap();
        assert!(h.symmetry_defect() < 1e-14);
        let hd = h.to_dense();
        let nd = number_operator(&b).to_dense();
        assert!((&hd * &nd - &nd * &hd).norm() < 1e-12);
        assert!(build_hamiltonian(&p, &FockBasis::new(3, 2).unwrap()).is_err());
    }

    #[test]
    fn periodic_adds_wrap_bond() {
        let open = HamiltonianParams::new(vec![0.0; 3], 1.0, 0.0).unwrap();
        let ring = open.clone().with_periodic(true);
        let b = FockBasis::new(3, 1).unwrap();
        let ho = build_hamiltonian(&open, &b).unwrap().to_dense();
        let hr = build_hamiltonian(&ring, &b).unwrap().to_dense();
        assert_eq!(ho[(0, 2)], 0.0);
        assert_eq!(hr[(0, 2)], -1.0);
        // two sites: wrap bond would duplicate the only bond
        let two = HamiltonianParams::new(vec![0.0; 2], 1.0, 0.0).unwrap().with_periodic(true);
        assert_eq!(two.bonds(), vec![(0, 1)]);
    }

    #[test]
    fn expectations() {
        let b = FockBasis::new(2, 5).unwrap();
        let v = FockVector::basis_state(&b, &[5, 0]).unwrap();
        let rho = DensityMatrix::pure(&v);
        assert_abs_diff_eq!(expectation_fock(&rho, SitePair::new(0, 0), &b).unwrap().re, 5.0);
        assert_eq!(expectation_fock(&rho, SitePair::new(0, 1), &b).unwrap(), c(0.0));
        let sigma = single_particle_density(&rho, &b).unwrap();
        assert_abs_diff_eq!(purity(&sigma), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn density_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.5), c(0.0), c(1.0)]);
        assert!(matches!(DensityMatrix::new(bad), Err(Error::NotHermitian(_))));
        let neg = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-0.5)]);
        assert!(DensityMatrix::new(neg.clone()).is_ok());
        assert!(DensityMatrix::physical(neg).is_err());
    }
}
