//! Real-time evolution generators for Husimi and Glauber-Sudarshan
//! distributions, and the classical Liouville operator.

use serde::{Deserialize, Serialize};

use super::gpe::hamiltonian_gradient;
use crate::coherent::PhasePoint;
use crate::error::{Error, Result};
use crate::fock::HamiltonianParams;
use crate::grid::{GridOperator, PhaseGrid2};
use crate::operator::{p_index, q_index, LocalOperator, PhaseSpaceOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeneratorKind {
    #[serde(rename = "q")]
    Husimi,
    #[serde(rename = "p")]
    GlauberP,
    #[serde(rename = "liouville")]
    Liouville,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    #[default]
    Full,
    FirstOrder,
}

/// Generator of ∂f/∂t for one kind of distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub params: HamiltonianParams,
    pub particles: usize,
    pub order: Order,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, params: HamiltonianParams, particles: usize, order: Order) -> Result<Self> {
        params.validate()?;
        if params.sites() < 2 {
            return Err(Error::InvalidArgument("phase-space generators need at least two sites".into()));
        }
        Ok(Self {
            kind,
            params,
            particles,
            order,
        })
    }

    pub fn husimi(params: HamiltonianParams, particles: usize) -> Result<Self> {
        Self::new(GeneratorKind::Husimi, params, particles, Order::Full)
    }

    pub fn glauber(params: HamiltonianParams, particles: usize) -> Result<Self> {
        Self::new(GeneratorKind::GlauberP, params, particles, Order::Full)
    }

    pub fn liouville(params: HamiltonianParams, particles: usize) -> Result<Self> {
        Self::new(GeneratorKind::Liouville, params, particles, Order::FirstOrder)
    }

    pub fn with_order(mut self, order: Order) -> Self {
        self.order = order;
        self
    }

    /// The effective particle number multiplying U in the first-order term.
    pub fn interaction_particles(&self) -> f64 {
        match self.kind {
            GeneratorKind::Husimi | GeneratorKind::Liouville => self.particles as f64,
            GeneratorKind::GlauberP => (self.particles + self.sites()) as f64,
        }
    }

    pub fn has_second_order(&self) -> bool {
        self.kind != GeneratorKind::Liouville && self.order == Order::Full
    }

    /// Sign in front of p_k ∂p_k ∂q_k.
    fn diagonal_sign(&self) -> f64 {
        match self.kind {
            GeneratorKind::GlauberP => 1.0,
            _ => -1.0,
        }
    }
}

/// Adds Δ-weighted Poisson-bracket terms of the bond energy −2Δ√(p_a p_b) cos(q_b − q_a).
fn add_bond_bracket(pt: &PhasePoint, a: usize, b: usize, hopping: f64, l: &mut LocalOperator) {
    let m = pt.sites();
    let (p, q) = (pt.p(), pt.q());
    let root = (p[a] * p[b]).sqrt();
    let phase = q[b] - q[a];
    let mut dp = vec![0.0; m];
    dp[a] = -hopping * (p[b] / p[a]).sqrt() * phase.cos();
    dp[b] = -hopping * (p[a] / p[b]).sqrt() * phase.cos();
    let mut dq = vec![0.0; m];
    dq[b] = 2.0 * hopping * root * phase.sin();
    dq[a] = -2.0 * hopping * root * phase.sin();
    for k in 1..m {
        l.first[p_index(k)] += dq[k];
        l.first[q_index(m, k)] -= dp[k] - dp[0];
    }
}

impl PhaseSpaceOperator for GeneratorSpec {
    fn sites(&self) -> usize {
        self.params.sites()
    }

    fn local(&self, pt: &PhasePoint) -> LocalOperator {
        let m = self.sites();
        let (p, q) = (pt.p(), pt.q());
        let delta = self.params.hopping;
        let u = self.params.interaction;
        let eps = &self.params.onsite;
        let mut l = LocalOperator::zeros(m);
        let qi = |k: usize| q_index(m, k);
        // ∂q₁ ≡ −Σ_{k≥2} ∂q_k
        let add_q = |l: &mut LocalOperator, k: usize, v: f64| {
            if k == 0 {
                (1..m).for_each(|kk| l.first[q_index(m, kk)] -= v);
            } else {
                l.first[q_index(m, k)] += v;
            }
        };

        // hopping, open chain
        l.first[p_index(1)] += delta * 2.0 * (p[1] * p[0]).sqrt() * q[1].sin();
        for k in 1..m - 1 {
            let v = delta * 2.0 * (p[k + 1] * p[k]).sqrt() * (q[k] - q[k + 1]).sin();
            l.first[p_index(k)] += v;
            l.first[p_index(k + 1)] -= v;
        }
        for k in 0..m - 1 {
            let c = delta * (q[k + 1] - q[k]).cos();
            add_q(&mut l, k + 1, c * (p[k] / p[k + 1]).sqrt());
            add_q(&mut l, k, c * (p[k + 1] / p[k]).sqrt());
        }
        if self.params.periodic && m >= 3 {
            add_bond_bracket(pt, m - 1, 0, delta, &mut l);
        }

        // interaction
        let n = self.interaction_particles();
        for k in 1..m {
            l.first[qi(k)] += u * n * (p[0] - p[k]);
        }
        if self.has_second_order() {
            let sigma = self.diagonal_sign();
            for k in 1..m {
                *l.second_mut(p_index(k), qi(k)) += u * sigma * p[k];
                for kk in 1..m {
                    *l.second_mut(p_index(kk), qi(k)) -= u * sigma * (p[k] - p[0]) * p[kk];
                }
            }
        }

        // site energies
        for k in 1..m {
            l.first[qi(k)] += eps[0] - eps[k];
        }
        l
    }
}

/// {𝓗, ·}-type operator assembled from the gradient of the Hamiltonian function.
#[derive(Clone, Debug, PartialEq)]
pub struct LiouvilleOperator {
    pub params: HamiltonianParams,
    pub particles: f64,
}

impl LiouvilleOperator {
    pub fn new(params: HamiltonianParams, particles: f64) -> Self {
        Self { params, particles }
    }
}

impl PhaseSpaceOperator for LiouvilleOperator {
    fn sites(&self) -> usize {
        self.params.sites()
    }

    /// ∂ρ/∂t = Σ_k (∂𝓗/∂q_k ∂ρ/∂p_k − ∂𝓗/∂p_k ∂ρ/∂q_k).
    fn local(&self, pt: &PhasePoint) -> LocalOperator {
        let m = self.sites();
        let (dp, dq) = hamiltonian_gradient(pt, &self.params, self.particles);
        let mut l = LocalOperator::zeros(m);
        for k in 1..m {
            l.first[p_index(k)] = dq[k - 1];
            l.first[q_index(m, k)] = -dp[k - 1];
        }
        l
    }
}

fn apply_checked(grid: &PhaseGrid2, spec: &GeneratorSpec, kind: GeneratorKind) -> Result<PhaseGrid2> {
    if spec.kind != kind {
        return Err(Error::InvalidArgument(format!("expected a {kind:?} generator, got {:?}", spec.kind)));
    }
    GridOperator::new(spec, grid.geometry())?.apply(grid)
}

/// ∂Q/∂t on a two-site grid.
pub fn apply_generator_q(grid: &PhaseGrid2, spec: &GeneratorSpec) -> Result<PhaseGrid2> {
    apply_checked(grid, spec, GeneratorKind::Husimi)
}

/// ∂P/∂t on a two-site grid.
pub fn apply_generator_p(grid: &PhaseGrid2, spec: &GeneratorSpec) -> Result<PhaseGrid2> {
    apply_checked(grid, spec, GeneratorKind::GlauberP)
}
