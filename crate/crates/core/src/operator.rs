//! Second-order differential operators on the coherent-state parameter space.
//!
//! Coefficients are expressed in the independent coordinates
//! z = (p₂…p_M, q₂…q_M); p₁ and q₁ ≡ 0 are dependent.

use crate::coherent::PhasePoint;
use crate::error::{Error, Result};

/// c₀ f + Σ_a A_a ∂_a f + Σ_ab B_ab ∂_a ∂_b f at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    pub c0: f64,
    pub first: Vec<f64>,
    /// Row-major dim × dim; only B_ab + B_ba matters for a ≠ b.
    pub second: Vec<f64>,
}

impl LocalOperator {
    pub fn zeros(sites: usize) -> Self {
        let d = 2 * (sites - 1);
        Self {
            c0: 0.0,
            first: vec![0.0; d],
            second: vec![0.0; d * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn second_mut(&mut self, a: usize, b: usize) -> &mut f64 {
        let d = self.dim();
        &mut self.second[a * d + b]
    }

    pub fn second_at(&self, a: usize, b: usize) -> f64 {
        self.second[a * self.dim() + b]
    }

    /// Symmetrized coefficient of ∂_a∂_b counted once per unordered pair.
    pub fn mixed(&self, a: usize, b: usize) -> f64 {
        if a == b {
            self.second_at(a, a)
        } else {
            self.second_at(a, b) + self.second_at(b, a)
        }
    }

    pub fn has_second_order(&self) -> bool {
        self.second.iter().any(|&b| b != 0.0)
    }

    pub fn max_abs_difference(&self, other: &LocalOperator) -> f64 {
        let d = self.dim();
        let mut m = (self.c0 - other.c0).abs();
        for a in 0..d {
            m = m.max((self.first[a] - other.first[a]).abs());
            for b in a..d {
                m = m.max((self.mixed(a, b) - other.mixed(a, b)).abs());
            }
        }
        m
    }
}

/// Anything that yields local operator coefficients at a phase-space point.
pub trait PhaseSpaceOperator: Sync {
    fn sites(&self) -> usize;
    fn local(&self, pt: &PhasePoint) -> LocalOperator;
}

/// Index of p_k (k ≥ 1, zero-based site) in the reduced coordinates.
pub fn p_index(k: usize) -> usize {
    k - 1
}

/// Index of q_k (k ≥ 1, zero-based site) in the reduced coordinates.
pub fn q_index(sites: usize, k: usize) -> usize {
    sites - 2 + k
}

/// Applies an operator to a function of the reduced coordinates at one point,
/// using fourth-order central differences with spacing `step`.
pub fn apply_pointwise<O, F>(op: &O, pt: &PhasePoint, f: F, step: f64) -> Result<f64>
where
    O: PhaseSpaceOperator + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    if pt.sites() != op.sites() || pt.sites() < 2 {
        return Err(Error::DimensionMismatch {
            expected: op.sites(),
            found: pt.sites(),
        });
    }
    let z0 = pt.reduced();
    let m1 = pt.sites() - 1;
    if z0[..m1].iter().any(|&z| z - 2.0 * step <= 0.0) || pt.p()[0] - 2.0 * m1 as f64 * step <= 0.0 {
        return Err(Error::InvalidArgument("point is too close to the chart boundary".into()));
    }
    let loc = op.local(pt);
    let d = z0.len();
    let eval = |shift: &[(usize, f64)]| {
        let mut z = z0.clone();
        for &(a, s) in shift {
            z[a] += s;
        }
        f(&z)
    };
    const W1: [(f64, f64); 4] = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];
    let f0 = f(&z0);
    let mut acc = loc.c0 * f0;
    for a in 0..d {
        if loc.first[a] != 0.0 {
            let da: f64 = W1.iter().map(|&(o, w)| w * eval(&[(a, o * step)])).sum::<f64>() / step;
            acc += loc.first[a] * da;
        }
        for b in a..d {
            let coeff = loc.mixed(a, b);
            if coeff == 0.0 {
                continue;
            }
            let dab = if a == b {
                let w2 = [(-2.0, -1.0), (-1.0, 16.0), (1.0, 16.0), (2.0, -1.0)];
                (w2.iter().map(|&(o, w)| w * eval(&[(a, o * step)])).sum::<f64>() - 30.0 * f0) / (12.0 * step * step)
            } else {
                let mut s = 0.0;
                for &(oa, wa) in &W1 {
                    for &(ob, wb) in &W1 {
                        s += wa * wb * eval(&[(a, oa * step), (b, ob * step)]);
                    }
                }
                s / (step * step)
            };
            acc += coeff * dab;
        }
    }
    Ok(acc)
}
