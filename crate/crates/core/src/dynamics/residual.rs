//! Oracle residuals: exact Husimi functions from Fock propagation are
//! differenced in time and compared with the generator applied on the grid.

use serde::{Deserialize, Serialize};

use super::generator::{GeneratorKind, GeneratorSpec};
use crate::error::{Error, Result};
use crate::fock::{build_hamiltonian, FockBasis, FockVector, Spectrum};
use crate::grid::{husimi_grid_pure, GridGeometry, GridOperator};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// ‖∂f − 𝓛f‖ / ‖∂f‖.
    pub relative: f64,
    pub residual_norm: f64,
    pub reference_norm: f64,
}

/// Residual of the Husimi generator on the pure state exp(−iHt)ψ₀, using a
/// centred difference of half-width `delta` for ∂Q/∂t.
pub fn husimi_generator_residual(
    spec: &GeneratorSpec,
    initial: &FockVector,
    t: f64,
    delta: f64,
    geometry: GridGeometry,
) -> Result<ResidualReport> {
    if spec.kind != GeneratorKind::Husimi {
        return Err(Error::InvalidArgument("the oracle residual needs a Husimi generator".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    let basis = FockBasis::new(spec.params.sites(), spec.particles)?;
    let h = build_hamiltonian(&spec.params, &basis)?;
    let spectrum = Spectrum::new(&h)?;
    let q_at = |s: f64| husimi_grid_pure(&spectrum.evolve(initial, s)?, &basis, geometry);
    let (qm, q0, qp) = (q_at(t - delta)?, q_at(t)?, q_at(t + delta)?);
    let dq = qp.zip_with(&qm, |a, b| (a - b) / (2.0 * delta))?;
    let lq = GridOperator::new(spec, geometry)?.apply(&q0)?;
    let residual_norm = lq.zip_with(&dq, |a, b| a - b)?.l2_norm();
    let reference_norm = dq.l2_norm();
    Ok(ResidualReport {
        relative: residual_norm / reference_norm,
        residual_norm,
        reference_norm,
    })
}
