//! Number-conserving phase-space dynamics of the M-site Bose-Hubbard model.
//!
//! SU(M) coherent states, Husimi and Glauber-P evolution generators and their
//! classical (Liouville) truncation, expectation identities and Bloch
//! generators for the canonical ensemble. Everything is checked against an
//! exact Fock-space oracle in [`fock`].

// `!(x > 0.0)` deliberately rejects NaN alongside non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod coherent;
pub mod dynamics;
pub mod error;
pub mod expectation;
pub mod fock;
pub mod grid;
pub mod io;
pub mod operator;
pub mod thermo;

pub use coherent::{
    coherent_fock, husimi, overlap, pq_to_x, sample_husimi_coherent, sample_measure, x_to_pq, y_to_x, AmplitudeParams,
    CosetParams, MeasureSample, PhasePoint,
};
pub use error::{Error, Result};
pub use expectation::{
    expect_all_from_q, expect_fock, expect_from_ensemble, expect_from_husimi_ensemble, expect_from_p_delta,
    expect_from_q, Estimator, ObservableReport,
};
pub use fock::{
    build_hamiltonian, expectation_fock, gibbs, propagate, DensityMatrix, FockBasis, FockVector, HamiltonianParams,
    SitePair, SparseMatrix, Spectrum,
};
pub use grid::{GridGeometry, PhaseGrid2};
pub use thermo::{
    apply_bloch_p, apply_bloch_q, bloch_residual, classical_gibbs, classical_quantum_gap, evolve_bloch, BlochKind,
    BlochSpec,
};
