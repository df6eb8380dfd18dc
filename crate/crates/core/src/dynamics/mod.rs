//! Real-time dynamics: generators, mean-field flow, ensembles and grid PDEs.

pub mod ensemble;
pub mod generator;
pub mod gpe;
mod ode;
pub mod pde;
pub mod residual;

pub use ensemble::{ensemble_propagate, ensemble_propagate_with, Chart, TrajectoryEnsemble};
pub use generator::{apply_generator_p, apply_generator_q, GeneratorKind, GeneratorSpec, LiouvilleOperator, Order};
pub use gpe::{
    gpe_rhs, hamiltonian_amplitudes, hamiltonian_function, hamiltonian_gradient, integrate_gpe, integrate_hamilton_pq,
    GpeFlow, GpeOptions, GpeTrajectory,
};
pub use ode::dopri5;
pub use pde::{evolve_pde, BandMode, PdeOptions, PdeSolver, SemiDiscrete};
pub use residual::{husimi_generator_residual, ResidualReport};
