//! Method-of-lines integration of phase-space evolution equations on a
//! two-site grid.
//!
//! The full second-order equations are ill-posed on general smooth data
//! (their mixed and anti-diffusive terms amplify high modes), so their
//! right-hand sides are projected onto the N-particle band, which the exact
//! dynamics never leaves. First-order (Liouville) equations are hyperbolic
//! and integrated without projection.

use serde::{Deserialize, Serialize};

use super::generator::GeneratorSpec;
use crate::error::{Error, Result};
use crate::grid::{BandProjector, GridGeometry, GridOperator, PhaseGrid2};
use crate::operator::PhaseSpaceOperator;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandMode {
    /// Project exactly when the operator has second-order terms.
    #[default]
    Auto,
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeOptions {
    /// RK4 steps must satisfy dt·ρ ≤ c·2√2 with ρ the estimated spectral radius.
    pub stability_constant: f64,
    pub band: BandMode,
    /// Abort when max|f| exceeds this multiple of its initial value.
    pub growth_limit: f64,
}

impl Default for PdeOptions {
    fn default() -> Self {
        Self {
            stability_constant: 0.5,
            band: BandMode::Auto,
            growth_limit: 10.0,
        }
    }
}

/// Imaginary-axis extent of the RK4 stability region.
pub const RK4_IMAGINARY_LIMIT: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Grid operator plus optional band projection: the semi-discrete right-hand side.
#[derive(Clone, Debug)]
pub struct SemiDiscrete {
    op: GridOperator,
    band: Option<BandProjector>,
}

impl SemiDiscrete {
    pub fn new<O: PhaseSpaceOperator + ?Sized>(
        op: &O,
        geometry: GridGeometry,
        particles: usize,
        project: bool,
    ) -> Result<Self> {
        let op = GridOperator::new(op, geometry)?;
        let band = if project {
            Some(BandProjector::new(geometry, particles)?)
        } else {
            None
        };
        Ok(Self { op, band })
    }

    pub fn geometry(&self) -> GridGeometry {
        self.op.geometry()
    }

    pub fn is_projected(&self) -> bool {
        self.band.is_some()
    }

    pub fn rhs(&self, values: &[f64]) -> Vec<f64> {
        let lv = self.op.apply_values(values);
        match &self.band {
            Some(b) => b.project(self.op.differentiator(), &lv),
            None => lv,
        }
    }

    /// Projects a field onto the band (identity when unprojected).
    pub fn project(&self, values: &[f64]) -> Vec<f64> {
        match &self.band {
            Some(b) => b.project(self.op.differentiator(), values),
            None => values.to_vec(),
        }
    }

    /// Power-iteration estimate of the spectral radius of the right-hand side.
    pub fn spectral_radius(&self) -> f64 {
        let g = self.geometry();
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut v: Vec<f64> = (0..g.len())
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        v = self.project(&v);
        let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut est: f64 = 0.0;
        for it in 0..40 {
            let n = norm(&v);
            if n == 0.0 {
                break;
            }
            v.iter_mut().for_each(|a| *a /= n);
            let w = self.rhs(&v);
            let r = norm(&w);
            if it >= 20 {
                est = est.max(r);
            }
            v = w;
        }
        1.1 * est
    }

    /// Largest RK4 step admitted by the stability constant.
    pub fn max_stable_step(&self, stability_constant: f64) -> f64 {
        let rho = self.spectral_radius();
        if rho == 0.0 {
            f64::INFINITY
        } else {
            stability_constant * RK4_IMAGINARY_LIMIT / rho
        }
    }

    pub fn rk4_step(&self, y: &[f64], h: f64) -> Vec<f64> {
        let axpy = |a: &[f64], b: &[f64], s: f64| a.iter().zip(b).map(|(x, y)| x + s * y).collect::<Vec<_>>();
        let k1 = self.rhs(y);
        let k2 = self.rhs(&axpy(y, &k1, 0.5 * h));
        let k3 = self.rhs(&axpy(y, &k2, 0.5 * h));
        let k4 = self.rhs(&axpy(y, &k3, h));
        (0..y.len())
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }
}

/// Grid-based integrator for one generator.
#[derive(Clone, Debug)]
pub struct PdeSolver {
    semi: SemiDiscrete,
    opts: PdeOptions,
}

impl PdeSolver {
    pub fn new(spec: &GeneratorSpec, geometry: GridGeometry, opts: PdeOptions) -> Result<Self> {
        let project = match opts.band {
            BandMode::Auto => spec.has_second_order(),
            BandMode::On => true,
            BandMode::Off => false,
        };
        Ok(Self {
            semi: SemiDiscrete::new(spec, geometry, spec.particles, project)?,
            opts,
        })
    }

    pub fn semi_discrete(&self) -> &SemiDiscrete {
        &self.semi
    }

    pub fn max_stable_step(&self) -> f64 {
        self.semi.max_stable_step(self.opts.stability_constant)
    }

    /// Integrates to `t_final` (either sign) with steps no longer than `dt`.
    pub fn evolve(&self, grid0: &PhaseGrid2, t_final: f64, dt: f64) -> Result<PhaseGrid2> {
        if grid0.geometry() != self.semi.geometry() {
            return Err(Error::InvalidArgument("grid geometry does not match the solver".into()));
        }
        if !(dt > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidArgument("dt must be positive and t_final finite".into()));
        }
        if t_final == 0.0 {
            return Ok(grid0.clone());
        }
        let bound = self.max_stable_step();
        if dt > bound {
            return Err(Error::StepTooLarge { dt, bound });
        }
        let steps = (t_final.abs() / dt).ceil() as usize;
        let h = t_final / steps as f64;
        let limit = self.opts.growth_limit * grid0.max_abs();
        let mut y = grid0.values().to_vec();
        for s in 0..steps {
            y = self.semi.rk4_step(&y, h);
            let m = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !m.is_finite() || m > limit {
                return Err(Error::Unstable {
                    at: (s + 1) as f64 * h,
                    reason: format!("max |f| = {m:e} exceeds {limit:e}"),
                });
            }
        }
        PhaseGrid2::new(grid0.geometry(), y)
    }
}

/// Integrates ∂f/∂t = 𝓛f with default options.
pub fn evolve_pde(grid0: &PhaseGrid2, spec: &GeneratorSpec, t_final: f64, dt: f64) -> Result<PhaseGrid2> {
    PdeSolver::new(spec, grid0.geometry(), PdeOptions::default())?.evolve(grid0, t_final, dt)
}
