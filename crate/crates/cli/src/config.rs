//! Run configuration: a strict JSON document with documented defaults.

use std::fmt;

use bh_phase::dynamics::generator::{GeneratorKind, Order};
use bh_phase::thermo::BlochKind;
use bh_phase::{GridGeometry, HamiltonianParams, PhasePoint};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Exact,
    Pde,
    Ensemble,
    Thermo,
    VerifyResidual,
    VerifyScaling,
    VerifyIdentity,
}

impl Task {
    pub fn is_stochastic(self) -> bool {
        matches!(self, Task::Ensemble | Task::VerifyScaling | Task::VerifyIdentity)
    }

    pub fn is_verification(self) -> bool {
        matches!(self, Task::VerifyResidual | Task::VerifyScaling | Task::VerifyIdentity)
    }

    fn needs_grid(self) -> bool {
        matches!(self, Task::Pde | Task::Thermo | Task::VerifyResidual)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub sites: usize,
    pub particles: usize,
    /// Defaults to zeros.
    #[serde(default)]
    pub onsite: Vec<f64>,
    pub hopping: f64,
    #[serde(default)]
    pub interaction: f64,
    #[serde(default)]
    pub periodic: bool,
}

impl ModelConfig {
    pub fn params(&self) -> bh_phase::Result<HamiltonianParams> {
        Ok(HamiltonianParams::new(self.onsite.clone(), self.hopping, self.interaction)?.with_periodic(self.periodic))
    }
}

/// Initial coherent state in the (p, q) chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    /// [n_p, n_q] for two-site grids.
    pub grid: [usize; 2],
    /// Time step. For `pde` the largest stable step is used when absent; for
    /// trajectories it caps the integrator step (default 0.05).
    pub dt: Option<f64>,
    pub t_final: f64,
    pub beta_final: f64,
    /// Monte Carlo points for ensembles and identity checks.
    pub samples: usize,
    pub seed: Option<u64>,
    /// Half-width of the centred difference in the residual protocol.
    pub delta: f64,
    /// Number of equally spaced output times (or β values for `thermo`).
    pub snapshots: usize,
    /// RK4 stability constant for grid evolution in time and in β.
    pub stability_constant: f64,
    pub generator: GeneratorKind,
    pub order: Order,
    pub bloch: BlochKind,
    /// Defaults to all particles on the first site.
    pub initial: Option<InitialState>,
    /// Particle numbers for `verify-scaling`; U·N is held at the model value.
    pub particle_sweep: Vec<usize>,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            grid: [64, 64],
            dt: None,
            t_final: 1.0,
            beta_final: 0.5,
            samples: 10_000,
            seed: None,
            delta: 1e-4,
            snapshots: 10,
            stability_constant: 0.5,
            generator: GeneratorKind::Husimi,
            order: Order::Full,
            bloch: BlochKind::Husimi,
            initial: None,
            particle_sweep: vec![8, 16, 32, 64],
        }
    }
}

impl Numerics {
    pub fn geometry(&self) -> bh_phase::Result<GridGeometry> {
        GridGeometry::new(self.grid[0], self.grid[1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: Option<String>,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub task: Task,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, thiserror::Error)]
pub struct ConfigError {
    pub errors: Vec<FieldError>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.errors.iter().map(|e| format!("{}: {}", e.field, e.message)).collect();
        write!(f, "invalid configuration: {}", parts.join("; "))
    }
}

impl From<Vec<FieldError>> for ConfigError {
    fn from(errors: Vec<FieldError>) -> Self {
        Self { errors }
    }
}

const REQUIRED: [&str; 5] = ["model", "task", "model.sites", "model.particles", "model.hopping"];

fn lookup<'a>(root: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(root, |v, key| v.get(key))
}

/// Parses and validates a JSON configuration, filling documented defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| ConfigError::from(vec![FieldError::new("<document>", e.to_string())]))?;
    if !root.is_object() {
        return Err(vec![FieldError::new("<document>", "expected a JSON object")].into());
    }
    let missing: Vec<FieldError> = REQUIRED
        .iter()
        .filter(|path| {
            // report a missing section once, not once per child
            let parent_missing = path.rsplit_once('.').is_some_and(|(parent, _)| lookup(&root, parent).is_none());
            !parent_missing && lookup(&root, path).is_none()
        })
        .map(|path| FieldError::new(path, "missing required field"))
        .collect();
    if !missing.is_empty() {
        return Err(missing.into());
    }
    let mut config: RunConfig = serde_path_to_error::deserialize(&root).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::from(vec![FieldError::new(&path, e.into_inner().to_string())])
    })?;
    if config.model.onsite.is_empty() {
        config.model.onsite = vec![0.0; config.model.sites];
    }
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    /// Canonical JSON form; parsing it yields an equal config.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let m = &self.model;
        let n = &self.numerics;
        if m.sites == 0 {
            errs.push(FieldError::new("model.sites", "must be at least 1"));
        }
        if m.onsite.len() != m.sites {
            errs.push(FieldError::new("model.onsite", format!("expected {} entries, found {}", m.sites, m.onsite.len())));
        }
        if let Err(e) = m.params() {
            errs.push(FieldError::new("model", e.to_string()));
        }
        let grid_task = self.task.needs_grid();
        if self.task != Task::Exact && !grid_task && m.sites < 2 {
            errs.push(FieldError::new("model.sites", "phase-space tasks need at least 2 sites"));
        }
        if grid_task && m.sites != 2 {
            errs.push(FieldError::new("model.sites", format!("task {:?} runs on a two-site grid", self.task)));
        }
        if grid_task {
            if let Err(e) = n.geometry() {
                errs.push(FieldError::new("numerics.grid", e.to_string()));
            }
        }
        if let Some(dt) = n.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                errs.push(FieldError::new("numerics.dt", "must be positive"));
            }
        }
        if !n.t_final.is_finite() || (self.task != Task::Pde && n.t_final < 0.0) {
            errs.push(FieldError::new("numerics.t_final", "must be finite (and non-negative outside pde)"));
        }
        if !(n.beta_final >= 0.0 && n.beta_final.is_finite()) {
            errs.push(FieldError::new("numerics.beta_final", "must be non-negative"));
        }
        if n.samples == 0 {
            errs.push(FieldError::new("numerics.samples", "must be positive"));
        }
        if !(n.delta > 0.0) {
            errs.push(FieldError::new("numerics.delta", "must be positive"));
        }
        if !(n.stability_constant > 0.0 && n.stability_constant.is_finite()) {
            errs.push(FieldError::new("numerics.stability_constant", "must be positive"));
        }
        if n.snapshots == 0 {
            errs.push(FieldError::new("numerics.snapshots", "must be positive"));
        }
        if self.task == Task::Pde && n.generator == GeneratorKind::GlauberP {
            errs.push(FieldError::new(
                "numerics.generator",
                "pde starts from a coherent-state Husimi function; use \"q\" or \"liouville\"",
            ));
        }
        if self.task == Task::VerifyResidual && n.delta > n.beta_final {
            errs.push(FieldError::new("numerics.delta", "must not exceed beta_final"));
        }
        if self.task == Task::VerifyScaling && (n.particle_sweep.len() < 2 || n.particle_sweep.contains(&0)) {
            errs.push(FieldError::new("numerics.particle_sweep", "need at least two positive particle numbers"));
        }
        if self.task == Task::VerifyScaling && m.interaction == 0.0 {
            errs.push(FieldError::new("model.interaction", "verify-scaling holds U·N fixed and needs U ≠ 0"));
        }
        if let Some(init) = &n.initial {
            if let Err(e) = PhasePoint::new(init.p.clone(), init.q.clone()) {
                errs.push(FieldError::new("numerics.initial", e.to_string()));
            } else if init.p.len() != m.sites {
                errs.push(FieldError::new("numerics.initial", format!("expected {} sites", m.sites)));
            }
        }
        if self.task.is_stochastic() && n.seed.is_none() {
            errs.push(FieldError::new("numerics.seed", format!("required for task {:?}", self.task)));
        }
        if self.output.formats.is_empty() {
            errs.push(FieldError::new("output.formats", "at least one format is required"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs.into())
        }
    }

    /// Initial coherent state: the configured point or all particles on site 1.
    pub fn initial_point(&self) -> PhasePoint {
        match &self.numerics.initial {
            Some(init) => PhasePoint::new(init.p.clone(), init.q.clone()).expect("validated"),
            None => {
                let mut p = vec![0.0; self.model.sites];
                p[0] = 1.0;
                PhasePoint::new(p, vec![0.0; self.model.sites]).expect("reference point")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"model": {"sites": 2, "particles": 4, "hopping": 1.0}, "task": "exact"}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.model.onsite, vec![0.0, 0.0]);
        assert_eq!(c.model.interaction, 0.0);
        assert_eq!(c.numerics, Numerics::default());
        assert_eq!(c.output, OutputConfig::default());
        assert_eq!(c.initial_point().p(), &[1.0, 0.0]);
    }

    #[test]
    fn negative_particle_number_names_the_field() {
        let err = parse_config(r#"{"model": {"sites": 2, "particles": -4, "hopping": 1.0}, "task": "exact"}"#).unwrap_err();
        assert_eq!(err.errors.len(), 1);
        assert_eq!(err.errors[0].field, "model.particles");
    }

    #[test]
    fn missing_fields_are_all_listed() {
        let err = parse_config(r#"{"model": {"sites": 2}}"#).unwrap_err();
        let fields: Vec<&str> = err.errors.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["task", "model.particles", "model.hopping"]);
        let err = parse_config("{}").unwrap_err();
        let fields: Vec<&str> = err.errors.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["model", "task"]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(r#"{"model": {"sites": 2, "particles": 4, "hopping": 1.0, "hoping": 2}, "task": "exact"}"#)
            .unwrap_err();
        assert_eq!(err.errors[0].field, "model.hoping");
        assert!(err.errors[0].message.contains("hoping"));
        assert!(parse_config(r#"{"model": {"sites": 2, "particles": 4, "hopping": 1.0}, "task": "exact", "extra": 1}"#).is_err());
    }

    #[test]
    fn stochastic_tasks_need_a_seed() {
        let text = r#"{"model": {"sites": 2, "particles": 4, "hopping": 1.0}, "task": "ensemble"}"#;
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.errors[0].field, "numerics.seed");
    }

    #[test]
    fn validation_collects_every_problem() {
        let text = r#"{"model": {"sites": 3, "particles": 4, "hopping": 1.0, "onsite": [0.0]}, "task": "pde",
            "numerics": {"grid": [10, 7], "samples": 0}}"#;
        let err = parse_config(text).unwrap_err();
        let fields: Vec<&str> = err.errors.iter().map(|e| e.field.as_str()).collect();
        for f in ["model.onsite", "model.sites", "numerics.grid", "numerics.samples"] {
            assert!(fields.contains(&f), "{fields:?}");
        }
    }

    #[test]
    fn syntax_errors_are_reported() {
        assert_eq!(parse_config("{not json").unwrap_err().errors[0].field, "<document>");
    }
}
