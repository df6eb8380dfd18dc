//! Batch runner: configuration, task execution and run manifests.

// `!(x > 0.0)` deliberately rejects NaN alongside non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub mod config;
mod tasks;

pub use config::{parse_config, ConfigError, FieldError, Format, RunConfig, Task};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] bh_phase::Error),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o failure on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Verification(_) => EXIT_VERIFICATION,
            CliError::Numerical(_) | CliError::Io { .. } => EXIT_NUMERICAL,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Verification(_) => "verification",
            CliError::Io { .. } => "io",
        }
    }

    /// Machine-readable form written to manifests and stderr.
    pub fn report(&self) -> Value {
        let mut v = serde_json::json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Config(e) = self {
            v["fields"] = serde_json::to_value(&e.errors).expect("field errors serialize");
        }
        v
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// Settings that do not belong to the physics configuration.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub command: String,
    pub threads: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub versions: BTreeMap<String, String>,
    pub command: String,
    pub task: Option<Task>,
    pub config_hash: Option<String>,
    pub config: Option<Value>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub started_unix: u64,
    pub wall_time_s: f64,
    pub status: String,
    pub exit_code: i32,
    pub metrics: BTreeMap<String, Value>,
    pub outputs: Vec<String>,
    pub error: Option<Value>,
}

impl Manifest {
    pub fn new(command: &str, threads: usize) -> Self {
        let versions = [("bh-phase", bh_phase::VERSION), ("bh-phase-cli", env!("CARGO_PKG_VERSION"))]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self {
            tool: "bh-phase".into(),
            versions,
            command: command.into(),
            task: None,
            config_hash: None,
            config: None,
            seed: None,
            threads,
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_time_s: 0.0,
            status: "ok".into(),
            exit_code: EXIT_OK,
            metrics: BTreeMap::new(),
            outputs: Vec::new(),
            error: None,
        }
    }

    pub fn fail(&mut self, err: &CliError) {
        self.status = match err {
            CliError::Verification(_) => "verification_failed",
            CliError::Config(_) => "config_error",
            _ => "failed",
        }
        .into();
        self.exit_code = err.exit_code();
        self.error = Some(err.report());
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// SHA-256 of the canonical config form, hex encoded.
pub fn config_hash(config: &RunConfig) -> String {
    format!("{:x}", Sha256::digest(config.canonical().as_bytes()))
}

/// Files written by a task, filtered by the configured formats.
pub(crate) struct Artifacts {
    dir: PathBuf,
    csv: bool,
    json: bool,
    files: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path, config: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            csv: config.output.wants(Format::Csv),
            json: config.output.wants(Format::Json),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> bh_phase::Result<()>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        let path = self.dir.join(name);
        fs::write(&path, buf).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub(crate) fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> bh_phase::Result<()>) -> Result<(), CliError> {
        if self.csv {
            self.write(name, f)?;
        }
        Ok(())
    }

    pub(crate) fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        if self.json {
            self.write(name, |buf| {
                serde_json::to_writer_pretty(&mut *buf, value)
                    .map_err(|e| bh_phase::Error::InvalidArgument(e.to_string()))?;
                buf.push(b'\n');
                Ok(())
            })?;
        }
        Ok(())
    }
}

/// What a task produced besides files.
#[derive(Default)]
pub(crate) struct TaskOutput {
    pub metrics: BTreeMap<String, Value>,
    /// Set by verification tasks; `Some(false)` maps to exit code 4.
    pub verdict: Option<(bool, String)>,
}

impl TaskOutput {
    pub(crate) fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics.insert(key.to_string(), serde_json::to_value(value).expect("metric serializes"));
    }
}

/// Runs one configured task, writes its artifacts and manifest, and returns
/// the manifest. The manifest is written even when the task fails.
pub fn run(config: &RunConfig, opts: &RunOptions) -> Manifest {
    let start = Instant::now();
    let mut manifest = Manifest::new(&opts.command, opts.threads);
    manifest.task = Some(config.task);
    manifest.config_hash = Some(config_hash(config));
    manifest.config = Some(serde_json::from_str(&config.canonical()).expect("canonical config parses"));
    manifest.seed = config.numerics.seed;
    let outcome = Artifacts::new(&opts.out_dir, config).and_then(|mut art| {
        let result = tasks::run_task(config, &mut art);
        manifest.outputs = art.files;
        result
    });
    match outcome {
        Ok(out) => {
            manifest.metrics = out.metrics;
            if let Some((pass, detail)) = out.verdict {
                manifest.metrics.insert("verification_passed".into(), Value::Bool(pass));
                if !pass {
                    manifest.fail(&CliError::Verification(detail));
                }
            }
        }
        Err(e) => manifest.fail(&e),
    }
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    if let Err(e) = manifest.write(&opts.out_dir) {
        manifest.fail(&e);
    }
    manifest
}

/// Sets a dotted `path` in a config document to `value` and re-validates.
pub fn override_field(config: &RunConfig, path: &str, value: Value) -> Result<RunConfig, ConfigError> {
    let mut doc: Value = serde_json::from_str(&config.canonical()).expect("canonical config parses");
    let mut slot = &mut doc;
    for key in path.split('.') {
        slot = slot
            .get_mut(key)
            .ok_or_else(|| ConfigError::from(vec![FieldError { field: path.into(), message: "no such field".into() }]))?;
    }
    *slot = value;
    parse_config(&doc.to_string())
}

/// Built-in verification suite used by `verify` without a config file.
pub fn default_verification_suite(seed: u64) -> Vec<(String, RunConfig)> {
    let doc = |text: String| parse_config(&text).expect("built-in config is valid");
    let initial = r#""initial": {"p": [0.7, 0.3], "q": [0.0, 0.7]}"#;
    vec![
        (
            "residual".into(),
            doc(format!(
                r#"{{"model": {{"sites": 2, "particles": 10, "onsite": [0.0, 0.5], "hopping": 1.0, "interaction": 0.1}},
                "task": "verify-residual", "numerics": {{"grid": [128, 128], "t_final": 1.0, "beta_final": 0.5, "delta": 1e-4, {initial}}}}}"#
            )),
        ),
        (
            "identity".into(),
            doc(format!(
                r#"{{"model": {{"sites": 2, "particles": 4, "hopping": 1.0}}, "task": "verify-identity",
                "numerics": {{"samples": 100000, "seed": {seed}}}}}"#
            )),
        ),
        (
            "scaling".into(),
            doc(format!(
                r#"{{"model": {{"sites": 2, "particles": 8, "onsite": [0.0, 0.5], "hopping": 1.0, "interaction": 0.125}},
                "task": "verify-scaling", "numerics": {{"t_final": 2.0, "samples": 20000, "seed": {seed}, {initial}}}}}"#
            )),
        ),
    ]
}
