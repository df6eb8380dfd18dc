use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bh_phase_cli::{
    default_verification_suite, override_field, parse_config, run, CliError, Manifest, RunConfig, RunOptions, EXIT_OK,
};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

const DEFAULT_OUT: &str = "bh-phase-out";
const DEFAULT_VERIFY_SEED: u64 = 20_240_601;
const SWEEP_PARAMS: [&str; 6] = [
    "model.interaction",
    "model.hopping",
    "model.particles",
    "numerics.t_final",
    "numerics.beta_final",
    "numerics.seed",
];

#[derive(Parser)]
#[command(name = "bh-phase", version, about = "Phase-space dynamics and thermodynamics of the Bose-Hubbard model")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "BH_PHASE_THREADS", default_value_t = 0)]
    threads: usize,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed; overrides `numerics.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the task described by a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a verification config, or the built-in suite when none is given.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a config once per value of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(SWEEP_PARAMS))]
        param: String,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    // the override is applied before validation so it can supply a missing seed
    let text = match (seed, serde_json::from_str::<Value>(&text)) {
        (Some(s), Ok(Value::Object(mut doc))) => {
            let numerics = doc.entry("numerics").or_insert_with(|| Value::Object(Default::default()));
            if let Value::Object(n) = numerics {
                n.insert("seed".into(), s.into());
            }
            Value::Object(doc).to_string()
        }
        _ => text,
    };
    Ok(parse_config(&text)?)
}

fn out_dir(global: &Global, config: Option<&RunConfig>) -> PathBuf {
    global
        .out
        .clone()
        .or_else(|| config.and_then(|c| c.output.directory.as_ref().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Writes a manifest for a run that failed before any task started.
fn early_failure(global: &Global, command: &str, threads: usize, err: &CliError) -> i32 {
    let mut manifest = Manifest::new(command, threads);
    manifest.fail(err);
    let _ = manifest.write(&out_dir(global, None));
    err.exit_code()
}

fn single(global: &Global, command: &str, threads: usize, config: Result<RunConfig, CliError>) -> i32 {
    let config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", e.report());
            return early_failure(global, command, threads, &e);
        }
    };
    let opts = RunOptions {
        out_dir: out_dir(global, Some(&config)),
        command: command.into(),
        threads,
    };
    finish(run(&config, &opts))
}

fn finish(manifest: Manifest) -> i32 {
    if let Some(err) = &manifest.error {
        eprintln!("{err}");
    }
    manifest.exit_code
}

/// Runs several configs into subdirectories and writes a summary manifest.
fn batch(global: &Global, command: &str, threads: usize, runs: Vec<(String, RunConfig)>, summary: &str) -> i32 {
    let start = Instant::now();
    let root = out_dir(global, runs.first().map(|(_, c)| c));
    let mut manifest = Manifest::new(command, threads);
    let mut worst = EXIT_OK;
    let mut results = BTreeMap::new();
    for (name, config) in runs {
        let opts = RunOptions {
            out_dir: root.join(&name),
            command: command.into(),
            threads,
        };
        let m = run(&config, &opts);
        if let Some(err) = &m.error {
            eprintln!("{name}: {err}");
        }
        worst = worst.max(m.exit_code);
        results.insert(
            name.clone(),
            serde_json::json!({ "status": m.status, "exit_code": m.exit_code, "metrics": m.metrics }),
        );
        manifest.outputs.push(format!("{name}/manifest.json"));
    }
    manifest.exit_code = worst;
    if worst != EXIT_OK {
        manifest.status = "failed".into();
    }
    manifest.metrics.insert("runs".into(), Value::Object(results.into_iter().collect()));
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    if let Err(e) = manifest.write(&root).and_then(|_| {
        let path = root.join(summary);
        fs::write(&path, text).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }) {
        eprintln!("{}", e.report());
        return e.exit_code();
    }
    worst
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    if g.threads > 0 {
        // only fails if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(g.threads).build_global();
    }
    let threads = rayon::current_num_threads();
    let code = match &cli.command {
        Command::Simulate { config } => single(g, "simulate", threads, load(config, g.seed)),
        Command::Verify { config: Some(path) } => {
            let config = load(path, g.seed).and_then(|c| {
                if c.task.is_verification() {
                    Ok(c)
                } else {
                    let field = bh_phase_cli::FieldError {
                        field: "task".into(),
                        message: "verify needs a verify-* task".into(),
                    };
                    Err(CliError::Config(vec![field].into()))
                }
            });
            single(g, "verify", threads, config)
        }
        Command::Verify { config: None } => {
            let suite = default_verification_suite(g.seed.unwrap_or(DEFAULT_VERIFY_SEED));
            batch(g, "verify", threads, suite, "verify.json")
        }
        Command::Sweep { config, param, values } => {
            let runs = load(config, g.seed).and_then(|base| {
                values
                    .iter()
                    .enumerate()
                    .map(|(i, raw)| {
                        let c = override_field(&base, param, parse_value(raw))?;
                        Ok((format!("{i:03}-{param}={raw}"), c))
                    })
                    .collect::<Result<Vec<_>, CliError>>()
            });
            match runs {
                Ok(runs) => batch(g, "sweep", threads, runs, "sweep.json"),
                Err(e) => {
                    eprintln!("{}", e.report());
                    early_failure(g, "sweep", threads, &e)
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
