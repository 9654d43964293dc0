//! The `conhd` command line.
//!
//! ```text
//! conhd <diffuse|gen|train|eval|approx|bench|check>
//!       [--config <path>] [--seed N] [--out DIR] [--override key=value ...]
//! ```
//!
//! Exit codes: 0 success, 2 config error, 3 runtime error, 4 verification
//! failure. Every run writes `resolved_config.json` into the output
//! directory before any heavy work; failures print a machine-readable JSON
//! line to stderr.

pub mod commands;
pub mod configs;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Verification(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
            CliError::Verification(_) => "verification",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) | CliError::Verification(m) => m,
        }
    }
}

macro_rules! runtime_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}
runtime_from!(
    crate::hypergraph::HypergraphError,
    crate::diffusion::DiffusionError,
    crate::neural::ModelError,
    crate::encpipe::PipelineError,
    crate::checkpoint::CheckpointError,
    std::io::Error
);

#[derive(Debug, Parser)]
#[command(name = "conhd", about = "Co-representation hypergraph diffusion toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Dotted-path config overrides, e.g. `--override train.lr=0.0001`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run classical co-representation diffusion and export the trajectory.
    Diffuse(CommonArgs),
    /// Generate a synthetic dataset directory.
    Gen(CommonArgs),
    /// Train a model on an ENC dataset.
    Train(CommonArgs),
    /// Evaluate a checkpoint on one split.
    Eval(CommonArgs),
    /// Train a model to approximate a diffusion process and report MAE.
    Approx(CommonArgs),
    /// Time forward+backward over a doubling ladder of pair counts.
    Bench(CommonArgs),
    /// Run the verification suites.
    Check(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Diffuse(a)
            | Command::Gen(a)
            | Command::Train(a)
            | Command::Eval(a)
            | Command::Approx(a)
            | Command::Bench(a)
            | Command::Check(a) => a,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Diffuse(_) => "diffuse",
            Command::Gen(_) => "gen",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Approx(_) => "approx",
            Command::Bench(_) => "bench",
            Command::Check(_) => "check",
        }
    }

    /// JSON path of the command's seed field for `--seed` overrides.
    fn seed_path(&self) -> &'static str {
        match self {
            Command::Train(_) | Command::Approx(_) => "train.seed",
            _ => "seed",
        }
    }
}

fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<(), CliError> {
    let parsed: Value =
        serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        cur = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("override path {key:?} crosses a non-object")))?
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    cur.as_object_mut()
        .ok_or_else(|| CliError::Config(format!("override path {key:?} crosses a non-object")))?
        .insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

/// Load the config file (or `{}`), apply `--override` and `--seed`, and
/// deserialize strictly.
fn resolve_config<T: DeserializeOwned + Serialize>(cmd: &Command) -> Result<T, CliError> {
    let args = cmd.common();
    let mut value: Value = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => Value::Object(Default::default()),
    };
    for item in &args.overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {item:?} is not KEY=VALUE")))?;
        apply_override(&mut value, key, raw)?;
    }
    if let Some(seed) = args.seed {
        apply_override(&mut value, cmd.seed_path(), &seed.to_string())?;
    }
    serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
}

/// Create the output directory and write `resolved_config.json`.
fn prepare_out_dir<T: Serialize>(
    cmd_name: &str,
    out: &Path,
    config: &T,
) -> Result<(), CliError> {
    fs::create_dir_all(out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let resolved = serde_json::json!({
        "command": cmd_name,
        "config": serde_json::to_value(config).map_err(|e| CliError::Runtime(e.to_string()))?,
    });
    let text = serde_json::to_string_pretty(&resolved)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(out.join("resolved_config.json"), text)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

fn dispatch(cmd: &Command) -> Result<(), CliError> {
    let out = cmd.common().out.clone();
    match cmd {
        Command::Diffuse(_) => {
            let cfg: configs::DiffuseConfig = resolve_config(cmd)?;
            prepare_out_dir(cmd.name(), &out, &cfg)?;
            commands::cmd_diffuse(&cfg, &out)
        }
        Command::Gen(_) => {
            let cfg: configs::GenConfig = resolve_config(cmd)?;
            prepare_out_dir(cmd.name(), &out, &cfg)?;
            commands::cmd_gen(&cfg, &out)
        }
        Command::Train(_) => {
            let cfg: configs::TrainCmdConfig = resolve_config(cmd)?;
            prepare_out_dir(cmd.name(), &out, &cfg)?;
            commands::cmd_train(&cfg, &out)
        }
        Command::Eval(_) => {
            let cfg: configs::EvalConfig = resolve_config(cmd)?;
            prepare_out_dir(cmd.name(), &out, &cfg)?;
            commands::cmd_eval(&cfg, &out)
        }
        Command::Approx(_) => {
            let cfg: configs::ApproxConfig = resolve_config(cmd)?;
            prepare_out_dir(cmd.name(), &out, &cfg)?;
            commands::cmd_approx(&cfg, &out)
        }
        Command::Bench(_) => {
            let cfg: configs::BenchConfig = resolve_config(cmd)?;
            prepare_out_dir(cmd.name(), &out, &cfg)?;
            commands::cmd_bench(&cfg, &out)
        }
        Command::Check(_) => {
            let cfg: configs::CheckConfig = resolve_config(cmd)?;
            prepare_out_dir(cmd.name(), &out, &cfg)?;
            commands::cmd_check(&cfg, &out)
        }
    }
}

/// Entry point used by the `conhd` binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(err) => {
            let payload = serde_json::json!({
                "error": err.message(),
                "kind": err.kind(),
            });
            eprintln!("{payload}");
            err.exit_code()
        }
    }
}
