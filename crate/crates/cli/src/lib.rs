//! Config-driven runner for the two-level experiments: zero-temperature
//! flow, Langevin ensemble against the Fokker-Planck average, and the
//! equilibrium temperature sweep.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod pipeline;
pub mod svg;

use std::path::{Path, PathBuf};

pub use config::{parse_config, validate, ExperimentConfig, Pipeline, Preset};
pub use pipeline::{Check, RunSummary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("{0}")]
    Run(#[from] cqsim_core::Error),
    #[error("cannot write {}: {message}", path.display())]
    Output { path: PathBuf, message: String },
}

impl CliError {
    /// 1 for numerical faults, 2 for configuration and output faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(_) => 1,
            CliError::Config(_) | CliError::Output { .. } => 2,
        }
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub svg: bool,
}

/// Resolves `text` with `opts` applied.
pub fn resolve(text: &str, opts: &RunOptions) -> Result<ExperimentConfig, CliError> {
    let mut cfg = parse_config(text).map_err(CliError::Config)?;
    if let Some(seed) = opts.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &opts.out {
        cfg.out_dir = out.clone();
    }
    cfg.svg |= opts.svg;
    let diags = cfg.validate();
    if !diags.is_empty() {
        return Err(CliError::Config(diags));
    }
    Ok(cfg)
}

/// Reads, resolves and runs a config file.
pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    let cfg = resolve(&text, opts)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(vec![format!("cannot start {} worker threads: {e}", opts.threads.unwrap_or(0))]))?;
    pool.install(|| pipeline::execute(&cfg, &cfg.out_dir))
}
