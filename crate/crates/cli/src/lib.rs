//! Config-driven runner for the `svi-core` solvers.
//!
//! Exit codes: 0 success, 1 bad configuration or I/O, 2 numerical failure,
//! 3 failed checks in `verify` mode.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod csv;
mod modes;
mod verify;

use std::path::PathBuf;

use clap::Parser;
use sha2::{Digest, Sha256};

pub use config::{parse_config, parse_str, Mode, RunConfig};
use svi_core::SviError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Solver(#[from] SviError),
    #[error("{0} check(s) failed")]
    Verify(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Solver(e) if e.is_numerical() => 2,
            CliError::Solver(_) => 1,
            CliError::Verify(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "svi", version, about = "Penalized solvers for stochastic parabolic variational inequalities")]
pub struct Args {
    /// Run configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides [noise] seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides [run] n_paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Overrides [output] dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

/// Hash of the config bytes and the command-line overrides, so that every
/// distinct effective configuration gets a distinct tag.
fn config_hash(text: &[u8], args: &Args) -> String {
    let mut h = Sha256::new();
    h.update(text);
    if let Some(s) = args.seed {
        h.update(format!("\n--seed {s}"));
    }
    if let Some(p) = args.paths {
        h.update(format!("\n--paths {p}"));
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses, dispatches and returns the process exit code. Diagnostics go
/// to stderr, progress to stdout unless `--quiet`.
pub fn execute(args: &Args) -> i32 {
    let text = match std::fs::read(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("svi: cannot read {}: {e}", args.config.display());
            return 1;
        }
    };
    let parsed = std::str::from_utf8(&text)
        .map_err(|_| CliError::Config(vec!["config file is not valid UTF-8".into()]))
        .and_then(parse_str);
    let mut cfg = match parsed {
        Ok(c) => c,
        Err(e) => {
            eprintln!("svi: {e}");
            return e.exit_code();
        }
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = args.paths {
        if p == 0 || (cfg.mode == Mode::Ensemble && p < 2) {
            eprintln!("svi: --paths {p} is too small for mode {:?}", cfg.mode);
            return 1;
        }
        cfg.n_paths = p;
    }
    if let Some(o) = &args.out {
        cfg.out_dir = o.clone();
    }
    if let Err(e) = std::fs::create_dir_all(&cfg.out_dir) {
        eprintln!("svi: cannot create {}: {e}", cfg.out_dir.display());
        return 1;
    }
    let hash = config_hash(&text, args);
    match modes::dispatch(&cfg, &hash, args.quiet) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("svi: {e}");
            e.exit_code()
        }
    }
}
