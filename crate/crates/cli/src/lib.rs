//! Command-line experiments around Picard iterations for BSDEs.
//!
//! Each subcommand validates its configuration, runs, and writes a CSV
//! and/or JSON file into the output directory. See [`config`] for the keys.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{Experiment, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error(transparent)]
    Core(#[from] picard_core::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn config(field: &str, reason: impl Into<String>) -> Self {
        CliError::Config { field: field.to_string(), reason: reason.into() }
    }

    /// 1 for validation and I/O problems, 2 for budget infeasibility.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(picard_core::Error::Budget { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "picard-lab", version, about = "Picard-iteration experiments for backward SDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat key = value configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub paths: Option<u64>,
    #[arg(long, global = true)]
    pub steps: Option<u32>,
    #[arg(long = "k-min", global = true)]
    pub k_min: Option<u32>,
    #[arg(long = "k-max", global = true)]
    pub k_max: Option<u32>,
    /// ‖b‖² of an isotropic drift; replaces any explicit `b` from the file.
    #[arg(long = "b-norm-sq", global = true)]
    pub b_norm_sq: Option<f64>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<u32>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// v^n(0,0), v^∞(0,0), the gap and its envelopes for a range of n.
    Series,
    /// Error series of a z-dependent and a z-independent example with rate fits.
    PhaseTransition,
    /// Upper and lower envelopes as the Brownian dimension grows.
    DimensionSweep,
    /// Monte-Carlo check of the a priori estimates.
    Apriori,
    /// Nested Monte-Carlo Picard iterates against closed forms.
    PicardMc,
}

impl Command {
    pub fn experiment(&self) -> Experiment {
        match self {
            Command::Series => Experiment::Series,
            Command::PhaseTransition => Experiment::PhaseTransition,
            Command::DimensionSweep => Experiment::DimensionSweep,
            Command::Apriori => Experiment::Apriori,
            Command::PicardMc => Experiment::PicardMc,
        }
    }
}

impl Cli {
    /// File values, then flags, then validation.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let experiment = self.command.experiment();
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
                let cfg = ExperimentConfig::parse(&text, experiment)?;
                if cfg.experiment != experiment {
                    return Err(CliError::config(
                        "experiment",
                        format!("file is for `{}`, command is `{}`", cfg.experiment.name(), experiment.name()),
                    ));
                }
                cfg
            }
            None => ExperimentConfig::defaults(experiment),
        };
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.paths {
            cfg.paths = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.k_min {
            cfg.k_min = v;
        }
        if let Some(v) = self.k_max {
            cfg.k_max = v;
        }
        if let Some(v) = self.b_norm_sq {
            cfg.b_norm_sq = v;
            cfg.b = None;
        }
        if let Some(v) = self.eps {
            cfg.eps = v;
        }
        if let Some(v) = self.threads {
            cfg.threads = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match cli.resolve().and_then(|cfg| {
        if cfg.threads > 0 {
            // Only fails if a pool already exists, which is harmless.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads as usize).build_global();
        }
        commands::execute(&cfg)
    }) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            println!("{}", outcome.summary);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
