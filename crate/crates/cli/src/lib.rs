//! Batch driver for the `wasserfair` pipeline.
//!
//! Configuration layers, lowest to highest: built-in defaults, a dataset
//! preset, the TOML config file, then flags. Every flag can also be given
//! through an environment variable named `WASSERFAIR_<FLAG>` (for example
//! `WASSERFAIR_SEED=3`).

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Method, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "wasserfair", version, about = "Fair representations with a Wasserstein critic")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "WASSERFAIR_CONFIG")]
    pub config: Option<PathBuf>,
    /// Dataset preset: adult, statlog or adult_race.
    #[arg(long, global = true, env = "WASSERFAIR_PRESET")]
    pub preset: Option<String>,
    #[arg(long, global = true, env = "WASSERFAIR_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "WASSERFAIR_OUT")]
    pub out: Option<PathBuf>,
    /// original, original_p, ae, ae_p, nrl or nrl_multiclass.
    #[arg(long, global = true, env = "WASSERFAIR_METHOD")]
    pub method: Option<String>,
    /// Raw CSV file.
    #[arg(long, global = true, env = "WASSERFAIR_DATASET")]
    pub dataset: Option<PathBuf>,
    /// Column schema (TOML).
    #[arg(long, global = true, env = "WASSERFAIR_SCHEMA")]
    pub schema: Option<PathBuf>,
    /// Directory presets resolve their dataset and schema files against.
    #[arg(long, global = true, env = "WASSERFAIR_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// Training epochs.
    #[arg(long, global = true, env = "WASSERFAIR_EPOCHS")]
    pub epochs: Option<usize>,
    /// Training repeats in the evaluation protocol.
    #[arg(long, global = true, env = "WASSERFAIR_REPEATS")]
    pub repeats: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Preprocess the dataset and write it with a summary.
    Prepare,
    /// Train a representation; writes the checkpoint and history.
    Train,
    /// Run the evaluation protocol and write a fairness report.
    Evaluate {
        /// Evaluate this saved model (file or run directory) instead of training.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate every baseline and write one table.
    Compare,
    /// Label-flip experiment and discovery curve.
    Audit,
    /// Repeat the protocol over one parameter.
    Sweep {
        /// dim, alpha or classifier_lambda.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
}

impl Cli {
    /// Resolves the layered configuration.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = config::load(self.config.as_deref(), self.preset.as_deref(), &self.data_dir)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(m) = &self.method {
            cfg.method = m.parse()?;
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        if let Some(s) = &self.schema {
            cfg.schema = Some(s.clone());
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(r) = self.repeats {
            cfg.evaluation.full_repeats = r;
        }
        if let Command::Sweep { axis, values } = &self.command {
            if let Some(a) = axis {
                cfg.sweep.axis = a.parse()?;
            }
            if let Some(v) = values {
                cfg.sweep.values = v.clone();
            }
        }
        cfg.train.validate()?;
        Ok(cfg)
    }
}

/// Executes the parsed command line and returns a one-line summary.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = cli.resolve()?;
    let out = cfg.out.display();
    Ok(match &cli.command {
        Command::Prepare => {
            let s = commands::cmd_prepare(&cfg)?;
            format!("prepared {} rows x {} features into {out}", s.n, s.m)
        }
        Command::Train => {
            let l = commands::cmd_train(&cfg)?;
            let epochs = l.history.as_ref().map_or(0, |h| h.len());
            format!("trained {} for {epochs} epochs into {out}", cfg.method)
        }
        Command::Evaluate { checkpoint } => {
            let ev = commands::cmd_evaluate(&cfg, checkpoint.as_deref())?;
            format!("{}wrote {out}/{}", ev.report.to_kv(), commands::REPORT_FILE)
        }
        Command::Compare => {
            let rows = commands::cmd_compare(&cfg)?;
            format!("{}wrote {out}/compare.csv", commands::compare_csv(&rows))
        }
        Command::Audit => {
            let a = commands::cmd_audit(&cfg)?;
            format!(
                "flipped {} labels; recovered {:.3} (original) vs {:.3} (nrl); wrote {out}/audit.toml",
                a.flipped, a.original.fraction, a.nrl.fraction
            )
        }
        Command::Sweep { .. } => {
            let rows = commands::cmd_sweep(&cfg)?;
            format!("{} sweep points; wrote {out}/sweep.csv", rows.len())
        }
    })
}
