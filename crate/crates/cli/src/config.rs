//! Run configuration: defaults, then a preset, then the config file, then
//! command-line flags and `WASSERFAIR_*` environment variables.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use wasserfair::TrainConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Ridge logistic regression on the preprocessed features.
    Original,
    /// As `Original` with the protected attribute's columns removed.
    OriginalP,
    /// Plain linear autoencoder.
    Ae,
    /// Autoencoder on features without the protected attribute.
    AeP,
    /// Autoencoder trained against the Wasserstein critic.
    Nrl,
    /// One-vs-rest adversarial training for a multiclass protected attribute.
    NrlMulticlass,
}

impl Method {
    pub const COMPARED: [Method; 5] = [
        Method::Original,
        Method::OriginalP,
        Method::Ae,
        Method::AeP,
        Method::Nrl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Original => "original",
            Method::OriginalP => "original_p",
            Method::Ae => "ae",
            Method::AeP => "ae_p",
            Method::Nrl => "nrl",
            Method::NrlMulticlass => "nrl_multiclass",
        }
    }

    /// The protected attribute's columns are removed before anything else.
    pub fn drops_protected(self) -> bool {
        matches!(self, Method::OriginalP | Method::AeP)
    }

    /// The representation is learned, so repeats retrain it.
    pub fn is_trained(self) -> bool {
        !matches!(self, Method::Original | Method::OriginalP)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        let all = [
            Method::Original,
            Method::OriginalP,
            Method::Ae,
            Method::AeP,
            Method::Nrl,
            Method::NrlMulticlass,
        ];
        all.into_iter()
            .find(|m| m.name() == s.replace('-', "_"))
            .ok_or_else(|| CliError::config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub train_fraction: f64,
    /// Inverse regularization strength `C`; `lambda = 1 / (C * n_train)`.
    pub inverse_strength: f64,
    /// Overrides the mapping above when set.
    pub lambda: Option<f64>,
    pub split_repeats: usize,
    pub full_repeats: usize,
    pub consistency_k: usize,
    pub threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            train_fraction: 0.7,
            inverse_strength: 0.01,
            lambda: None,
            split_repeats: 5,
            full_repeats: 3,
            consistency_k: 1,
            threshold: 0.5,
        }
    }
}

impl EvalConfig {
    pub fn lambda_for(&self, n_train: usize) -> f64 {
        self.lambda
            .unwrap_or(1.0 / (self.inverse_strength * n_train as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Inverse strengths tried when recovering flipped labels.
    pub inverse_strength_grid: Vec<f64>,
    /// Score the discovery ranking with the best grid value rather than the
    /// evaluation default.
    pub use_grid_for_ranking: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            inverse_strength_grid: vec![0.001, 0.01, 0.1, 1.0],
            use_grid_for_ranking: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Dim,
    Alpha,
    ClassifierLambda,
}

impl FromStr for SweepAxis {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "dim" => Ok(SweepAxis::Dim),
            "alpha" => Ok(SweepAxis::Alpha),
            "classifier_lambda" | "lambda" => Ok(SweepAxis::ClassifierLambda),
            other => Err(CliError::config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            axis: SweepAxis::Alpha,
            values: vec![0.0, 10.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub preset: Option<String>,
    pub method: Method,
    pub out: PathBuf,
    pub seed: u64,
    pub train: TrainConfig,
    pub evaluation: EvalConfig,
    pub audit: AuditConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            schema: None,
            preset: None,
            method: Method::Nrl,
            out: PathBuf::from("runs"),
            seed: 0,
            train: TrainConfig::default(),
            evaluation: EvalConfig::default(),
            audit: AuditConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Per-dataset defaults. Training values are the tuned desk-scale settings;
/// `d` and `alpha` follow the reference configuration.
pub fn preset(name: &str, data_dir: &Path) -> Result<RunConfig, CliError> {
    let train = TrainConfig::preset(name)?;
    let stem = match name {
        "adult" => ("adult", "adult"),
        "statlog" | "german" => ("statlog", "statlog"),
        "adult_race" => ("adult", "adult_race"),
        _ => unreachable!("validated by TrainConfig::preset"),
    };
    let method = if name == "adult_race" {
        Method::NrlMulticlass
    } else {
        Method::Nrl
    };
    Ok(RunConfig {
        dataset: Some(data_dir.join(format!("{}.csv", stem.0))),
        schema: Some(data_dir.join(format!("{}.schema.toml", stem.1))),
        preset: Some(name.to_string()),
        method,
        train,
        ..Default::default()
    })
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Defaults, overlaid by the preset (from `preset_flag` or the file's own
/// `preset` key), overlaid by the file.
pub fn load(path: Option<&Path>, preset_flag: Option<&str>, data_dir: &Path) -> Result<RunConfig, CliError> {
    let file: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
            text.parse()
                .map_err(|e: toml::de::Error| CliError::config(format!("{}: {}", p.display(), e.message())))?
        }
        None => toml::Table::new(),
    };
    let preset_name = preset_flag
        .map(str::to_string)
        .or_else(|| file.get("preset").and_then(|v| v.as_str()).map(str::to_string));
    let base = match &preset_name {
        Some(name) => preset(name, data_dir)?,
        None => RunConfig::default(),
    };
    let mut table = toml::Table::try_from(&base).map_err(|e| CliError::config(e.to_string()))?;
    merge(&mut table, file);
    let mut cfg: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::config(e.message().to_string()))?;
    cfg.preset = preset_name;
    Ok(cfg)
}
