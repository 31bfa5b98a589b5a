//! Run configuration: one TOML file with sections, overridable key by key
//! from the command line. Every random choice in the pipeline draws from a
//! named seed recorded here.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::OptimizerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Ideal,
    Noisy,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendKind::Ideal => write!(f, "ideal"),
            BackendKind::Noisy => write!(f, "noisy"),
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(BackendKind::Ideal),
            "noisy" => Ok(BackendKind::Noisy),
            other => Err(Error::Config(format!(
                "backend must be `ideal` or `noisy`, got `{other}`"
            ))),
        }
    }
}

/// Named seeds; no stage draws ambient entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub split: u64,
    pub init: u64,
    pub kmeans: u64,
    pub target: u64,
    pub noise: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            split: 0,
            init: 1,
            kmeans: 2,
            target: 3,
            noise: 4,
        }
    }
}

impl Seeds {
    /// Distinct stream for the classifier-head init.
    pub fn head_init(&self) -> u64 {
        self.init.wrapping_add(1)
    }

    /// Distinct stream for hybrid-epoch shuffles.
    pub fn hybrid_shuffle(&self) -> u64 {
        self.init.wrapping_add(2)
    }

    /// Distinct stream for shot sampling, when enabled.
    pub fn shots(&self) -> u64 {
        self.target.wrapping_add(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub kind: OptimizerKind,
    pub learning_rate_ae: f64,
    pub learning_rate_hybrid: f64,
    pub batch_size: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            kind: OptimizerKind::Adam,
            learning_rate_ae: 1e-3,
            learning_rate_hybrid: 1e-2,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Ratings file in `user::movie::rating::timestamp` layout.
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    /// Latent dimension and data-qubit count.
    pub latent_n: usize,
    pub clusters_k: usize,
    /// Keep users with at least this many rated movies.
    pub min_ratings: usize,
    pub split_ratio: f64,
    pub ae_epochs: usize,
    pub hybrid_epochs: usize,
    pub backend: BackendKind,
    pub seeds: Seeds,
    pub optimizer: OptimizerSettings,
    /// Restrict reconstruction loss to rated entries.
    pub mask_unrated: bool,
    /// Unfreeze the encoder during hybrid training.
    pub fine_tune_encoder: bool,
    /// 0 = analytic expectations; otherwise per-readout measurement shots
    /// during evaluation.
    pub shots: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: PathBuf::from("ratings.dat"),
            out_dir: PathBuf::from("out"),
            latent_n: 8,
            clusters_k: 4,
            min_ratings: 20,
            split_ratio: 0.33,
            ae_epochs: 35,
            hybrid_epochs: 35,
            backend: BackendKind::Ideal,
            seeds: Seeds::default(),
            optimizer: OptimizerSettings::default(),
            mask_unrated: false,
            fine_tune_encoder: false,
            shots: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(4..=12).contains(&self.latent_n) {
            return Err(Error::Config(format!(
                "latent_n = {} outside the supported 4..=12",
                self.latent_n
            )));
        }
        if self.clusters_k == 0 {
            return Err(Error::Config("clusters_k must be positive".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split_ratio = {} outside (0, 1)",
                self.split_ratio
            )));
        }
        if self.optimizer.batch_size == 0 {
            return Err(Error::Config("optimizer.batch_size must be positive".into()));
        }
        if self.optimizer.learning_rate_ae <= 0.0 || self.optimizer.learning_rate_hybrid <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }
}

fn config_io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parse one `key=value` or `section.key=value` override.
fn parse_override(raw: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, value) = raw.split_once('=').ok_or_else(|| {
        Error::Config(format!("override `{raw}` is not of the form key=value"))
    })?;
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` has empty segments")));
    }
    // try the TOML value grammar first; fall back to a bare string
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((path, parsed))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (head, rest) = path.split_first().expect("override path is non-empty");
    if rest.is_empty() {
        table.insert(head.clone(), value);
        return Ok(());
    }
    let entry = table
        .entry(head.clone())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(inner) => apply_override(inner, rest, value),
        other => Err(Error::Config(format!(
            "cannot override inside `{head}`: it holds {other}"
        ))),
    }
}

/// Load a config file and apply `key=value` overrides on top.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| config_io(path, e))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for raw in overrides {
        let (key_path, value) = parse_override(raw)?;
        apply_override(&mut table, &key_path, value)?;
    }
    let config: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Build a config from defaults plus `key=value` overrides (no file).
pub fn config_from_overrides(overrides: &[String]) -> Result<RunConfig> {
    let mut table = toml::Table::new();
    for raw in overrides {
        let (key_path, value) = parse_override(raw)?;
        apply_override(&mut table, &key_path, value)?;
    }
    let config: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Serialize the effective config (for the manifest snapshot).
pub fn config_to_toml(config: &RunConfig) -> Result<String> {
    toml::to_string_pretty(config).map_err(|e| Error::Config(e.to_string()))
}
