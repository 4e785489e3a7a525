//! Flat `key = value` run configuration.
//!
//! Every [`NoiseConfig`] field may appear at top level and defaults to the
//! hand-tuned defaults; `wheel_radius` has no default. Paths are resolved
//! relative to the configuration file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::filter::FilterMode;
use crate::models::NoiseConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub noise: NoiseConfig,
    pub mode: FilterMode,
    /// Estimate gyroscope and accelerometer biases.
    pub bias: bool,
    pub imu: PathBuf,
    pub encoder: PathBuf,
    /// Optional ground truth; when present the filter starts from its first
    /// record.
    pub ground_truth: Option<PathBuf>,
    /// Output directory.
    pub output: PathBuf,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunKeys {
    mode: FilterMode,
    #[serde(default)]
    bias: bool,
    imu: PathBuf,
    encoder: PathBuf,
    #[serde(default)]
    gt: Option<PathBuf>,
    output: PathBuf,
    #[serde(default)]
    seed: u64,
}

const RUN_KEYS: [&str; 7] = ["mode", "bias", "imu", "encoder", "gt", "output", "seed"];

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            Error::Config(e.message().to_string())
        })?;
        let (run, noise): (toml::Table, toml::Table) = table
            .into_iter()
            .partition(|(k, _)| RUN_KEYS.contains(&k.as_str()));
        let noise = noise_from_table(noise)?;
        let run: RunKeys = toml::Value::Table(run)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
        Ok(Self {
            noise,
            mode: run.mode,
            bias: run.bias,
            imu: resolve(run.imu),
            encoder: resolve(run.encoder),
            ground_truth: run.gt.map(resolve),
            output: resolve(run.output),
            seed: run.seed,
        })
    }

    /// Reads only the noise keys; run keys are accepted and ignored.
    pub fn noise_only(text: &str) -> Result<NoiseConfig> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            Error::Config(e.message().to_string())
        })?;
        let noise = table
            .into_iter()
            .filter(|(k, _)| !RUN_KEYS.contains(&k.as_str()))
            .collect();
        noise_from_table(noise)
    }
}

/// Overlays `keys` on the default table; unknown keys are rejected.
fn noise_from_table(keys: toml::Table) -> Result<NoiseConfig> {
    if !keys.contains_key("wheel_radius") {
        return Err(Error::Config("missing key `wheel_radius`".into()));
    }
    let defaults = toml::Table::try_from(NoiseConfig::hand_tuned(1.0))
        .expect("noise config serializes to a table");
    let mut merged = defaults;
    for (k, v) in keys {
        if !merged.contains_key(&k) {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        // integers are accepted wherever a float is expected
        let v = match (&merged[&k], v) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        merged.insert(k, v);
    }
    let cfg: NoiseConfig = toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
