//! Experiment configuration: JSON file, dotted-path overrides, dataset
//! resolution.

use serde::{Deserialize, Serialize};
use splitfss::protocol::{Hyperparams, Variant};
use splitfss::{Error, Result};
use std::path::{Path, PathBuf};

pub const DATA_DIR_ENV: &str = "SPLITFSS_DATA_DIR";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Endpoints {
    pub server0: String,
    pub server1: String,
    pub dealer: String,
}

impl Default for Endpoints {
    fn default() -> Self {
        Self {
            server0: "127.0.0.1:7710".into(),
            server1: "127.0.0.1:7711".into(),
            dealer: "127.0.0.1:7712".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub variant: String,
    pub hyper: Hyperparams,
    pub endpoints: Endpoints,
    /// Directory holding the four IDX files; falls back to the
    /// `SPLITFSS_DATA_DIR` env var, then `./data`.
    pub dataset_dir: Option<PathBuf>,
    /// When no dataset directory is found, generate this many synthetic
    /// train/test samples instead.
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    /// JSON-lines metrics sink.
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: "private-vanilla".into(),
            hyper: Hyperparams::default(),
            endpoints: Endpoints::default(),
            dataset_dir: None,
            synthetic_train: 4096,
            synthetic_test: 1024,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn variant(&self) -> Result<Variant> {
        self.variant.parse()
    }

    pub fn config_hash(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("config serialize");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value: serde_json::Value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(ExperimentConfig::default()).unwrap(),
        };
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        serde_json::from_value(value).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Resolve the dataset directory: explicit config, env var, ./data.
    pub fn resolve_data_dir(&self) -> Option<PathBuf> {
        if let Some(d) = &self.dataset_dir {
            return Some(d.clone());
        }
        if let Ok(d) = std::env::var(DATA_DIR_ENV) {
            if !d.is_empty() {
                return Some(PathBuf::from(d));
            }
        }
        let local = PathBuf::from("data");
        local.is_dir().then_some(local)
    }
}

/// `key.path=value` with JSON scalar parsing; bare words become strings.
fn apply_override(value: &mut serde_json::Value, ov: &str) -> Result<()> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {ov:?} is not key=value")))?;
    let parsed: serde_json::Value =
        serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = cursor.as_object_mut().ok_or_else(|| {
            Error::Config(format!("override path {key:?}: {part:?} not an object"))
        })?;
        if i == parts.len() - 1 {
            map.insert(part.to_string(), parsed);
            return Ok(());
        }
        cursor = map
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

/// Load the dataset (real when present, synthetic otherwise). Returns
/// (train, test, used_real_data).
pub fn load_dataset(
    cfg: &ExperimentConfig,
) -> Result<(splitfss::mnist::Dataset, splitfss::mnist::Dataset, bool)> {
    use splitfss::mnist::{load_dir, synthetic_dataset, Split};
    if let Some(dir) = cfg.resolve_data_dir() {
        if dir.is_dir() {
            let (train, test) = load_dir(&dir)?;
            return Ok((train, test, true));
        }
    }
    Ok((
        synthetic_dataset(cfg.synthetic_train, cfg.hyper.seed, Split::Train),
        synthetic_dataset(cfg.synthetic_test, cfg.hyper.seed, Split::Test),
        false,
    ))
}
