use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use sampling_core::sequencer::{DistanceModel, DEFAULT_INTER_ZONE_PENALTY};

pub const ENV_PREFIX: &str = "SAMPLING_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for {key}: {message}")]
    Invalid { key: String, message: String },
}

/// Service settings. Every key may be overridden by an environment variable
/// named `SAMPLING_<KEY>` in upper case.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    /// Watched for worksheet exports; ingestion is manual only when unset.
    pub drop_dir: Option<PathBuf>,
    pub inter_zone_penalty: f64,
    /// Served at `/` when set (the web client build).
    pub static_dir: Option<PathBuf>,
    pub poll_interval_ms: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("data"),
            drop_dir: None,
            inter_zone_penalty: DEFAULT_INTER_ZONE_PENALTY,
            static_dir: None,
            poll_interval_ms: 2000,
        }
    }
}

impl ServiceConfig {
    /// Reads `path` (defaults when `None`), then applies overrides from `env`.
    pub fn load(
        path: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.to_owned(),
                    source,
                })?;
                toml::from_str(&text).map_err(|e| ConfigError::Parse {
                    path: path.to_owned(),
                    message: e.to_string(),
                })?
            }
            None => ServiceConfig::default(),
        };
        for (key, value) in env {
            if let Some(name) = key.strip_prefix(ENV_PREFIX) {
                config.apply_override(name, &value)?;
            }
        }
        config.distance_model()?;
        Ok(config)
    }

    fn apply_override(&mut self, name: &str, value: &str) -> Result<(), ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            key: format!("{ENV_PREFIX}{name}"),
            message,
        };
        let optional_path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match name {
            "LISTEN" => self.listen = value.parse().map_err(|e| invalid(format!("{e}")))?,
            "DATA_DIR" => self.data_dir = PathBuf::from(value),
            "DROP_DIR" => self.drop_dir = optional_path(value),
            "INTER_ZONE_PENALTY" => {
                self.inter_zone_penalty = value.parse().map_err(|e| invalid(format!("{e}")))?
            }
            "STATIC_DIR" => self.static_dir = optional_path(value),
            "POLL_INTERVAL_MS" => {
                self.poll_interval_ms = value.parse().map_err(|e| invalid(format!("{e}")))?
            }
            // Other SAMPLING_* variables (e.g. the CLI's config path) are not ours.
            _ => {}
        }
        Ok(())
    }

    pub fn distance_model(&self) -> Result<DistanceModel, ConfigError> {
        DistanceModel::new(self.inter_zone_penalty).map_err(|e| ConfigError::Invalid {
            key: "inter_zone_penalty".into(),
            message: e.to_string(),
        })
    }

    pub fn poll_interval(&self) -> Duration {
        Duration::from_millis(self.poll_interval_ms.max(50))
    }
}
