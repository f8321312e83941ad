//! Optional TOML run configuration. Command-line flags override file values.
//!
//! ```toml
//! endpoint = "http://127.0.0.1:8080/v1/chat/completions"
//! model = "gpt-4-1106-preview"
//! rate_per_minute = 500
//! concurrency = 8
//!
//! [thresholds]
//! entropy_max = 1.0
//! tail_max = 0.1
//! margin_min = 0.5
//!
//! [retry]
//! max_attempts = 5
//!
//! [price]
//! prompt_per_1k = 0.01
//! completion_per_1k = 0.03
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::client::{PriceTable, RetryPolicy};
use crate::metrics::ThresholdConfig;

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub rate_per_minute: Option<u32>,
    pub concurrency: Option<usize>,
    pub request_timeout_secs: Option<u64>,
    pub thresholds: ThresholdConfig,
    pub retry: RetryPolicy,
    pub price: Option<PriceTable>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Toml {
            path: path.to_path_buf(),
            source,
        })
    }
}
