//! Run configuration shared by all subcommands.
//!
//! A config file is TOML with the same keys as [`RunConfig`] (kebab-case),
//! for example:
//!
//! ```toml
//! kinds = ["location", "timezone", "geoparsed"]
//! alpha = 0.5
//! seed = 7
//! region = "europe"
//! cache = "geocode-cache.tsv"
//! ```
//!
//! Command-line flags override file values; unspecified keys take the
//! defaults below. The remote geocoder credential is read only from the
//! environment variable [`GEOCODER_KEY_ENV`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bayes::DEFAULT_ALPHA;
use crate::eval::{FoldOrientation, DEFAULT_MIN_COUNT};
use crate::features::KindSet;

pub const GEOCODER_KEY_ENV: &str = "TWEET_COUNTRY_GEOCODER_KEY";
pub const OFFLINE_GEOCODER: &str = "offline";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub kinds: KindSet,
    pub alpha: f64,
    pub k: usize,
    pub seed: u64,
    pub min_count: usize,
    /// Region preset name (`europe`) or path to a region file.
    pub region: Option<String>,
    pub fold_orientation: FoldOrientation,
    pub uniform_priors: bool,
    pub fold_case: bool,
    /// `offline`, or the base URL of a Nominatim-compatible service.
    pub geocoder: String,
    pub geocoder_timeout_secs: u64,
    pub max_in_flight: usize,
    pub cache: Option<PathBuf>,
    /// Replaces the bundled gazetteer.
    pub gazetteer: Option<PathBuf>,
    pub strict: bool,
    /// Records per parallel batch in `classify`.
    pub chunk_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kinds: KindSet::all(),
            alpha: DEFAULT_ALPHA,
            k: 10,
            seed: 42,
            min_count: DEFAULT_MIN_COUNT,
            region: None,
            fold_orientation: FoldOrientation::Standard,
            uniform_priors: false,
            fold_case: true,
            geocoder: OFFLINE_GEOCODER.to_string(),
            geocoder_timeout_secs: 10,
            max_in_flight: 1,
            cache: None,
            gazetteer: None,
            strict: false,
            chunk_size: 1024,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.kinds.is_empty() {
            return Err(ConfigError::Invalid("no feature kinds enabled".into()));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(ConfigError::Invalid(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if self.k < 2 {
            return Err(ConfigError::Invalid(format!(
                "k must be >= 2, got {}",
                self.k
            )));
        }
        if self.min_count < 1 {
            return Err(ConfigError::Invalid("min-count must be >= 1".into()));
        }
        if self.max_in_flight < 1 || self.chunk_size < 1 {
            return Err(ConfigError::Invalid(
                "max-in-flight and chunk-size must be >= 1".into(),
            ));
        }
        if self.geocoder != OFFLINE_GEOCODER
            && !(self.geocoder.starts_with("http://") || self.geocoder.starts_with("https://"))
        {
            return Err(ConfigError::Invalid(format!(
                "geocoder must be `offline` or an http(s) URL, got `{}`",
                self.geocoder
            )));
        }
        Ok(())
    }

    /// The resolved configuration plus command and inputs, as embedded in
    /// output artifacts. `sha256` covers the other three fields.
    pub fn echo(&self, command: &str, inputs: &[&Path]) -> serde_json::Value {
        let body = serde_json::json!({
            "command": command,
            "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "config": self,
        });
        let digest = Sha256::digest(body.to_string().as_bytes());
        let mut echo = body;
        echo["sha256"] = format!("{digest:x}").into();
        echo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;

    #[test]
    fn file_values_and_defaults() {
        let cfg = RunConfig::from_toml(
            "kinds = [\"location\", \"timezone\"]\nalpha = 0.5\nregion = \"europe\"\n",
            "x.toml",
        )
        .unwrap();
        assert_eq!(
            cfg.kinds,
            KindSet::from_kinds([FeatureKind::Location, FeatureKind::Timezone])
        );
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.region.as_deref(), Some("europe"));
        assert_eq!(cfg.k, 10);
        assert!(cfg.fold_case);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(RunConfig::from_toml("alpah = 1.0\n", "x").is_err());
        assert!(RunConfig::from_toml("alpha = -1.0\n", "x").is_err());
        assert!(RunConfig::from_toml("k = 1\n", "x").is_err());
        assert!(RunConfig::from_toml("geocoder = \"here\"\n", "x").is_err());
        assert!(RunConfig::from_toml("fold-orientation = \"paper-literal\"\n", "x").is_ok());
    }

    #[test]
    fn echo_hash_tracks_config() {
        let a = RunConfig::default();
        let b = RunConfig {
            seed: 7,
            ..RunConfig::default()
        };
        let p = Path::new("in.ndjson");
        assert_eq!(a.echo("train", &[p]), a.echo("train", &[p]));
        assert_ne!(
            a.echo("train", &[p])["sha256"],
            b.echo("train", &[p])["sha256"]
        );
        assert_eq!(a.echo("train", &[p])["config"]["seed"], 42);
    }
}
