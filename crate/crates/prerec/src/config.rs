//! Experiment configuration: one JSON file plus CLI flag overrides.
//!
//! Every artifact a command writes embeds the configuration fingerprint, a
//! truncated SHA-256 of the canonical JSON, so reports from different runs
//! can be merged (or refused) safely.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::load::LogFormat;
use crate::corpus::synthetic::SynthConfig;
use crate::embedding::remote::EncoderClientConfig;
use crate::error::{Error, Result};
use crate::evaluation::MetricSettings;
use crate::model::ModelConfig;
use crate::training::TrainConfig;

/// File locations for one domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainPaths {
    pub domain_id: String,
    pub interactions: PathBuf,
    #[serde(default = "default_format")]
    pub format: LogFormat,
    pub catalog: PathBuf,
    pub embeddings: PathBuf,
}

fn default_format() -> LogFormat {
    LogFormat::Csv
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Popularity interval length in days.
    #[serde(default = "default_interval_days")]
    pub interval_days: f64,
    #[serde(default = "default_ratios")]
    pub split_ratios: [f64; 3],
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub metric: MetricSettings,
    #[serde(default)]
    pub sources: Vec<DomainPaths>,
    #[serde(default)]
    pub target: Option<DomainPaths>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Ranker for the zero-shot command: prerec, prerec_n, random, pop,
    /// content_knn, or oracle.
    #[serde(default = "default_model_kind")]
    pub model_kind: String,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub incremental_sizes: Vec<usize>,
    #[serde(default)]
    pub encoder: Option<EncoderClientConfig>,
}

fn default_interval_days() -> f64 {
    15.0
}

fn default_ratios() -> [f64; 3] {
    [4.0, 3.0, 3.0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_model_kind() -> String {
    "prerec".into()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            interval_days: default_interval_days(),
            split_ratios: default_ratios(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            metric: MetricSettings::default(),
            sources: Vec::new(),
            target: None,
            output_dir: default_output_dir(),
            model_kind: default_model_kind(),
            checkpoint: None,
            synth: None,
            incremental_sizes: Vec::new(),
            encoder: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.metric.validate()?;
        if !(self.interval_days > 0.0) {
            return Err(Error::Config(format!(
                "interval_days must be positive, got {}",
                self.interval_days
            )));
        }
        let total: f64 = self.split_ratios.iter().sum();
        if !(total > 0.0) || self.split_ratios.iter().any(|&r| r < 0.0) {
            return Err(Error::Config(format!(
                "split ratios must be non-negative with positive sum, got {:?}",
                self.split_ratios
            )));
        }
        Ok(())
    }

    pub fn interval_secs(&self) -> i64 {
        (self.interval_days * 24.0 * 3600.0).round() as i64
    }

    /// Truncated SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let hex = format!("{:x}", hasher.finalize());
        hex[..12].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 99;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 12);
    }

    #[test]
    fn round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        let mut cfg = ExperimentConfig::default();
        cfg.sources.push(DomainPaths {
            domain_id: "d0".into(),
            interactions: "x.csv".into(),
            format: LogFormat::Csv,
            catalog: "c.jsonl".into(),
            embeddings: "e.json".into(),
        });
        cfg.save(&path).unwrap();
        let loaded = ExperimentConfig::load(&path).unwrap();
        assert_eq!(loaded.fingerprint(), cfg.fingerprint());
    }

    #[test]
    fn bad_interval_is_rejected() {
        let cfg = ExperimentConfig {
            interval_days: 0.0,
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
