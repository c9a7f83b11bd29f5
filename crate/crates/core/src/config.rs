//! Experiment configuration: one TOML file with a section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::SynthConfig;
use crate::error::{Error, Result};
use crate::extractor::ExtractorConfig;
use crate::preprocessing::PreprocessConfig;
use crate::scoring::ScoringConfig;
use crate::training::TrainConfig;

/// Environment variable naming the default directory for benchmark data.
pub const DATA_ROOT_ENV: &str = "LATAD_DATA_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Benchmark,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Benchmark name for `source = "benchmark"`.
    pub benchmark: String,
    /// Benchmark directory; defaults to `$LATAD_DATA_ROOT/<benchmark>`.
    pub path: Option<PathBuf>,
    /// Train and test files for `source = "csv"`.
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    pub synthetic: SynthConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            benchmark: "SWaT".into(),
            path: None,
            train_csv: None,
            test_csv: None,
            synthetic: SynthConfig::default(),
        }
    }
}

impl DataConfig {
    /// Resolved benchmark directory.
    pub fn benchmark_dir(&self) -> Result<PathBuf> {
        if let Some(p) = &self.path {
            return Ok(p.clone());
        }
        match std::env::var_os(DATA_ROOT_ENV) {
            Some(root) => Ok(PathBuf::from(root).join(&self.benchmark)),
            None => Err(Error::config(format!(
                "data.path is unset and {DATA_ROOT_ENV} is not defined"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    /// Extra PA%k percentages reported besides the standard three metrics.
    pub extra_pa_ks: Vec<f64>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            extra_pa_ks: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosisConfig {
    pub top_k: usize,
    /// `highest-score` or a test timestamp; the window ending there is diagnosed.
    pub window: String,
}

impl Default for DiagnosisConfig {
    fn default() -> Self {
        Self {
            top_k: 4,
            window: "highest-score".into(),
        }
    }
}

/// Full run configuration. Every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Seeds every random stage: data synthesis, initialization, training, coreset.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub preprocess: PreprocessConfig,
    pub extractor: ExtractorConfig,
    pub train: TrainConfig,
    pub scoring: ScoringConfig,
    pub evaluation: EvaluationConfig,
    pub diagnosis: DiagnosisConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/latest"),
            data: DataConfig::default(),
            preprocess: PreprocessConfig::default(),
            extractor: ExtractorConfig::default(),
            train: TrainConfig::default(),
            scoring: ScoringConfig::default(),
            evaluation: EvaluationConfig::default(),
            diagnosis: DiagnosisConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        Ok(cfg.resolved())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput {
                path: path.into(),
                hint: "config file not found; `print-config` shows the defaults".into(),
            },
            _ => e.into(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Copies the global seed and window length into the stage sections.
    pub fn resolved(mut self) -> Self {
        self.extractor.seed = self.seed;
        self.train.seed = self.seed;
        self.scoring.seed = self.seed;
        self.data.synthetic.seed = self.seed;
        self.extractor.window = self.preprocess.window;
        self
    }

    /// Applies `section.key=value` overrides. Values parse as TOML, falling back to strings.
    pub fn with_overrides(self, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Value = toml::Value::try_from(&self).map_err(|e| Error::config(e.to_string()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(format!("override `{item}` is not key=value")))?;
            let value = parse_override(raw.trim());
            set_path(&mut doc, key.trim(), value)?;
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        Ok(cfg.resolved())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.preprocess.window == 0 || self.preprocess.train_stride == 0 {
            return Err(Error::config("window and stride must be positive"));
        }
        if self.diagnosis.top_k == 0 {
            return Err(Error::config("diagnosis.top_k must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

fn parse_override(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(doc: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::config("empty override key"))?;
    let mut cur = doc;
    for p in parts {
        cur = cur
            .as_table_mut()
            .and_then(|t| t.get_mut(p))
            .ok_or_else(|| Error::config(format!("unknown config section `{p}` in `{key}`")))?;
    }
    let table = cur
        .as_table_mut()
        .ok_or_else(|| Error::config(format!("`{key}` does not name a table entry")))?;
    // Optional fields are omitted from the serialized form, so new keys are allowed.
    table.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default().resolved();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_file_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 7\n[train]\nlambda = 0.5\n").unwrap();
        assert_eq!(cfg.train.lambda, 0.5);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.scoring.clusters, 10);
    }

    #[test]
    fn overrides() {
        let cfg = ExperimentConfig::default()
            .with_overrides(&[
                "train.max_epoch=3".into(),
                "preprocess.window=16".into(),
                "data.source=benchmark".into(),
                "data.path=/tmp/x".into(),
            ])
            .unwrap();
        assert_eq!(cfg.train.max_epoch, 3);
        assert_eq!(cfg.extractor.window, 16);
        assert_eq!(cfg.data.source, DataSource::Benchmark);
        assert_eq!(cfg.data.path, Some(PathBuf::from("/tmp/x")));
        assert!(ExperimentConfig::default()
            .with_overrides(&["nosuch.key=1".into()])
            .is_err());
        assert!(ExperimentConfig::default()
            .with_overrides(&["train.max_epoch=\"x\"".into()])
            .is_err());
    }
}
