//! Benchmark loaders, the synthetic generator, and on-disk dataset formats.

pub mod io;
mod loaders;
pub mod synth;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocessing::TimeSeriesDataset;

pub use loaders::{load_msl_smap, load_smd, load_swat, load_wadi, DEFAULT_SMD_MACHINE};
pub use synth::{synth_generate, AnomalyKind, AnomalySpec, SynthConfig};

/// Published size of a benchmark: lengths, anomaly ratio of the test split, feature count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub expected_train_len: usize,
    pub expected_test_len: usize,
    pub expected_anomaly_ratio: f64,
    pub expected_feature_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Benchmark {
    Swat,
    Wadi,
    Msl,
    Smap,
    Smd,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::Swat,
        Benchmark::Wadi,
        Benchmark::Msl,
        Benchmark::Smap,
        Benchmark::Smd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::Swat => "SWaT",
            Benchmark::Wadi => "WADI",
            Benchmark::Msl => "MSL",
            Benchmark::Smap => "SMAP",
            Benchmark::Smd => "SMD",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown benchmark `{name}`; expected one of SWaT, WADI, MSL, SMAP, SMD"
                ))
            })
    }

    pub fn descriptor(&self) -> DatasetDescriptor {
        let (train, test, ratio, d) = match self {
            Benchmark::Swat => (495_000, 449_919, 0.1233, 51),
            Benchmark::Wadi => (784_537, 172_801, 0.0577, 123),
            Benchmark::Msl => (58_317, 73_729, 0.105, 55),
            Benchmark::Smap => (135_183, 427_617, 0.128, 25),
            Benchmark::Smd => (25_300, 25_300, 0.0421, 38),
        };
        DatasetDescriptor {
            name: self.name().into(),
            expected_train_len: train,
            expected_test_len: test,
            expected_anomaly_ratio: ratio,
            expected_feature_count: d,
        }
    }
}

/// One disagreement between loaded data and its descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetWarning {
    pub dataset: String,
    pub field: String,
    pub expected: f64,
    pub actual: f64,
}

/// Ratios within this absolute distance of the published value count as matching.
const RATIO_TOLERANCE: f64 = 0.001;

impl DatasetDescriptor {
    /// Compares loaded splits with the published statistics and logs each mismatch.
    pub fn check(&self, train: &TimeSeriesDataset, test: &TimeSeriesDataset) -> Vec<DatasetWarning> {
        let mut out = Vec::new();
        let mut push = |field: &str, expected: f64, actual: f64| {
            let w = DatasetWarning {
                dataset: self.name.clone(),
                field: field.into(),
                expected,
                actual,
            };
            log::warn!(
                target: "latad::datasets",
                "dataset={} field={} expected={} actual={}",
                w.dataset,
                w.field,
                w.expected,
                w.actual
            );
            out.push(w);
        };
        if train.len() != self.expected_train_len {
            push("train_len", self.expected_train_len as f64, train.len() as f64);
        }
        if test.len() != self.expected_test_len {
            push("test_len", self.expected_test_len as f64, test.len() as f64);
        }
        if train.num_features() != self.expected_feature_count {
            push(
                "feature_count",
                self.expected_feature_count as f64,
                train.num_features() as f64,
            );
        }
        let ratio = test.anomaly_ratio().unwrap_or(0.0);
        if (ratio - self.expected_anomaly_ratio).abs() > RATIO_TOLERANCE {
            push("anomaly_ratio", self.expected_anomaly_ratio, ratio);
        }
        out
    }
}

/// Train/test pair in the unified schema plus loader notes.
#[derive(Clone, Debug)]
pub struct LoadedBenchmark {
    pub train: TimeSeriesDataset,
    pub test: TimeSeriesDataset,
    pub warnings: Vec<DatasetWarning>,
    pub metadata: BTreeMap<String, String>,
}

/// Loads a benchmark from its published layout under `root`.
pub fn load_benchmark(benchmark: Benchmark, root: &Path) -> Result<LoadedBenchmark> {
    let (train, test, metadata) = match benchmark {
        Benchmark::Swat => {
            let (a, b) = load_swat(root)?;
            (a, b, BTreeMap::new())
        }
        Benchmark::Wadi => load_wadi(root)?,
        Benchmark::Msl => load_msl_smap(root, "MSL")?,
        Benchmark::Smap => load_msl_smap(root, "SMAP")?,
        Benchmark::Smd => {
            let (a, b) = load_smd(root, DEFAULT_SMD_MACHINE)?;
            let mut m = BTreeMap::new();
            m.insert("machine".into(), DEFAULT_SMD_MACHINE.into());
            (a, b, m)
        }
    };
    train.validate(true)?;
    test.validate(true)?;
    let warnings = benchmark.descriptor().check(&train, &test);
    Ok(LoadedBenchmark {
        train,
        test,
        warnings,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocessing::Role;
    use ndarray::Array2;

    #[test]
    fn descriptor_values() {
        let d = Benchmark::Swat.descriptor();
        assert_eq!((d.expected_train_len, d.expected_feature_count), (495_000, 51));
        assert_eq!(Benchmark::Smd.descriptor().expected_feature_count, 38);
        assert_eq!(Benchmark::parse("smap").unwrap(), Benchmark::Smap);
        assert!(Benchmark::parse("nope").is_err());
    }

    #[test]
    fn mismatch_is_reported() {
        let train = TimeSeriesDataset::from_values(Array2::zeros((10, 38)), None, Role::Train);
        let test = TimeSeriesDataset::from_values(Array2::zeros((10, 38)), Some(vec![0; 10]), Role::Test);
        let w = Benchmark::Smd.descriptor().check(&train, &test);
        let fields: Vec<_> = w.iter().map(|w| w.field.as_str()).collect();
        assert_eq!(fields, vec!["train_len", "test_len", "anomaly_ratio"]);
    }
}
