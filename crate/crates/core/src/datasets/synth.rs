//! Seeded synthetic series: mixed sinusoids plus noise, with planned anomalies
//! injected into the test split.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocessing::{Role, TimeSeriesDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyKind {
    /// Additive spike.
    Point,
    /// Level shift clipped to the range seen in training.
    Contextual,
    /// Interval replaced by a fast oscillation around the feature mean.
    Collective,
}

/// One planned anomaly. `start` indexes the test split; `magnitude` is in
/// units of the affected feature's standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    pub start: usize,
    pub length: usize,
    pub magnitude: f64,
    /// Affected features; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<usize>>,
}

impl AnomalySpec {
    pub fn new(kind: AnomalyKind, start: usize, length: usize, magnitude: f64) -> Self {
        Self {
            kind,
            start,
            length,
            magnitude,
            features: None,
        }
    }

    fn end(&self) -> usize {
        self.start + self.length
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub features: usize,
    pub train_len: usize,
    pub test_len: usize,
    /// Period of each latent sinusoid, in steps.
    pub periods: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// Source-to-feature mixing matrix, one row per source; drawn from the seed when empty.
    pub mixing: Vec<Vec<f64>>,
    pub noise_std: f64,
    /// Period of the oscillation that replaces collective-anomaly intervals.
    pub collective_period: f64,
    pub anomalies: Vec<AnomalySpec>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        use AnomalyKind::*;
        Self {
            features: 5,
            train_len: 8000,
            test_len: 2000,
            periods: vec![40.0, 75.0, 130.0],
            amplitudes: vec![1.0, 0.7, 0.5],
            mixing: Vec::new(),
            noise_std: 0.05,
            collective_period: 6.0,
            anomalies: vec![
                AnomalySpec::new(Point, 150, 2, 6.0),
                AnomalySpec::new(Point, 1700, 2, -6.0),
                AnomalySpec::new(Contextual, 450, 80, 2.5),
                AnomalySpec::new(Contextual, 1250, 80, -2.5),
                AnomalySpec::new(Collective, 800, 100, 2.0),
                AnomalySpec::new(Collective, 1500, 100, 2.0),
            ],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.train_len == 0 || self.test_len == 0 {
            return Err(Error::config("synthetic sizes must be positive"));
        }
        if self.periods.is_empty() || self.periods.len() != self.amplitudes.len() {
            return Err(Error::config("periods and amplitudes must be non-empty and equally long"));
        }
        if self.periods.iter().any(|&p| !(p > 0.0)) || !(self.collective_period > 0.0) {
            return Err(Error::config("periods must be positive"));
        }
        if !self.mixing.is_empty()
            && (self.mixing.len() != self.periods.len()
                || self.mixing.iter().any(|r| r.len() != self.features))
        {
            return Err(Error::config("mixing must be sources × features"));
        }
        for a in &self.anomalies {
            if a.length == 0 || a.end() > self.test_len {
                return Err(Error::config(format!(
                    "anomaly [{}, {}) does not fit the test split of length {}",
                    a.start,
                    a.end(),
                    self.test_len
                )));
            }
            if let Some(fs) = &a.features {
                if fs.is_empty() || fs.iter().any(|&j| j >= self.features) {
                    return Err(Error::config("anomaly feature index out of range"));
                }
            }
        }
        for i in 0..self.anomalies.len() {
            for j in i + 1..self.anomalies.len() {
                let (a, b) = (&self.anomalies[i], &self.anomalies[j]);
                if a.start < b.end() && b.start < a.end() {
                    return Err(Error::OverlappingAnomalies(i, j));
                }
            }
        }
        Ok(())
    }
}

/// Generates the `(train, test)` pair. Test timestamps continue after train.
pub fn synth_generate(cfg: &SynthConfig) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.features;
    let sources = cfg.periods.len();
    let phases: Vec<f64> = (0..sources)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    let mixing: Vec<Vec<f64>> = if cfg.mixing.is_empty() {
        (0..sources)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    } else {
        cfg.mixing.clone()
    };
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).map_err(|e| Error::config(e.to_string()))?;

    let total = cfg.train_len + cfg.test_len;
    let mut x = Array2::<f64>::zeros((total, d));
    for t in 0..total {
        for k in 0..sources {
            let s = cfg.amplitudes[k]
                * (std::f64::consts::TAU * t as f64 / cfg.periods[k] + phases[k]).sin();
            for j in 0..d {
                x[[t, j]] += s * mixing[k][j];
            }
        }
        for j in 0..d {
            x[[t, j]] += noise.sample(&mut rng);
        }
    }

    let train_part = x.slice(ndarray::s![..cfg.train_len, ..]);
    let stats: Vec<(f64, f64, f64, f64)> = train_part
        .columns()
        .into_iter()
        .map(|c| {
            let n = c.len() as f64;
            let mean = c.sum() / n;
            let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let lo = c.fold(f64::INFINITY, |m, &v| m.min(v));
            let hi = c.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            (mean, sd, lo, hi)
        })
        .collect();

    let mut labels = vec![0u8; cfg.test_len];
    for a in &cfg.anomalies {
        let feats: Vec<usize> = a.features.clone().unwrap_or_else(|| (0..d).collect());
        for i in a.start..a.end() {
            labels[i] = 1;
            let t = cfg.train_len + i;
            for &j in &feats {
                let (mean, sd, lo, hi) = stats[j];
                let v = &mut x[[t, j]];
                match a.kind {
                    AnomalyKind::Point => *v += a.magnitude * sd,
                    AnomalyKind::Contextual => *v = (*v + a.magnitude * sd).clamp(lo, hi),
                    AnomalyKind::Collective => {
                        let phase = std::f64::consts::TAU * (i - a.start) as f64 / cfg.collective_period;
                        *v = mean + a.magnitude * sd * phase.sin();
                    }
                }
            }
        }
    }

    let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    let train = TimeSeriesDataset {
        values: x.slice(ndarray::s![..cfg.train_len, ..]).to_owned(),
        timestamps: (0..cfg.train_len as i64).collect(),
        labels: None,
        role: Role::Train,
        feature_names: names.clone(),
    };
    let test = TimeSeriesDataset {
        values: x.slice(ndarray::s![cfg.train_len.., ..]).to_owned(),
        timestamps: (cfg.train_len as i64..total as i64).collect(),
        labels: Some(labels),
        role: Role::Test,
        feature_names: names,
    };
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            train_len: 300,
            test_len: 100,
            anomalies: Vec::new(),
            ..Default::default()
        }
    }

    #[test]
    fn empty_plan_has_no_labels() {
        let (_, test) = synth_generate(&small()).unwrap();
        assert!(test.labels.unwrap().iter().all(|&l| l == 0));
    }

    #[test]
    fn single_point_single_label() {
        let mut cfg = small();
        cfg.anomalies.push(AnomalySpec::new(AnomalyKind::Point, 40, 1, 5.0));
        let (_, test) = synth_generate(&cfg).unwrap();
        let labels = test.labels.unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 1);
        assert_eq!(labels[40], 1);
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            train_len: 200,
            test_len: 100,
            anomalies: vec![AnomalySpec::new(AnomalyKind::Collective, 10, 20, 2.0)],
            ..Default::default()
        };
        assert_eq!(synth_generate(&cfg).unwrap(), synth_generate(&cfg).unwrap());
    }

    #[test]
    fn overlap_rejected() {
        let mut cfg = small();
        cfg.anomalies = vec![
            AnomalySpec::new(AnomalyKind::Point, 10, 5, 1.0),
            AnomalySpec::new(AnomalyKind::Point, 14, 2, 1.0),
        ];
        assert!(matches!(synth_generate(&cfg), Err(Error::OverlappingAnomalies(0, 1))));
    }

    #[test]
    fn contextual_stays_in_range() {
        let mut cfg = small();
        cfg.anomalies = vec![AnomalySpec::new(AnomalyKind::Contextual, 0, 100, 10.0)];
        let (train, test) = synth_generate(&cfg).unwrap();
        for j in 0..cfg.features {
            let hi = train.values.column(j).fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            assert!(test.values.column(j).iter().all(|&v| v <= hi));
        }
    }
}
