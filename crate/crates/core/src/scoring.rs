//! Anomaly scores from cosine K-means over a training coreset, and threshold selection.

use ndarray::{s, ArrayView2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{segments_from_labels, Metric, Prf1};
use crate::extractor::{FeatureExtractor, LatentFeature};
use crate::nn::{ParamStore, Tape, Var};
use crate::preprocessing::quantile_sorted;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub clusters: usize,
    pub coreset_fraction: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Divide the nearest-center distance by `‖z‖`.
    pub divide_by_norm: bool,
    /// Quantile of validation scores used as the label-free deployment threshold.
    pub deployment_quantile: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            clusters: 10,
            coreset_fraction: 0.1,
            max_iter: 100,
            seed: 0,
            divide_by_norm: true,
            deployment_quantile: 0.995,
        }
    }
}

/// Unit-norm cluster centers of the training coreset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub centers: Vec<Vec<f64>>,
    pub coreset_fraction: f64,
    pub divide_by_norm: bool,
}

impl ReferenceModel {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Index and adjusted cosine distance of the nearest center; first index wins ties.
    pub fn nearest(&self, z: &[f64]) -> Result<(usize, f64)> {
        let nz = norm(z);
        if nz == 0.0 {
            return Err(Error::ZeroVector);
        }
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centers.iter().enumerate() {
            if c.len() != z.len() {
                return Err(Error::shape("feature and center widths differ"));
            }
            let cos = (dot(c, z) / (norm(c) * nz)).clamp(-1.0, 1.0);
            let d = (1.0 - cos) / 2.0;
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    (n > 0.0).then(|| a.iter().map(|x| x / n).collect())
}

/// Coreset size `⌈fraction·n⌉`, at least one.
pub fn coreset_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).ceil() as usize).clamp(1, n.max(1))
}

/// Fits the reference model and also returns the spherical K-means objective
/// (sum of cosine similarities to assigned centers) after each iteration.
pub fn fit_reference_traced(features: &[LatentFeature], cfg: &ScoringConfig) -> Result<(ReferenceModel, Vec<f64>)> {
    if cfg.clusters == 0 {
        return Err(Error::config("clusters must be at least 1"));
    }
    if features.is_empty() {
        return Err(Error::arg("no training features"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = coreset_size(features.len(), cfg.coreset_fraction);
    let mut picked = sample(&mut rng, features.len(), m).into_vec();
    picked.sort_unstable();
    let points: Vec<Vec<f64>> = picked
        .iter()
        .filter_map(|&i| normalized(&features[i].z))
        .collect();
    if points.is_empty() {
        return Err(Error::ZeroVector);
    }
    let mut k = cfg.clusters;
    if points.len() < k {
        log::warn!(
            "coreset has {} points, reducing K from {} to {}",
            points.len(),
            k,
            points.len()
        );
        k = points.len();
    }
    let mut init = sample(&mut rng, points.len(), k).into_vec();
    init.sort_unstable();
    let mut centers: Vec<Vec<f64>> = init.iter().map(|&i| points[i].clone()).collect();
    let dim = points[0].len();

    let mut assign = vec![usize::MAX; points.len()];
    let mut objectives = Vec::new();
    for _ in 0..cfg.max_iter.max(1) {
        let mut changed = false;
        for (p, a) in points.iter().zip(assign.iter_mut()) {
            let (best, _) = centers
                .iter()
                .enumerate()
                .map(|(i, c)| (i, dot(c, p)))
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assign) {
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            // An empty or degenerate cluster keeps its previous center.
            if let Some(n) = normalized(s) {
                *c = n;
            }
        }
        let after: f64 = points
            .iter()
            .zip(&assign)
            .map(|(p, &a)| dot(&centers[a], p))
            .sum();
        objectives.push(after);
        if !changed {
            break;
        }
    }
    Ok((
        ReferenceModel {
            centers,
            coreset_fraction: cfg.coreset_fraction,
            divide_by_norm: cfg.divide_by_norm,
        },
        objectives,
    ))
}

pub fn fit_reference(features: &[LatentFeature], cfg: &ScoringConfig) -> Result<ReferenceModel> {
    Ok(fit_reference_traced(features, cfg)?.0)
}

/// `A(z) = min_c dist(c, z) / ‖z‖`, or the bare distance when norm division is off.
pub fn anomaly_score(z: &LatentFeature, reference: &ReferenceModel) -> Result<f64> {
    let (_, d) = reference.nearest(&z.z)?;
    Ok(if reference.divide_by_norm { d / z.norm() } else { d })
}

/// The score as a tape node, routed through the nearest center of the current value.
pub fn anomaly_score_on_tape(tape: &mut Tape, z: Var, reference: &ReferenceModel) -> Result<Var> {
    let values: Vec<f64> = tape.value(z).iter().copied().collect();
    let (idx, _) = reference.nearest(&values)?;
    let c = ndarray::Array2::from_shape_vec((1, values.len()), reference.centers[idx].clone())
        .map_err(|e| Error::shape(e.to_string()))?;
    let c = tape.constant(c);
    let d = tape.cosine_distance(c, z);
    if reference.divide_by_norm {
        let n = tape.norm(z);
        Ok(tape.div_scalar(d, n))
    } else {
        Ok(d)
    }
}

/// `ŷ_t = 1` iff `score_t > δ`.
pub fn predict_labels(scores: &[f64], delta: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > delta)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub value: f64,
    pub fallback: bool,
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Best threshold for `metric` among distinct test scores above the validation
/// mean; ties go to the larger threshold.
///
/// Candidates are visited in decreasing order while predictions, segment hits
/// and confusion counts are updated incrementally.
pub fn search_threshold(
    scores: &[f64],
    labels: &[u8],
    validation_scores: &[f64],
    metric: Metric,
) -> Result<ThresholdChoice> {
    if scores.len() != labels.len() {
        return Err(Error::shape("scores and labels differ in length"));
    }
    if validation_scores.is_empty() {
        return Err(Error::arg("validation scores are required"));
    }
    let floor = mean(validation_scores);
    let segments = segments_from_labels(labels);
    let mut seg_of = vec![usize::MAX; labels.len()];
    for (i, s) in segments.iter().enumerate() {
        seg_of[s.start..=s.end].fill(i);
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut hits = vec![0usize; segments.len()];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut next = 0;
    let mut best: Option<ThresholdChoice> = None;
    let mut i = 0;
    while i < order.len() {
        let delta = scores[order[i]];
        if !(delta > floor) {
            break;
        }
        // Flag every point strictly above `delta`.
        while next < order.len() && scores[order[next]] > delta {
            let t = order[next];
            match seg_of[t] {
                usize::MAX => fp += 1,
                s => {
                    let len = segments[s].len();
                    let before = segment_tp(metric, hits[s], len);
                    hits[s] += 1;
                    tp = tp + segment_tp(metric, hits[s], len) - before;
                }
            }
            next += 1;
        }
        let value = Prf1::from_counts(tp, fp, positives - tp).f1;
        if best.map_or(true, |b| value > b.value) {
            best = Some(ThresholdChoice {
                threshold: delta,
                value,
                fallback: false,
            });
        }
        while i < order.len() && scores[order[i]] == delta {
            i += 1;
        }
    }
    match best {
        Some(b) => Ok(b),
        None => {
            log::warn!("no test score exceeds the validation mean {floor}; using it as threshold");
            let y_hat = predict_labels(scores, floor);
            Ok(ThresholdChoice {
                threshold: floor,
                value: metric.evaluate(labels, &y_hat)?.f1,
                fallback: true,
            })
        }
    }
}

fn segment_tp(metric: Metric, hits: usize, len: usize) -> usize {
    if metric.segment_detected(hits, len) {
        len
    } else {
        hits
    }
}

/// Label-free threshold: the given quantile of validation scores.
pub fn quantile_threshold(validation_scores: &[f64], q: f64) -> Result<f64> {
    if validation_scores.is_empty() {
        return Err(Error::arg("validation scores are required"));
    }
    let mut v = validation_scores.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&v, q))
}

/// Scores aligned to timestamps, with the threshold and decisions derived from it.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSeries {
    pub scores: Vec<f64>,
    pub threshold: f64,
    pub predictions: Vec<u8>,
}

impl ScoreSeries {
    pub fn with_threshold(scores: Vec<f64>, threshold: f64) -> Self {
        let predictions = predict_labels(&scores, threshold);
        Self {
            scores,
            threshold,
            predictions,
        }
    }
}

/// Expands stride-1 window scores to one score per timestamp: each window
/// owns its last timestamp and the first `w-1` take the first window's score.
pub fn align_window_scores(window_scores: &[f64], w: usize) -> Vec<f64> {
    let Some(&first) = window_scores.first() else {
        return Vec::new();
    };
    let mut out = vec![first; w.saturating_sub(1)];
    out.extend_from_slice(window_scores);
    out
}

/// Scores of every stride-1 window of `series`.
pub fn window_scores(
    series: ArrayView2<f64>,
    extractor: &FeatureExtractor,
    store: &ParamStore,
    reference: &ReferenceModel,
) -> Result<Vec<f64>> {
    let w = extractor.config().window;
    if series.nrows() < w {
        return Err(Error::arg(format!(
            "series of length {} is shorter than the window {w}",
            series.nrows()
        )));
    }
    (0..=series.nrows() - w)
        .map(|s| {
            let z = extractor.extract(store, series.slice(s![s..s + w, ..]))?;
            anomaly_score(&z, reference)
        })
        .collect()
}

/// Per-timestamp scores of `series`, one per row.
pub fn score_series(
    series: ArrayView2<f64>,
    extractor: &FeatureExtractor,
    store: &ParamStore,
    reference: &ReferenceModel,
) -> Result<Vec<f64>> {
    let ws = window_scores(series, extractor, store, reference)?;
    Ok(align_window_scores(&ws, extractor.config().window))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lf(z: &[f64]) -> LatentFeature {
        LatentFeature { z: z.to_vec() }
    }

    #[test]
    fn single_center_is_normalized_mean() {
        let feats = vec![lf(&[1.0, 0.0]), lf(&[0.0, 2.0]), lf(&[3.0, 3.0])];
        let cfg = ScoringConfig {
            clusters: 1,
            coreset_fraction: 1.0,
            ..Default::default()
        };
        let r = fit_reference(&feats, &cfg).unwrap();
        let s = 1.0 + 0.5f64.sqrt();
        let expect = normalized(&[s, s]).unwrap();
        assert!((r.centers[0][0] - expect[0]).abs() < 1e-12);
        assert!((r.centers[0][1] - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn coreset_rule() {
        assert_eq!(coreset_size(100, 0.1), 10);
        assert_eq!(coreset_size(101, 0.1), 11);
        assert_eq!(coreset_size(3, 0.1), 1);
    }

    #[test]
    fn k_reduced_to_coreset() {
        let feats: Vec<_> = (0..20).map(|i| lf(&[1.0, i as f64])).collect();
        let r = fit_reference(&feats, &ScoringConfig::default()).unwrap();
        assert_eq!(r.k(), 2);
    }

    #[test]
    fn score_cases() {
        let r = ReferenceModel {
            centers: vec![vec![1.0, 0.0]],
            coreset_fraction: 0.1,
            divide_by_norm: true,
        };
        assert_eq!(anomaly_score(&lf(&[3.0, 0.0]), &r).unwrap(), 0.0);
        assert_eq!(anomaly_score(&lf(&[-1.0, 0.0]), &r).unwrap(), 1.0);
        assert!(anomaly_score(&lf(&[0.0, 0.0]), &r).is_err());
    }

    #[test]
    fn predictions_are_strict() {
        assert_eq!(predict_labels(&[0.1, 0.5, 0.3], 0.3), vec![0, 1, 0]);
        assert_eq!(predict_labels(&[0.1, 0.5], f64::INFINITY), vec![0, 0]);
        assert_eq!(predict_labels(&[0.0, 0.5], -1.0), vec![1, 1]);
    }

    #[test]
    fn threshold_examples() {
        let c = search_threshold(&[0.1, 0.2, 0.9], &[0, 0, 1], &[0.15], Metric::F1).unwrap();
        assert_eq!(c.threshold, 0.2);
        assert_eq!(c.value, 1.0);
        let c = search_threshold(&[0.1, 0.2, 0.9], &[0, 0, 0], &[0.15], Metric::F1).unwrap();
        assert_eq!(c.threshold, 0.9);
        let c = search_threshold(&[0.1, 0.2], &[0, 1], &[5.0], Metric::F1).unwrap();
        assert!(c.fallback);
        assert_eq!(c.threshold, 5.0);
    }

    #[test]
    fn alignment() {
        assert_eq!(align_window_scores(&[0.5, 0.7], 3), vec![0.5, 0.5, 0.5, 0.7]);
        assert!(align_window_scores(&[], 3).is_empty());
    }
}
