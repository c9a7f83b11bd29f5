//! Point-wise and point-adjusted detection metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive run `[start, end]` of anomalous timestamps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalySegment {
    pub start: usize,
    pub end: usize,
}

impl AnomalySegment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Maximal runs of ones.
pub fn segments_from_labels(y: &[u8]) -> Vec<AnomalySegment> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &v) in y.iter().enumerate() {
        match (v == 1, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push(AnomalySegment { start: s, end: t - 1 });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(AnomalySegment {
            start: s,
            end: y.len() - 1,
        });
    }
    out
}

/// Precision, recall and F1 with the confusion counts behind them.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Prf1 {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        // Same value as 2PR/(P+R), but exact in integers so equal counts compare equal.
        let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

fn check_lengths(y: &[u8], y_hat: &[u8]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::shape(format!(
            "{} labels and {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    Ok(())
}

pub fn prf1(y: &[u8], y_hat: &[u8]) -> Result<Prf1> {
    check_lengths(y, y_hat)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&a, &b) in y.iter().zip(y_hat) {
        match (a == 1, b == 1) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            _ => {}
        }
    }
    Ok(Prf1::from_counts(tp, fp, fn_))
}

/// Marks an entire true segment detected when any of its points is flagged.
pub fn point_adjust(y_hat: &[u8], segments: &[AnomalySegment]) -> Vec<u8> {
    let mut out = y_hat.to_vec();
    for s in segments {
        if y_hat[s.start..=s.end].contains(&1) {
            out[s.start..=s.end].fill(1);
        }
    }
    out
}

/// Point adjustment restricted to segments whose flagged fraction exceeds `k` percent.
pub fn pa_percent_k(y_hat: &[u8], segments: &[AnomalySegment], k: f64) -> Vec<u8> {
    let mut out = y_hat.to_vec();
    for s in segments {
        let hits = y_hat[s.start..=s.end].iter().filter(|&&v| v == 1).count();
        if hits as f64 / s.len() as f64 > k / 100.0 {
            out[s.start..=s.end].fill(1);
        }
    }
    out
}

/// Metric variant a threshold is tuned for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    F1,
    /// PA%k with the given percentage.
    F1PaK(f64),
    F1Pa,
}

impl Metric {
    pub const F1_PA50: Metric = Metric::F1PaK(50.0);

    pub fn name(&self) -> String {
        match self {
            Metric::F1 => "F1".into(),
            Metric::F1PaK(k) => format!("F1_PA{k}"),
            Metric::F1Pa => "F1_PA".into(),
        }
    }

    /// Predictions after the metric's adjustment.
    pub fn adjust(&self, y_hat: &[u8], segments: &[AnomalySegment]) -> Vec<u8> {
        match *self {
            Metric::F1 => y_hat.to_vec(),
            Metric::F1PaK(k) => pa_percent_k(y_hat, segments, k),
            Metric::F1Pa => point_adjust(y_hat, segments),
        }
    }

    pub fn evaluate(&self, y: &[u8], y_hat: &[u8]) -> Result<Prf1> {
        check_lengths(y, y_hat)?;
        prf1(y, &self.adjust(y_hat, &segments_from_labels(y)))
    }

    /// Whether a segment with `hits` flagged points out of `len` counts as fully detected.
    pub(crate) fn segment_detected(&self, hits: usize, len: usize) -> bool {
        match *self {
            Metric::F1 => false,
            Metric::F1PaK(k) => hits as f64 / len as f64 > k / 100.0,
            Metric::F1Pa => hits > 0,
        }
    }
}

/// Area under the ROC curve with average ranks for ties.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("scores and labels differ in length"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::arg("AUROC needs both classes"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] == 1 {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// One Table-II column: metric, its tuned threshold and the resulting counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub metric: String,
    pub threshold: f64,
    /// True when no candidate exceeded the validation mean.
    pub threshold_fallback: bool,
    #[serde(flatten)]
    pub scores: Prf1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variants: Vec<VariantReport>,
    pub anomaly_ratio: f64,
    pub segments: usize,
    /// Set when the labels contain no anomalies.
    pub degenerate: bool,
    pub threshold_protocol: String,
    pub auroc: Option<f64>,
}

impl EvalReport {
    pub fn variant(&self, metric: &str) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.metric == metric)
    }

    /// `name  F1  F1_PA50  F1_PA` as percentages.
    pub fn table_row(&self, name: &str) -> String {
        let cell = |m: &str| {
            self.variant(m)
                .map(|v| format!("{:>8.2}", 100.0 * v.scores.f1))
                .unwrap_or_else(|| format!("{:>8}", "-"))
        };
        format!(
            "{name:<12}{}{}{}",
            cell("F1"),
            cell("F1_PA50"),
            cell("F1_PA")
        )
    }

    pub fn table_header() -> String {
        format!("{:<12}{:>8}{:>8}{:>8}", "method", "F1", "F1_PA50", "F1_PA")
    }
}

/// Scores the three standard variants, each at its own best threshold.
pub fn evaluate_all(scores: &[f64], y: &[u8], validation_scores: &[f64]) -> Result<EvalReport> {
    check_lengths(y, &vec![0; scores.len()])?;
    let mut variants = Vec::new();
    for metric in [Metric::F1, Metric::F1_PA50, Metric::F1Pa] {
        let choice = crate::scoring::search_threshold(scores, y, validation_scores, metric)?;
        let y_hat = crate::scoring::predict_labels(scores, choice.threshold);
        variants.push(VariantReport {
            metric: metric.name(),
            threshold: choice.threshold,
            threshold_fallback: choice.fallback,
            scores: metric.evaluate(y, &y_hat)?,
        });
    }
    let anomalies = y.iter().filter(|&&v| v == 1).count();
    let degenerate = anomalies == 0;
    if degenerate {
        log::warn!("labels contain no anomalies; metrics are degenerate");
    }
    Ok(EvalReport {
        variants,
        anomaly_ratio: if y.is_empty() { 0.0 } else { anomalies as f64 / y.len() as f64 },
        segments: segments_from_labels(y).len(),
        degenerate,
        threshold_protocol: "per-metric best threshold over test scores above the validation mean (label-aware)".into(),
        auroc: auroc(scores, y).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments() {
        let s = segments_from_labels(&[0, 1, 1, 0, 1]);
        assert_eq!(
            s,
            vec![
                AnomalySegment { start: 1, end: 2 },
                AnomalySegment { start: 4, end: 4 }
            ]
        );
        assert!(segments_from_labels(&[0, 0]).is_empty());
    }

    #[test]
    fn prf1_cases() {
        let p = prf1(&[1, 1, 0], &[1, 1, 0]).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = prf1(&[1, 1, 1, 0], &[1, 1, 0, 1]).unwrap();
        assert_eq!((p.tp, p.fp, p.fn_), (2, 1, 1));
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-15);
        let p = prf1(&[1, 0], &[0, 0]).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn adjustments() {
        let y = [0, 1, 1, 1, 0];
        let segs = segments_from_labels(&y);
        assert_eq!(point_adjust(&[0, 0, 1, 0, 0], &segs), vec![0, 1, 1, 1, 0]);
        assert_eq!(point_adjust(&[1, 0, 0, 0, 0], &segs), vec![1, 0, 0, 0, 0]);

        let y = [1, 1, 1, 1];
        let segs = segments_from_labels(&y);
        assert_eq!(pa_percent_k(&[1, 0, 0, 0], &segs, 50.0), vec![1, 0, 0, 0]);
        assert_eq!(pa_percent_k(&[1, 1, 1, 0], &segs, 50.0), vec![1, 1, 1, 1]);
        assert_eq!(pa_percent_k(&[1, 1, 1, 1], &segs, 100.0), vec![1, 1, 1, 1]);
        assert_eq!(pa_percent_k(&[1, 1, 1, 0], &segs, 100.0), vec![1, 1, 1, 0]);
    }

    #[test]
    fn auroc_cases() {
        assert_eq!(auroc(&[0.1, 0.9], &[0, 1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.1], &[0, 1]).unwrap(), 0.0);
        assert_eq!(auroc(&[0.5, 0.5], &[0, 1]).unwrap(), 0.5);
        assert!(auroc(&[0.5], &[1]).is_err());
    }

    #[test]
    fn report_ordering_and_row() {
        let y = [0, 0, 1, 1, 1, 1, 0, 0, 1, 1];
        let scores = [0.1, 0.2, 0.3, 0.9, 0.2, 0.1, 0.4, 0.1, 0.15, 0.8];
        let r = evaluate_all(&scores, &y, &[0.1, 0.12]).unwrap();
        let f = |m| r.variant(m).unwrap().scores.f1;
        assert!(f("F1_PA") >= f("F1"));
        assert!((r.anomaly_ratio - 0.6).abs() < 1e-12);
        assert!(r.table_row("LATAD").starts_with("LATAD"));
    }
}
