//! Cleaning, downsampling, normalization, outlier removal and windowing.
//!
//! Series are `T×d` matrices, one row per timestamp and one column per
//! feature. Missing or unparseable readings are stored as NaN until
//! [`fill_missing`] runs.

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Validation,
    Test,
}

/// A multivariate series with optional point labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    pub values: Array2<f64>,
    pub timestamps: Vec<i64>,
    pub labels: Option<Vec<u8>>,
    pub role: Role,
    pub feature_names: Vec<String>,
}

impl TimeSeriesDataset {
    /// Dataset with row-index timestamps and generated feature names.
    pub fn from_values(values: Array2<f64>, labels: Option<Vec<u8>>, role: Role) -> Self {
        let (t, d) = values.dim();
        Self {
            values,
            timestamps: (0..t as i64).collect(),
            labels,
            role,
            feature_names: (0..d).map(|i| format!("f{i}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn num_features(&self) -> usize {
        self.values.ncols()
    }

    /// Fraction of labeled-anomalous timestamps, when labels exist.
    pub fn anomaly_ratio(&self) -> Option<f64> {
        let labels = self.labels.as_ref()?;
        if labels.is_empty() {
            return Some(0.0);
        }
        Some(labels.iter().filter(|&&l| l == 1).count() as f64 / labels.len() as f64)
    }

    /// Checks shape, label and timestamp invariants. `allow_missing` skips the finiteness check.
    pub fn validate(&self, allow_missing: bool) -> Result<()> {
        let t = self.len();
        if self.timestamps.len() != t {
            return Err(Error::shape(format!(
                "{} timestamps for {} rows",
                self.timestamps.len(),
                t
            )));
        }
        if self.feature_names.len() != self.num_features() {
            return Err(Error::shape(format!(
                "{} feature names for {} columns",
                self.feature_names.len(),
                self.num_features()
            )));
        }
        if let Some(pos) = self.timestamps.windows(2).position(|p| p[1] <= p[0]) {
            return Err(Error::arg(format!(
                "timestamps not strictly increasing at row {}",
                pos + 1
            )));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != t {
                return Err(Error::shape(format!("{} labels for {} rows", labels.len(), t)));
            }
            if labels.iter().any(|&l| l > 1) {
                return Err(Error::arg("labels must be 0 or 1"));
            }
        }
        if !allow_missing && self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("values contain missing entries"));
        }
        Ok(())
    }

    /// Rows `start..end` as a new dataset with the same role.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            values: self.values.slice(s![start..end, ..]).to_owned(),
            timestamps: self.timestamps[start..end].to_vec(),
            labels: self.labels.as_ref().map(|l| l[start..end].to_vec()),
            role: self.role,
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Per-feature training extrema used for min-max scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub train_min: Vec<f64>,
    pub train_max: Vec<f64>,
}

impl NormalizationStats {
    pub fn fit(train: ArrayView2<f64>) -> Result<Self> {
        if train.nrows() == 0 {
            return Err(Error::arg("cannot fit normalization on an empty series"));
        }
        let mut train_min = Vec::with_capacity(train.ncols());
        let mut train_max = Vec::with_capacity(train.ncols());
        for col in train.columns() {
            train_min.push(col.fold(f64::INFINITY, |m, &x| m.min(x)));
            train_max.push(col.fold(f64::NEG_INFINITY, |m, &x| m.max(x)));
        }
        Ok(Self {
            train_min,
            train_max,
        })
    }
}

/// Fixed-length slice of a series; the unit of model input.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub data: Array2<f64>,
    pub start_index: usize,
    pub label: Option<Vec<u8>>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    /// Index of the last timestamp covered.
    pub fn end_index(&self) -> usize {
        self.start_index + self.data.nrows() - 1
    }

    pub fn contains_anomaly(&self) -> bool {
        self.label
            .as_ref()
            .is_some_and(|l| l.iter().any(|&v| v == 1))
    }
}

/// Replaces non-finite entries by linear interpolation between the nearest
/// valid neighbors; leading and trailing gaps take the nearest valid value.
pub fn fill_missing(raw: ArrayView2<f64>, feature_names: &[String]) -> Result<Array2<f64>> {
    let mut out = raw.to_owned();
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        let mut values: Vec<f64> = col.to_vec();
        let valid: Vec<bool> = values.iter().map(|v| v.is_finite()).collect();
        if !valid.iter().any(|&v| v) {
            let name = feature_names
                .get(j)
                .cloned()
                .unwrap_or_else(|| format!("#{j}"));
            return Err(Error::EmptyColumn(name));
        }
        interpolate_gaps(&mut values, &valid);
        for (dst, v) in col.iter_mut().zip(values) {
            *dst = v;
        }
    }
    Ok(out)
}

/// Fills every position with `keep[i] == false` from its kept neighbors.
/// At least one position must be kept.
fn interpolate_gaps(values: &mut [f64], keep: &[bool]) {
    let n = values.len();
    let mut prev: Option<usize> = None;
    let mut i = 0;
    while i < n {
        if keep[i] {
            prev = Some(i);
            i += 1;
            continue;
        }
        let gap_start = i;
        while i < n && !keep[i] {
            i += 1;
        }
        let next = (i < n).then_some(i);
        for g in gap_start..i {
            values[g] = match (prev, next) {
                (Some(a), Some(b)) => {
                    let frac = (g - a) as f64 / (b - a) as f64;
                    values[a] + frac * (values[b] - values[a])
                }
                (Some(a), None) => values[a],
                (None, Some(b)) => values[b],
                (None, None) => unreachable!("column has at least one kept value"),
            };
        }
    }
}

/// Block means over `k` consecutive rows; a trailing partial block is dropped.
pub fn downsample(series: ArrayView2<f64>, k: usize) -> Result<Array2<f64>> {
    if k == 0 {
        return Err(Error::arg("downsample factor must be positive"));
    }
    let blocks = series.nrows() / k;
    let mut out = Array2::zeros((blocks, series.ncols()));
    for (b, mut row) in out.rows_mut().into_iter().enumerate() {
        let block = series.slice(s![b * k..(b + 1) * k, ..]);
        row.assign(&(block.sum_axis(Axis(0)) / k as f64));
    }
    Ok(out)
}

/// Block-wise reduction of point labels: a block is anomalous if any member is.
pub fn downsample_labels(labels: &[u8], k: usize) -> Result<Vec<u8>> {
    if k == 0 {
        return Err(Error::arg("downsample factor must be positive"));
    }
    Ok(labels
        .chunks_exact(k)
        .map(|c| c.iter().copied().max().unwrap_or(0))
        .collect())
}

/// Keeps the first timestamp of every full block.
pub fn downsample_timestamps(ts: &[i64], k: usize) -> Result<Vec<i64>> {
    if k == 0 {
        return Err(Error::arg("downsample factor must be positive"));
    }
    Ok(ts.chunks_exact(k).map(|c| c[0]).collect())
}

/// `(x - min) / (max - min)` per feature; constant training columns map to 0.
pub fn minmax_normalize(series: ArrayView2<f64>, stats: &NormalizationStats) -> Result<Array2<f64>> {
    let d = series.ncols();
    if stats.train_min.len() != d || stats.train_max.len() != d {
        return Err(Error::shape(format!(
            "stats cover {} features, series has {}",
            stats.train_min.len(),
            d
        )));
    }
    let mut out = series.to_owned();
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        let (lo, hi) = (stats.train_min[j], stats.train_max[j]);
        let span = hi - lo;
        if span > 0.0 {
            col.mapv_inplace(|x| (x - lo) / span);
        } else {
            col.fill(0.0);
        }
    }
    Ok(out)
}

/// Quantile by linear interpolation between order statistics of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Tukey fences `[Q1 - m·IQR, Q3 + m·IQR]` of one column.
pub fn iqr_fences(column: &[f64], multiplier: f64) -> (f64, f64) {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    (q1 - multiplier * iqr, q3 + multiplier * iqr)
}

/// Removes points outside the 1.5·IQR fences of their column and interpolates
/// them from the surviving neighbors.
pub fn iqr_filter(series: ArrayView2<f64>) -> Array2<f64> {
    iqr_filter_with(series, 1.5)
}

pub fn iqr_filter_with(series: ArrayView2<f64>, multiplier: f64) -> Array2<f64> {
    let mut out = series.to_owned();
    for mut col in out.columns_mut() {
        let mut values = col.to_vec();
        if values.len() < 4 {
            continue;
        }
        let (lo, hi) = iqr_fences(&values, multiplier);
        let keep: Vec<bool> = values.iter().map(|&v| v >= lo && v <= hi).collect();
        if keep.iter().all(|&k| k) || !keep.iter().any(|&k| k) {
            continue;
        }
        interpolate_gaps(&mut values, &keep);
        for (dst, v) in col.iter_mut().zip(values) {
            *dst = v;
        }
    }
    out
}

/// Number of windows `make_windows` produces.
pub fn window_count(len: usize, w: usize, stride: usize) -> usize {
    if w == 0 || stride == 0 || w > len {
        0
    } else {
        (len - w) / stride + 1
    }
}

/// Sliding windows at starts `0, stride, 2·stride, ...`.
pub fn make_windows(
    series: ArrayView2<f64>,
    labels: Option<&[u8]>,
    w: usize,
    stride: usize,
) -> Result<Vec<Window>> {
    if w == 0 || stride == 0 {
        return Err(Error::arg("window length and stride must be positive"));
    }
    if w > series.nrows() {
        return Err(Error::arg(format!(
            "window length {w} exceeds series length {}",
            series.nrows()
        )));
    }
    if let Some(l) = labels {
        if l.len() != series.nrows() {
            return Err(Error::shape("labels and series differ in length"));
        }
    }
    Ok((0..window_count(series.nrows(), w, stride))
        .map(|i| {
            let start = i * stride;
            Window {
                data: series.slice(s![start..start + w, ..]).to_owned(),
                start_index: start,
                label: labels.map(|l| l[start..start + w].to_vec()),
            }
        })
        .collect())
}

/// Knobs of the preprocessing chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub downsample: usize,
    pub window: usize,
    pub train_stride: usize,
    pub score_stride: usize,
    pub iqr_multiplier: f64,
    pub iqr_filter: bool,
    /// Tail fraction of the training series held out for threshold calibration.
    pub validation_fraction: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            downsample: 5,
            window: 100,
            train_stride: 10,
            score_stride: 1,
            iqr_multiplier: 1.5,
            iqr_filter: true,
            validation_fraction: 0.1,
        }
    }
}

/// Output of [`preprocess`]: normalized splits plus the fitted statistics.
#[derive(Clone, Debug)]
pub struct Preprocessed {
    pub train: TimeSeriesDataset,
    pub validation: TimeSeriesDataset,
    pub test: TimeSeriesDataset,
    pub stats: NormalizationStats,
}

fn clean(ds: &TimeSeriesDataset, k: usize) -> Result<TimeSeriesDataset> {
    let filled = fill_missing(ds.values.view(), &ds.feature_names)?;
    Ok(TimeSeriesDataset {
        values: downsample(filled.view(), k)?,
        timestamps: downsample_timestamps(&ds.timestamps, k)?,
        labels: ds
            .labels
            .as_ref()
            .map(|l| downsample_labels(l, k))
            .transpose()?,
        role: ds.role,
        feature_names: ds.feature_names.clone(),
    })
}

/// Full chain: fill, downsample, split off validation, fit min-max on the
/// training part, normalize all splits, then IQR-filter the training part.
pub fn preprocess(
    train: &TimeSeriesDataset,
    test: &TimeSeriesDataset,
    cfg: &PreprocessConfig,
) -> Result<Preprocessed> {
    if train.num_features() != test.num_features() {
        return Err(Error::shape(format!(
            "train has {} features, test has {}",
            train.num_features(),
            test.num_features()
        )));
    }
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::config("validation_fraction must lie in [0, 1)"));
    }
    let train = clean(train, cfg.downsample)?;
    let mut test = clean(test, cfg.downsample)?;

    let n_val = (train.len() as f64 * cfg.validation_fraction).round() as usize;
    let split = train.len() - n_val;
    for (name, len) in [("training", split), ("test", test.len())] {
        if len < cfg.window {
            return Err(Error::arg(format!(
                "{name} split has {len} rows after downsampling, fewer than the window length {}",
                cfg.window
            )));
        }
    }
    let mut fit_part = train.slice(0, split);
    let mut validation = train.slice(split, train.len());
    validation.role = Role::Validation;

    let stats = NormalizationStats::fit(fit_part.values.view())?;
    fit_part.values = minmax_normalize(fit_part.values.view(), &stats)?;
    validation.values = minmax_normalize(validation.values.view(), &stats)?;
    test.values = minmax_normalize(test.values.view(), &stats)?;
    if cfg.iqr_filter {
        fit_part.values = iqr_filter_with(fit_part.values.view(), cfg.iqr_multiplier);
    }
    Ok(Preprocessed {
        train: fit_part,
        validation,
        test,
        stats,
    })
}
