//! Root-cause attribution from input gradients of the anomaly score.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractor::FeatureExtractor;
use crate::nn::{ParamStore, Tape};
use crate::scoring::{anomaly_score_on_tape, ReferenceModel};

/// Raw and per-feature standardized gradients of one window, both `w×d`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMap {
    pub g: Array2<f64>,
    pub g_norm: Array2<f64>,
}

/// `∂A(x)/∂x` by reverse-mode differentiation.
pub fn input_gradients(
    extractor: &FeatureExtractor,
    store: &ParamStore,
    reference: &ReferenceModel,
    x: ArrayView2<f64>,
) -> Result<GradientMap> {
    extractor.check_window(x)?;
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let xv = tape.leaf(x.to_owned().into_shared());
    let z = extractor.forward(&mut tape, &p, xv);
    let score = anomaly_score_on_tape(&mut tape, z, reference)?;
    let grads = tape.backward(score);
    let g = grads.get_or_zeros(xv, x.dim());
    let g_norm = normalize_gradients(g.view());
    Ok(GradientMap { g, g_norm })
}

/// Standardizes each column with its mean and population standard deviation;
/// constant columns become zeros.
pub fn normalize_gradients(g: ArrayView2<f64>) -> Array2<f64> {
    let mut out = g.to_owned();
    let n = g.nrows() as f64;
    for mut col in out.columns_mut() {
        let mu = col.sum() / n;
        let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd > 0.0 && sd.is_finite() {
            col.mapv_inplace(|v| (v - mu) / sd);
        } else {
            col.fill(0.0);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub index: usize,
    pub name: Option<String>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootCauseReport {
    pub ranked: Vec<RankedFeature>,
    pub top_k: usize,
    /// Dominant feature at every timestep of the window.
    pub per_timestep: Vec<usize>,
    pub window_start: Option<usize>,
}

impl RootCauseReport {
    pub fn with_names(mut self, names: &[String]) -> Self {
        for r in &mut self.ranked {
            r.name = names.get(r.index).cloned();
        }
        self
    }

    /// Ranked table, one feature per line.
    pub fn render(&self) -> String {
        let mut s = format!("{:<6}{:<24}{:>6}\n", "rank", "feature", "count");
        for (i, r) in self.ranked.iter().enumerate() {
            let name = r.name.clone().unwrap_or_else(|| format!("#{}", r.index));
            s.push_str(&format!("{:<6}{:<24}{:>6}\n", i + 1, name, r.count));
        }
        s
    }
}

/// Counts how often each feature has the largest `|g'|` and returns the `top_k`
/// most frequent. Ties go to the lower index.
pub fn root_causes(g_norm: ArrayView2<f64>, top_k: usize) -> Result<RootCauseReport> {
    let d = g_norm.ncols();
    if top_k > d {
        return Err(Error::arg(format!("top_k {top_k} exceeds {d} features")));
    }
    let per_timestep: Vec<usize> = g_norm
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if v.abs() > row[best].abs() {
                    best = i;
                }
            }
            best
        })
        .collect();
    let mut counts = vec![0usize; d];
    for &r in &per_timestep {
        counts[r] += 1;
    }
    let mut order: Vec<usize> = (0..d).filter(|&i| counts[i] > 0).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order.truncate(top_k);
    Ok(RootCauseReport {
        ranked: order
            .into_iter()
            .map(|index| RankedFeature {
                index,
                name: None,
                count: counts[index],
            })
            .collect(),
        top_k,
        per_timestep,
        window_start: None,
    })
}

/// Gradients plus ranking for one window.
pub fn diagnose_window(
    extractor: &FeatureExtractor,
    store: &ParamStore,
    reference: &ReferenceModel,
    x: ArrayView2<f64>,
    top_k: usize,
) -> Result<(GradientMap, RootCauseReport)> {
    let map = input_gradients(extractor, store, reference, x)?;
    let report = root_causes(map.g_norm.view(), top_k.min(x.ncols()))?;
    Ok((map, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn standardization() {
        let g = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let n = normalize_gradients(g.view());
        let sd = (2.0f64 / 3.0).sqrt();
        assert!((n[[0, 0]] + 1.0 / sd).abs() < 1e-12);
        assert_eq!(n[[1, 0]], 0.0);
        assert_eq!(n.column(1).to_vec(), vec![0.0; 3]);
    }

    #[test]
    fn counting_example() {
        // R(t) = [2, 2, 1, 3]
        let g = array![
            [0.0, 0.1, 0.9, 0.0],
            [0.0, 0.1, -0.9, 0.0],
            [0.0, 0.8, 0.1, 0.0],
            [0.0, 0.1, 0.1, 0.5]
        ];
        let r = root_causes(g.view(), 3).unwrap();
        assert_eq!(r.per_timestep, vec![2, 2, 1, 3]);
        let ranked: Vec<_> = r.ranked.iter().map(|f| (f.index, f.count)).collect();
        assert_eq!(ranked, vec![(2, 2), (1, 1), (3, 1)]);
        assert!(root_causes(g.view(), 5).is_err());
    }

    #[test]
    fn ties_go_low() {
        let g = array![[1.0, -1.0]];
        assert_eq!(root_causes(g.view(), 1).unwrap().ranked[0].index, 0);
    }
}
