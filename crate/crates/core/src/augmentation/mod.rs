//! Positive samples from an ADF-bounded temporal neighborhood and negative
//! samples from learnable mask generators.

pub mod adf;

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Bound, ParamId, ParamStore, Tape, Var};
use crate::preprocessing::Window;

pub use adf::{adf_test, AdfResult};

/// Neighborhood search knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeighborhoodConfig {
    /// The neighborhood stops growing once the ADF p-value exceeds this.
    pub adf_pvalue_threshold: f64,
    pub eta_max: usize,
    /// ADF lag order; `None` uses `floor(4·(n/100)^(1/4))`.
    pub adf_lags: Option<usize>,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        Self {
            adf_pvalue_threshold: 0.01,
            eta_max: 3,
            adf_lags: None,
        }
    }
}

/// Neighborhood of one anchor: center, scale and window length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborhoodSpec {
    pub center_t: usize,
    pub eta: usize,
    pub delta: usize,
    pub adf_pvalue_threshold: f64,
}

impl NeighborhoodSpec {
    /// Segment `[t - η·δ/2, t + η·δ/2]` clipped to `0..len`, as a half-open range.
    pub fn bounds(&self, len: usize) -> (usize, usize) {
        segment_bounds(self.center_t, self.eta, self.delta, len)
    }

    /// Standard deviation of the positive-center distribution, floored at one step.
    pub fn sigma(&self) -> f64 {
        ((self.eta * self.delta) as f64).max(1.0)
    }
}

fn segment_bounds(t: usize, eta: usize, delta: usize, len: usize) -> (usize, usize) {
    let half = eta * delta / 2;
    let lo = t.saturating_sub(half);
    let hi = (t + half + 1).min(len);
    (lo, hi)
}

/// Largest p-value over the non-constant features of a segment; `None` if any
/// feature is too short to test.
fn segment_p_value(series: ArrayView2<f64>, lo: usize, hi: usize, lags: Option<usize>) -> Option<f64> {
    let mut worst: f64 = 0.0;
    for col in series.slice(s![lo..hi, ..]).columns() {
        let values: Vec<f64> = col.to_vec();
        let first = values[0];
        if values.iter().all(|&v| v == first) {
            continue;
        }
        let res = adf_test(&values, lags)?;
        worst = worst.max(res.p_value);
    }
    Some(worst)
}

/// Widest `η` whose neighborhood stays stationary under the ADF test, starting at 1.
pub fn find_neighborhood_eta(
    series: ArrayView2<f64>,
    t: usize,
    delta: usize,
    cfg: &NeighborhoodConfig,
) -> usize {
    let len = series.nrows();
    let mut best = 1;
    for eta in 1..=cfg.eta_max.max(1) {
        let (lo, hi) = segment_bounds(t, eta, delta, len);
        let Some(p) = segment_p_value(series, lo, hi, cfg.adf_lags) else {
            break;
        };
        if p > cfg.adf_pvalue_threshold {
            break;
        }
        best = eta;
    }
    best
}

/// Draws `n` window starts whose centers follow `Normal(t, σ)`, rounded and
/// clipped so every window fits in a series of length `len`.
pub fn sample_positive_starts(
    len: usize,
    spec: &NeighborhoodSpec,
    n: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let w = spec.delta;
    let max_start = len.saturating_sub(w);
    let normal = Normal::new(spec.center_t as f64, spec.sigma()).expect("positive sigma");
    (0..n)
        .map(|_| {
            let center = normal.sample(rng).round();
            let start = center - (w / 2) as f64;
            start.clamp(0.0, max_start as f64) as usize
        })
        .collect()
}

/// Positive windows around `spec.center_t`.
pub fn sample_positives(
    series: ArrayView2<f64>,
    spec: &NeighborhoodSpec,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Window>> {
    if spec.delta == 0 || spec.delta > series.nrows() {
        return Err(Error::arg(format!(
            "window length {} does not fit series of length {}",
            spec.delta,
            series.nrows()
        )));
    }
    Ok(sample_positive_starts(series.nrows(), spec, n, rng)
        .into_iter()
        .map(|start| Window {
            data: series.slice(s![start..start + spec.delta, ..]).to_owned(),
            start_index: start,
            label: None,
        })
        .collect())
}

/// One mask generator: two affine layers over the flattened window.
#[derive(Clone, Debug)]
pub struct MaskGenerator {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    window: usize,
    features: usize,
    slope: f64,
}

impl MaskGenerator {
    /// Registers generator `index` under `generator.{index}.*`.
    pub fn new(
        index: usize,
        window: usize,
        features: usize,
        slope: f64,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Self {
        let flat = window * features;
        let hidden = (flat / 2).max(1);
        let pre = format!("generator.{index}");
        Self {
            w1: store.add_uniform(format!("{pre}.fc1.weight"), (flat, hidden), flat, rng),
            b1: store.add_zeros(format!("{pre}.fc1.bias"), (1, hidden)),
            w2: store.add_uniform(format!("{pre}.fc2.weight"), (hidden, flat), hidden, rng),
            b2: store.add_zeros(format!("{pre}.fc2.bias"), (1, flat)),
            window,
            features,
            slope,
        }
    }

    pub fn hidden_width(&self, store: &ParamStore) -> usize {
        store.get(self.w1).ncols()
    }

    /// Mask node of shape `w×d` with entries in `(0, 1)`.
    pub fn mask(&self, tape: &mut Tape, p: &Bound, x: Var) -> Var {
        let flat = tape.reshape(x, 1, self.window * self.features);
        let h = tape.matmul(flat, p[self.w1]);
        let h = tape.add_row(h, p[self.b1]);
        let h = tape.leaky_relu(h, self.slope);
        let o = tape.matmul(h, p[self.w2]);
        let o = tape.add_row(o, p[self.b2]);
        let m = tape.sigmoid(o);
        tape.reshape(m, self.window, self.features)
    }

    /// Negative sample `M ∘ x`.
    pub fn negative(&self, tape: &mut Tape, p: &Bound, x: Var) -> Var {
        let m = self.mask(tape, p, x);
        tape.mul(m, x)
    }

    pub fn generate_mask(&self, store: &ParamStore, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.dim() != (self.window, self.features) {
            return Err(Error::shape(format!(
                "window is {:?}, generator expects {:?}",
                x.dim(),
                (self.window, self.features)
            )));
        }
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let xv = tape.constant(x.to_owned());
        let m = self.mask(&mut tape, &p, xv);
        Ok(tape.value(m).to_owned())
    }
}

/// One negative window per generator.
pub fn generate_negatives(
    generators: &[MaskGenerator],
    store: &ParamStore,
    x: ArrayView2<f64>,
) -> Result<Vec<Array2<f64>>> {
    generators
        .iter()
        .map(|g| Ok(g.generate_mask(store, x)? * &x))
        .collect()
}

/// Pairwise Frobenius distances between the masks of all generators on `x`,
/// listed for pairs `(i, j)` with `i < j`.
pub fn mask_diversity(
    generators: &[MaskGenerator],
    store: &ParamStore,
    x: ArrayView2<f64>,
) -> Result<Vec<f64>> {
    let masks = generators
        .iter()
        .map(|g| g.generate_mask(store, x))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for i in 0..masks.len() {
        for j in i + 1..masks.len() {
            let d = (&masks[i] - &masks[j]).iter().map(|v| v * v).sum::<f64>().sqrt();
            out.push(d);
        }
    }
    Ok(out)
}
