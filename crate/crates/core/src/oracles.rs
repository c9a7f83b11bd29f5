//! Brute-force reference implementations used by the test suites.
//!
//! Each oracle is written independently of the code it checks: plain loops,
//! no shared helpers, clarity over speed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::TripletBatch;

/// Point adjustment by scanning outward from every labeled point.
pub fn oracle_point_adjust(y: &[u8], y_hat: &[u8]) -> Vec<u8> {
    oracle_pa_percent_k(y, y_hat, None)
}

/// PA%k by locating each true segment from scratch; `None` means plain PA.
pub fn oracle_pa_percent_k(y: &[u8], y_hat: &[u8], k: Option<f64>) -> Vec<u8> {
    let n = y.len();
    let mut out = y_hat.to_vec();
    for t in 0..n {
        if y[t] != 1 {
            continue;
        }
        let mut lo = t;
        while lo > 0 && y[lo - 1] == 1 {
            lo -= 1;
        }
        let mut hi = t;
        while hi + 1 < n && y[hi + 1] == 1 {
            hi += 1;
        }
        let mut hits = 0;
        for s in lo..=hi {
            if y_hat[s] == 1 {
                hits += 1;
            }
        }
        let size = hi - lo + 1;
        let detected = match k {
            None => hits >= 1,
            Some(k) => (hits as f64) * 100.0 > k * size as f64,
        };
        if detected {
            out[t] = 1;
        }
    }
    out
}

/// F1 from a 2×2 confusion table.
pub fn oracle_f1(y: &[u8], y_hat: &[u8]) -> f64 {
    let mut table = [[0usize; 2]; 2];
    for i in 0..y.len() {
        table[y[i] as usize][y_hat[i] as usize] += 1;
    }
    let tp = table[1][1] as f64;
    let fp = table[0][1] as f64;
    let fn_ = table[1][0] as f64;
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Which adjustment an exhaustive threshold scan evaluates.
#[derive(Clone, Copy, Debug)]
pub enum OracleMetric {
    F1,
    PaK(f64),
    Pa,
}

pub fn oracle_metric(metric: OracleMetric, y: &[u8], y_hat: &[u8]) -> f64 {
    let adjusted = match metric {
        OracleMetric::F1 => y_hat.to_vec(),
        OracleMetric::PaK(k) => oracle_pa_percent_k(y, y_hat, Some(k)),
        OracleMetric::Pa => oracle_point_adjust(y, y_hat),
    };
    oracle_f1(y, &adjusted)
}

/// Tries every distinct score above the validation mean as a threshold.
/// Returns `(threshold, metric)`, preferring the larger threshold on ties.
pub fn oracle_threshold(scores: &[f64], y: &[u8], validation: &[f64], metric: OracleMetric) -> Option<(f64, f64)> {
    let mut total = 0.0;
    for v in validation {
        total += v;
    }
    let floor = total / validation.len() as f64;
    let mut best: Option<(f64, f64)> = None;
    for &c in scores {
        if c <= floor {
            continue;
        }
        let y_hat: Vec<u8> = scores.iter().map(|&s| if s > c { 1 } else { 0 }).collect();
        let m = oracle_metric(metric, y, &y_hat);
        best = match best {
            None => Some((c, m)),
            Some((bc, bm)) if m > bm || (m == bm && c > bc) => Some((c, m)),
            keep => keep,
        };
    }
    best
}

fn oracle_cos_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    (1.0 - ab / (aa.sqrt() * bb.sqrt())) / 2.0
}

fn oracle_softmax(z: &[f64]) -> Vec<f64> {
    let mut m = z[0];
    for &v in z {
        if v > m {
            m = v;
        }
    }
    let mut e = Vec::new();
    let mut s = 0.0;
    for &v in z {
        e.push((v - m).exp());
        s += (v - m).exp();
    }
    for v in e.iter_mut() {
        *v /= s;
    }
    e
}

/// `(L_comp, L_sep, L_reg, total)` by direct scalar loops.
pub fn oracle_losses(batch: &TripletBatch, margins: &[f64], lambda: f64) -> (f64, f64, f64, f64) {
    let b = batch.triplets.len() as f64;
    let (mut comp, mut sep, mut reg) = (0.0, 0.0, 0.0);
    for t in &batch.triplets {
        let n = t.positives.len() as f64;
        for i in 0..t.positives.len() {
            let dp = oracle_cos_dist(&t.anchor, &t.positives[i]);
            let dn = oracle_cos_dist(&t.anchor, &t.negatives[i]);
            comp += dp / n;
            let h = dp - dn + margins[i];
            let hinge = if h > 0.0 { h } else { 0.0 };
            sep += hinge / n;
            let p = oracle_softmax(&t.positives[i]);
            let q = oracle_softmax(&t.negatives[i]);
            let mut kl = 0.0;
            for k in 0..p.len() {
                kl += p[k] * p[k].ln() - p[k] * q[k].ln();
            }
            reg += kl / n;
        }
    }
    let (comp, sep, reg) = (comp / b, sep / b, reg / b);
    (comp, sep, reg, comp + sep + lambda * reg)
}

/// Nearest-center adjusted cosine distance divided by `‖z‖`.
pub fn oracle_anomaly_score(z: &[f64], centers: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for c in centers {
        let d = oracle_cos_dist(c, z);
        if d < best {
            best = d;
        }
    }
    let mut n = 0.0;
    for v in z {
        n += v * v;
    }
    best / n.sqrt()
}

/// Spherical 2-means restarted from every pair of points; returns the centers
/// with the largest total cosine similarity.
pub fn oracle_two_means(points: &[Vec<f64>]) -> [Vec<f64>; 2] {
    let unit = |v: &[f64]| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let pts: Vec<Vec<f64>> = points.iter().map(|p| unit(p)).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut best: Option<(f64, [Vec<f64>; 2])> = None;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let mut c = [pts[i].clone(), pts[j].clone()];
            for _ in 0..200 {
                let mut sums = [vec![0.0; pts[0].len()], vec![0.0; pts[0].len()]];
                for p in &pts {
                    let k = usize::from(dot(&c[1], p) > dot(&c[0], p));
                    for (s, v) in sums[k].iter_mut().zip(p) {
                        *s += v;
                    }
                }
                let next = [unit(&sums[0]), unit(&sums[1])];
                if next[0].iter().any(|v| !v.is_finite()) || next[1].iter().any(|v| !v.is_finite()) {
                    break;
                }
                if next == c {
                    break;
                }
                c = next;
            }
            let obj: f64 = pts.iter().map(|p| dot(&c[0], p).max(dot(&c[1], p))).sum();
            if best.as_ref().map_or(true, |(b, _)| obj > *b) {
                best = Some((obj, c));
            }
        }
    }
    best.expect("at least two points").1
}

/// Graph attention weights between feature columns of `h` (`w×d`), with
/// `a = [a_src; a_dst]` of length `2w`: `α_ij = softmax_j(LeakyReLU(a_src·h_i + a_dst·h_j))`.
pub fn oracle_gat_alpha(h: &[Vec<f64>], a: &[f64], slope: f64) -> Vec<Vec<f64>> {
    let w = h.len();
    let d = h[0].len();
    let mut alpha = Vec::new();
    for i in 0..d {
        let mut e = Vec::new();
        for j in 0..d {
            let mut s = 0.0;
            for t in 0..w {
                s += a[t] * h[t][i] + a[w + t] * h[t][j];
            }
            e.push(if s >= 0.0 { s } else { slope * s });
        }
        alpha.push(oracle_softmax(&e));
    }
    alpha
}

/// Mask generator by hand: `sigmoid(LeakyReLU(x·W1 + b1)·W2 + b2)` over the
/// row-major flattened window, reshaped back to `w×d`.
pub fn oracle_mask(
    x: &[Vec<f64>],
    w1: &[Vec<f64>],
    b1: &[f64],
    w2: &[Vec<f64>],
    b2: &[f64],
    slope: f64,
) -> Vec<Vec<f64>> {
    let mut flat = Vec::new();
    for row in x {
        for &v in row {
            flat.push(v);
        }
    }
    let mut hidden = vec![0.0; b1.len()];
    for k in 0..hidden.len() {
        let mut s = b1[k];
        for i in 0..flat.len() {
            s += flat[i] * w1[i][k];
        }
        hidden[k] = if s >= 0.0 { s } else { slope * s };
    }
    let d = x[0].len();
    let mut out = vec![vec![0.0; d]; x.len()];
    for o in 0..flat.len() {
        let mut s = b2[o];
        for k in 0..hidden.len() {
            s += hidden[k] * w2[k][o];
        }
        out[o / d][o % d] = 1.0 / (1.0 + (-s).exp());
    }
    out
}

/// Central differences `(f(x + h·e_i) - f(x - h·e_i)) / 2h` at the given coordinates.
pub fn finite_difference_grad(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    coords: &[usize],
    step: f64,
) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(coords.len());
    for &i in coords {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f(&probe);
        probe[i] = orig - step;
        let down = f(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::arg(format!("non-finite function value at coordinate {i}")));
        }
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Relative error with a floor on the denominator so near-zero gradients compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// One frozen oracle result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCase {
    pub operation: String,
    pub input: serde_json::Value,
    pub expected: serde_json::Value,
    pub tolerance: f64,
    pub provenance: String,
}

/// Set to `1` to rewrite golden files from the oracles instead of comparing.
pub const REGENERATE_ENV: &str = "LATAD_REGEN_GOLDEN";

pub fn regenerate_requested() -> bool {
    std::env::var(REGENERATE_ENV).is_ok_and(|v| v == "1")
}

pub fn golden_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.json"))
}

pub fn read_golden(path: &Path) -> Result<Vec<OracleCase>> {
    let bytes = std::fs::read(path).map_err(|_| Error::MissingInput {
        path: path.into(),
        hint: format!("run the tests with {REGENERATE_ENV}=1 to create it"),
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn write_golden(path: &Path, cases: &[OracleCase]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(cases)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
