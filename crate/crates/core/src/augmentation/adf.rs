//! Augmented Dickey-Fuller unit-root test with a constant term.
//!
//! Regression: `Δy_t = γ·y_{t-1} + Σ_i β_i·Δy_{t-i} + c`. The statistic is the
//! t-ratio of `γ`; its p-value comes from MacKinnon's (1994) response surface
//! for one integrated series.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdfResult {
    pub statistic: f64,
    pub p_value: f64,
    pub lags: usize,
    pub nobs: usize,
}

/// Default lag order `floor(4 · (n/100)^(1/4))`.
pub fn default_lags(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Runs the test with a fixed lag order. Returns `None` when the series is too
/// short for the regression or the design matrix is singular.
pub fn adf_test(y: &[f64], lags: Option<usize>) -> Option<AdfResult> {
    let n = y.len();
    let lags = lags.unwrap_or_else(|| default_lags(n));
    let k = lags + 2;
    if n < lags + 2 {
        return None;
    }
    let nobs = n - 1 - lags;
    if nobs <= k + 1 {
        return None;
    }
    let dy: Vec<f64> = y.windows(2).map(|p| p[1] - p[0]).collect();

    // rows correspond to dy[lags..]
    let mut x = DMatrix::<f64>::zeros(nobs, k);
    let mut target = DVector::<f64>::zeros(nobs);
    for r in 0..nobs {
        let t = r + lags; // index into dy
        target[r] = dy[t];
        x[(r, 0)] = y[t];
        for i in 1..=lags {
            x[(r, i)] = dy[t - i];
        }
        x[(r, k - 1)] = 1.0;
    }
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &target;
    let chol = xtx.clone().cholesky()?;
    let beta = chol.solve(&xty);
    let resid = &target - &x * &beta;
    let rss = resid.dot(&resid);
    let sigma2 = rss / (nobs - k) as f64;
    let inv = chol.inverse();
    let se = (sigma2 * inv[(0, 0)]).sqrt();
    if !se.is_finite() || se == 0.0 {
        return None;
    }
    let statistic = beta[0] / se;
    Some(AdfResult {
        statistic,
        p_value: mackinnon_p_value(statistic),
        lags,
        nobs,
    })
}

const TAU_MAX: f64 = 2.74;
const TAU_MIN: f64 = -18.83;
const TAU_STAR: f64 = -1.61;
const SMALL_P: [f64; 3] = [2.1659, 1.4412, 0.038269];
const LARGE_P: [f64; 4] = [1.7339, 0.93202, -0.12745, -0.010368];

/// Approximate asymptotic p-value of the constant-only ADF statistic.
pub fn mackinnon_p_value(tau: f64) -> f64 {
    if tau > TAU_MAX {
        return 1.0;
    }
    if tau < TAU_MIN {
        return 0.0;
    }
    let coef: &[f64] = if tau <= TAU_STAR { &SMALL_P } else { &LARGE_P };
    let poly = coef.iter().rev().fold(0.0, |acc, c| acc * tau + c);
    Normal::new(0.0, 1.0).expect("standard normal").cdf(poly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_is_monotone_in_statistic() {
        let mut prev = 0.0;
        for i in 0..200 {
            let tau = -10.0 + i as f64 * 0.06;
            let p = mackinnon_p_value(tau);
            assert!(p >= prev - 1e-12, "p not monotone at {tau}");
            prev = p;
        }
    }

    #[test]
    fn too_short_series_is_rejected() {
        assert!(adf_test(&[1.0, 2.0, 0.5], Some(1)).is_none());
        assert!(adf_test(&[1.0; 40], Some(1)).is_none());
    }

    #[test]
    fn default_lag_rule() {
        assert_eq!(default_lags(100), 4);
        assert_eq!(default_lags(32), 3);
    }
}
