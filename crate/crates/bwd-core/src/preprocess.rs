// SPDX-License-Identifier: MIT OR Apache-2.0

//! Noise-scale estimation and light preprocessing.
//!
//! The detector needs a noise scale that ignores mean shifts. The default
//! estimator subtracts a short moving average first, so only within-window
//! variation is left; differencing-based and plain-sample estimators are
//! available as alternatives. `local_median_bin` condenses very long
//! sequences (tens of millions of points) into bin medians before
//! detection.

use crate::error::{BwdError, Result};
use crate::model::Sequence;
use crate::TOL_NUM;

/// Default half-width of the moving-average window.
pub const DEFAULT_WINDOW: usize = 10;

/// How a noise scale was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaMethod {
    /// Root mean square of residuals around a moving average of half-width
    /// `window`, truncated at the sequence ends.
    WindowMean { window: usize },
    /// Median absolute first difference, rescaled to be consistent for
    /// normal noise.
    Mad,
    /// Plain sample standard deviation. Inflated by any real mean shifts,
    /// so only appropriate when those are small.
    Sample,
}

/// A noise-scale estimate together with the method that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub sigma_hat: f64,
    pub method: SigmaMethod,
}

/// Moving average with half-width `h`, windows truncated at both ends:
/// entry `i` averages the observations within `h` positions of `i` that
/// actually exist, divided by however many that is.
pub fn window_mean(seq: &Sequence, h: usize) -> Result<Vec<f64>> {
    if h < 1 {
        return Err(BwdError::InvalidInput("window must be >= 1; got 0".into()));
    }
    let y = seq.values();
    let n = y.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, &v) in y.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h).min(n - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
        })
        .collect())
}

/// Observations minus their moving average: `y - window_mean(y, h)`.
pub fn residuals(seq: &Sequence, h: usize) -> Result<Vec<f64>> {
    let means = window_mean(seq, h)?;
    Ok(seq
        .values()
        .iter()
        .zip(means)
        .map(|(&y, m)| y - m)
        .collect())
}

/// Estimate the noise scale. Needs at least two observations and errors
/// with [`BwdError::ZeroVariance`] when the estimate lands at or below
/// numeric tolerance (constant input, say).
pub fn estimate_sigma(seq: &Sequence, method: SigmaMethod) -> Result<VarianceEstimate> {
    let n = seq.len();
    if n < 2 {
        return Err(BwdError::InvalidInput(format!(
            "variance estimation needs at least 2 observations; got {n}"
        )));
    }
    let sigma_hat = match method {
        SigmaMethod::WindowMean { window } => {
            let r = residuals(seq, window)?;
            (r.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt()
        }
        SigmaMethod::Mad => {
            let diffs: Vec<f64> = seq.values().windows(2).map(|w| (w[1] - w[0]).abs()).collect();
            median(&diffs) / (std::f64::consts::SQRT_2 * 0.6745)
        }
        SigmaMethod::Sample => {
            let mean = seq.values().iter().sum::<f64>() / n as f64;
            let ss = seq.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            (ss / (n - 1) as f64).sqrt()
        }
    };
    if sigma_hat <= TOL_NUM {
        return Err(BwdError::ZeroVariance(format!(
            "estimated sigma is {sigma_hat}; the sequence is (numerically) constant"
        )));
    }
    Ok(VarianceEstimate { sigma_hat, method })
}

/// Collapse the sequence into medians of consecutive bins of `bin` points.
/// A trailing partial bin is dropped; positions, if present, map each bin
/// to the coordinate of its first point; the label is kept.
pub fn local_median_bin(seq: &Sequence, bin: usize) -> Result<Sequence> {
    if bin < 1 {
        return Err(BwdError::InvalidInput("bin must be >= 1; got 0".into()));
    }
    let n = seq.len();
    if bin > n {
        return Err(BwdError::BinLargerThanSequence { bin, n });
    }
    let bins = n / bin;
    let values: Vec<f64> = (0..bins)
        .map(|k| median(&seq.values()[k * bin..(k + 1) * bin]))
        .collect();
    let mut out = Sequence::new(values)?;
    if let Some(pos) = seq.positions() {
        let first: Vec<i64> = (0..bins).map(|k| pos[k * bin]).collect();
        out = out.with_positions(first)?;
    }
    if let Some(label) = seq.label() {
        out = out.with_label(label);
    }
    Ok(out)
}

/// Median with the midpoint convention for even counts.
fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}
