// SPDX-License-Identifier: MIT OR Apache-2.0

//! Domain types for the normal mean change-point model, plus an exact
//! (dynamic-programming) segmentation oracle used to validate the fast
//! engine.
//!
//! Indexing convention: observations are 1-based in reports. A change point
//! `t` means "segment ends at index `t`", so `t` ranges over `1..n-1` and a
//! result with change points `[t1, t2]` has segments `1..=t1`,
//! `t1+1..=t2`, `t2+1..=n`.

use crate::error::{BwdError, Result};

/// Largest sequence length the exact oracle will accept; its dynamic
/// program is quadratic in `n` and exists for cross-checking, not for use
/// on real data.
pub const ORACLE_MAX_N: usize = 500;

/// An observed sequence: values, optional integer coordinates (genomic
/// positions), optional label (chromosome or sample name).
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    values: Vec<f64>,
    positions: Option<Vec<i64>>,
    label: Option<String>,
}

impl Sequence {
    /// Wrap raw values. All values must be finite and there must be at
    /// least one.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(BwdError::InvalidInput(
                "sequence must hold at least one value".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(BwdError::InvalidInput(format!(
                "value at index {} is not finite",
                i + 1
            )));
        }
        Ok(Self {
            values,
            positions: None,
            label: None,
        })
    }

    /// Attach coordinates; they must be strictly increasing and as many as
    /// there are values.
    pub fn with_positions(mut self, positions: Vec<i64>) -> Result<Self> {
        if positions.len() != self.values.len() {
            return Err(BwdError::InvalidInput(format!(
                "got {} positions for {} values",
                positions.len(),
                self.values.len()
            )));
        }
        if let Some(w) = positions.windows(2).position(|w| w[0] >= w[1]) {
            return Err(BwdError::InvalidInput(format!(
                "positions must be strictly increasing; entry {} is not",
                w + 2
            )));
        }
        self.positions = Some(positions);
        Ok(self)
    }

    /// Attach a label (chromosome or sample name).
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn positions(&self) -> Option<&[i64]> {
        self.positions.as_deref()
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty value lists
    }
}

/// Sufficient statistics of a group of observations. Groups merge by adding
/// these up, so segment means and within-group errors never need a second
/// pass over the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    count: usize,
    sum: f64,
    sumsq: f64,
}

impl GroupStats {
    /// Statistics of a singleton group.
    pub fn from_value(y: f64) -> Self {
        Self {
            count: 1,
            sum: y,
            sumsq: y * y,
        }
    }

    /// Statistics of a group holding all of `values`.
    pub fn from_values(values: &[f64]) -> Self {
        let mut acc = Self {
            count: 0,
            sum: 0.0,
            sumsq: 0.0,
        };
        for &y in values {
            acc.count += 1;
            acc.sum += y;
            acc.sumsq += y * y;
        }
        acc
    }

    /// Statistics of the union of two disjoint groups.
    pub fn merge(self, other: Self) -> Self {
        Self {
            count: self.count + other.count,
            sum: self.sum + other.sum,
            sumsq: self.sumsq + other.sumsq,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    /// Group mean. Panics on an empty accumulator.
    pub fn mean(&self) -> f64 {
        assert!(self.count > 0, "mean of an empty group");
        self.sum / self.count as f64
    }

    /// Within-group sum of squared errors around the group mean, clamped
    /// at zero (cancellation can push the closed form a hair negative).
    pub fn sse(&self) -> f64 {
        assert!(self.count > 0, "sse of an empty group");
        (self.sumsq - self.sum * self.sum / self.count as f64).max(0.0)
    }
}

/// One executed merge: which iteration, which boundary disappeared (the
/// last 1-based index of the left group), and the standardized statistic
/// of the merged pair at that moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeRecord {
    pub iteration: usize,
    pub boundary: usize,
    pub statistic: f64,
}

/// Classification of a final segment against the baseline mean in epidemic
/// mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentCall {
    Baseline,
    Variant,
}

/// Outcome of a detection run.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Change points: last 1-based index of each segment but the final
    /// one; strictly increasing, each in `1..n-1`.
    pub change_points: Vec<usize>,
    /// Mean of each segment, left to right (one more than change points).
    /// In epidemic mode, segments judged to sit on the baseline report the
    /// baseline mean itself.
    pub segment_means: Vec<f64>,
    /// Per-segment baseline/variant calls; present only in epidemic mode.
    pub calls: Option<Vec<SegmentCall>>,
    /// Every executed merge, in order.
    pub trace: Vec<MergeRecord>,
    /// The noise scale the run used.
    pub sigma_hat: f64,
}

impl DetectionResult {
    /// Segments as 1-based inclusive `(start, end)` pairs, left to right.
    pub fn segments(&self, n: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.change_points.len() + 1);
        let mut start = 1;
        for &t in &self.change_points {
            out.push((start, t));
            start = t + 1;
        }
        out.push((start, n));
        out
    }
}

/// Exact minimal-SSE segmentation of `seq` into `k + 1` segments, i.e.
/// with exactly `k` change points. Ties go to the lexicographically
/// smallest change-point vector. Capped at [`ORACLE_MAX_N`] observations;
/// this is the reference the fast engine is tested against.
pub fn brute_force_segment(seq: &Sequence, k: usize) -> Result<DetectionResult> {
    let n = seq.len();
    if n > ORACLE_MAX_N {
        return Err(BwdError::OracleScaleExceeded {
            n,
            cap: ORACLE_MAX_N,
        });
    }
    if k > n - 1 {
        return Err(BwdError::InvalidInput(format!(
            "cannot place {k} change points in {n} observations"
        )));
    }

    let y = seq.values();
    let mut pre_sum = vec![0.0; n + 1];
    let mut pre_sq = vec![0.0; n + 1];
    for (i, &v) in y.iter().enumerate() {
        pre_sum[i + 1] = pre_sum[i] + v;
        pre_sq[i + 1] = pre_sq[i] + v * v;
    }
    // SSE of the 0-based inclusive range [i, j].
    let sse = |i: usize, j: usize| -> f64 {
        let len = (j - i + 1) as f64;
        let s = pre_sum[j + 1] - pre_sum[i];
        let q = pre_sq[j + 1] - pre_sq[i];
        (q - s * s / len).max(0.0)
    };

    let segments = k + 1;
    // suffix[i]: minimal cost of splitting y[i..] into the current number
    // of segments; arg[s][i]: the 0-based end of the first of those `s`
    // segments. Scanning ends in increasing order with a strict `<` keeps
    // the smallest end on ties, which makes the reconstructed change-point
    // vector lexicographically smallest overall.
    let mut suffix = vec![0.0; n];
    for i in 0..n {
        suffix[i] = sse(i, n - 1);
    }
    let mut args: Vec<Vec<u32>> = Vec::with_capacity(segments.saturating_sub(1));
    for s in 2..=segments {
        let mut next = vec![f64::INFINITY; n];
        let mut arg = vec![0u32; n];
        // With `s` segments left, the first one can end no later than
        // index n - s (0-based), leaving one point per remaining segment.
        for i in 0..=(n - s) {
            let mut best = f64::INFINITY;
            let mut best_end = i;
            for end in i..=(n - s) {
                let cost = sse(i, end) + suffix[end + 1];
                if cost < best {
                    best = cost;
                    best_end = end;
                }
            }
            next[i] = best;
            arg[i] = best_end as u32;
        }
        suffix = next;
        args.push(arg);
    }

    let mut change_points = Vec::with_capacity(k);
    let mut start = 0usize;
    for s in (2..=segments).rev() {
        let end = args[s - 2][start] as usize;
        change_points.push(end + 1); // report 1-based
        start = end + 1;
    }

    let mut segment_means = Vec::with_capacity(segments);
    let mut lo = 0usize;
    for &t in &change_points {
        segment_means.push((pre_sum[t] - pre_sum[lo]) / (t - lo) as f64);
        lo = t;
    }
    segment_means.push((pre_sum[n] - pre_sum[lo]) / (n - lo) as f64);

    Ok(DetectionResult {
        change_points,
        segment_means,
        calls: None,
        trace: Vec::new(),
        sigma_hat: 1.0, // no noise scale is estimated on this path
    })
}
