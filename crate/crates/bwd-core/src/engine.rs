// SPDX-License-Identifier: MIT OR Apache-2.0

//! The backward merging engine.
//!
//! Detection starts from `n` singleton groups. Each iteration merges the
//! adjacent pair whose merge raises the total within-group SSE the least,
//! until the standardized statistic of the pair about to be merged exceeds
//! the cutoff; the boundaries still alive at that moment are the change
//! points.
//!
//! The small-segment guard zeroes the statistic of any pair in which
//! either group is narrower than `min_segment`, and a zeroed pair can
//! never trip the stop rule. Selection respects the same split: guarded
//! pairs are merged before any live pair (cheapest first within each
//! class), so narrow fragments are absorbed before the procedure starts
//! testing contrasts it is willing to stop on. With `min_segment = 1`
//! every pair is live and selection is purely by cost.
//!
//! Candidate costs live in an ordered set keyed by
//! `(live, cost, boundary)`, and a merge touches at most two neighboring
//! costs, so a full run does O(n log n) work.
//!
//! [`naive`] holds a deliberately simple quadratic engine that rescans
//! every pair each iteration. It exists to cross-check this one and to put
//! a number on the speedup; both must produce identical results.

use crate::error::{BwdError, Result};
use crate::model::{DetectionResult, GroupStats, MergeRecord, SegmentCall, Sequence};
use crate::TOL_NUM;

pub mod naive;

/// Guard width that disables the small-segment guard entirely.
pub const DEFAULT_MIN_SEGMENT: usize = 1;

/// Settings for a detection run.
#[derive(Debug, Clone, PartialEq)]
pub struct BwdConfig {
    /// Nominal level the cutoff was calibrated for. Carried along for
    /// reporting; the stop rule itself only uses `cutoff`.
    pub alpha: f64,
    /// Stop threshold on the standardized merge statistic.
    pub cutoff: f64,
    /// Noise scale used to standardize merge statistics.
    pub sigma_hat: f64,
    /// Small-segment guard `M`: the statistic of a pair is forced to zero
    /// when both groups hold fewer than `M` observations, so stretches of
    /// fewer than `M` points cannot stop the merging on their own. `1`
    /// disables the guard.
    pub min_segment: usize,
    /// Baseline anchoring for epidemic-type alternatives; `None` runs the
    /// plain procedure.
    pub epidemic: Option<EpidemicConfig>,
}

/// Epidemic-mode settings: segments are tested against a known baseline
/// mean, and groups judged to sit on the baseline attract their neighbors
/// toward it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpidemicConfig {
    /// The known baseline (normal-state) mean.
    pub mu0: f64,
    /// Threshold on `z = sqrt(v) * |mean - mu0| / sigma_hat` under which a
    /// merged group of `v` observations is judged baseline.
    pub z_alpha: f64,
}

impl BwdConfig {
    /// Plain configuration with the guard disabled.
    pub fn new(alpha: f64, cutoff: f64, sigma_hat: f64) -> Self {
        Self {
            alpha,
            cutoff,
            sigma_hat,
            min_segment: DEFAULT_MIN_SEGMENT,
            epidemic: None,
        }
    }

    /// Set the small-segment guard width.
    pub fn with_min_segment(mut self, min_segment: usize) -> Self {
        self.min_segment = min_segment;
        self
    }

    /// Enable epidemic mode against the baseline mean `mu0`.
    pub fn with_epidemic(mut self, mu0: f64, z_alpha: f64) -> Self {
        self.epidemic = Some(EpidemicConfig { mu0, z_alpha });
        self
    }

    /// Check every field; detection runs this up front.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(BwdError::InvalidInput(format!(
                "alpha must be in (0, 1); got {}",
                self.alpha
            )));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(BwdError::InvalidInput(format!(
                "cutoff must be a positive real; got {}",
                self.cutoff
            )));
        }
        if !self.sigma_hat.is_finite() || self.sigma_hat <= TOL_NUM {
            return Err(BwdError::ZeroVariance(format!(
                "sigma_hat must exceed {TOL_NUM}; got {}",
                self.sigma_hat
            )));
        }
        if self.min_segment < 1 {
            return Err(BwdError::InvalidInput(
                "min_segment must be >= 1; got 0".into(),
            ));
        }
        if let Some(e) = &self.epidemic {
            if !e.mu0.is_finite() {
                return Err(BwdError::InvalidInput(format!(
                    "epidemic mu0 must be finite; got {}",
                    e.mu0
                )));
            }
            if !(e.z_alpha.is_finite() && e.z_alpha > 0.0) {
                return Err(BwdError::InvalidInput(format!(
                    "epidemic z_alpha must be a positive real; got {}",
                    e.z_alpha
                )));
            }
        }
        Ok(())
    }
}

/// SSE rise from merging two adjacent groups:
/// `na*nb/(na+nb) * (mean_a - mean_b)^2`. Always nonnegative, and equal to
/// `sse(a ∪ b) - sse(a) - sse(b)` up to rounding.
pub fn merge_cost(a: GroupStats, b: GroupStats) -> f64 {
    cost_between(a.count(), a.mean(), b.count(), b.mean())
}

/// [`merge_cost`] from counts and means directly; epidemic mode uses this
/// to price a pair with a group's mean pinned at the baseline.
fn cost_between(na: usize, mean_a: f64, nb: usize, mean_b: f64) -> f64 {
    let na = na as f64;
    let nb = nb as f64;
    let diff = mean_a - mean_b;
    na * nb / (na + nb) * diff * diff
}

/// `true` when a pair may trip the stop rule: both groups at least
/// `min_segment` wide. Guarded (non-live) pairs have statistic zero and
/// are merged ahead of every live pair.
pub fn pair_is_live(a: GroupStats, b: GroupStats, min_segment: usize) -> bool {
    a.count() >= min_segment && b.count() >= min_segment
}

/// Standardized two-sample statistic of an adjacent pair:
/// `|mean_a - mean_b| / (sigma_hat * sqrt(1/na + 1/nb))`, forced to zero
/// when either group is narrower than the guard `min_segment` — a
/// contrast against a fragment is not evidence worth stopping on. On the
/// live path `sigma_hat^2 * S^2` equals [`merge_cost`].
pub fn merge_statistic(a: GroupStats, b: GroupStats, sigma_hat: f64, min_segment: usize) -> f64 {
    if !pair_is_live(a, b, min_segment) {
        return 0.0;
    }
    let na = a.count() as f64;
    let nb = b.count() as f64;
    (a.mean() - b.mean()).abs() / (sigma_hat * (1.0 / na + 1.0 / nb).sqrt())
}

/// `sqrt(v) * |mean - mu0| / sigma_hat`: how far a group of `v`
/// observations sits from the baseline, in noise units.
pub(crate) fn baseline_z(stats: GroupStats, mu0: f64, sigma_hat: f64) -> f64 {
    (stats.count() as f64).sqrt() * (stats.mean() - mu0).abs() / sigma_hat
}

/// Run backward detection. Epidemic mode is taken from the config.
pub fn run_bwd(seq: &Sequence, config: &BwdConfig) -> Result<DetectionResult> {
    config.validate()?;
    let drive = drive(
        seq.values(),
        config.sigma_hat,
        config.min_segment,
        Some(config.cutoff),
        config.epidemic,
    );
    Ok(assemble(seq.len(), drive, config.sigma_hat, config.epidemic))
}

/// Run backward detection in epidemic mode against the baseline `mu0`,
/// regardless of what `config.epidemic` says.
pub fn run_bwd_epidemic(
    seq: &Sequence,
    config: &BwdConfig,
    mu0: f64,
    z_alpha: f64,
) -> Result<DetectionResult> {
    let config = config.clone().with_epidemic(mu0, z_alpha);
    run_bwd(seq, &config)
}

/// Merge all the way down to one group, with no stopping, and return the
/// largest guarded statistic seen over the `n - 1` merges. This is the
/// statistic whose null distribution calibration samples.
pub fn full_merge_max_statistic(seq: &Sequence, sigma_hat: f64, min_segment: usize) -> Result<f64> {
    if !sigma_hat.is_finite() || sigma_hat <= TOL_NUM {
        return Err(BwdError::ZeroVariance(format!(
            "sigma_hat must exceed {TOL_NUM}; got {sigma_hat}"
        )));
    }
    if min_segment < 1 {
        return Err(BwdError::InvalidInput(
            "min_segment must be >= 1; got 0".into(),
        ));
    }
    let drive = drive(seq.values(), sigma_hat, min_segment, None, None);
    Ok(drive.max_statistic)
}

/// Ordered-set key: cheapest cost first, smallest boundary on ties.
#[derive(Debug, Clone, Copy)]
struct BoundaryKey {
    /// `false` sorts first: guarded pairs are merged before live ones.
    live: bool,
    cost: f64,
    boundary: usize,
}

impl Ord for BoundaryKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.live
            .cmp(&other.live)
            .then(self.cost.total_cmp(&other.cost))
            .then(self.boundary.cmp(&other.boundary))
    }
}

impl PartialOrd for BoundaryKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for BoundaryKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for BoundaryKey {}

struct Drive {
    /// Group layout at the end of the run, as `(start, end, stats)` with
    /// 0-based inclusive ends.
    groups: Vec<(usize, usize, GroupStats)>,
    trace: Vec<MergeRecord>,
    max_statistic: f64,
}

/// The merging loop. `cutoff: None` merges to a single group
/// unconditionally (calibration's path); `Some(c)` stops before the first
/// merge whose statistic exceeds `c`.
fn drive(
    values: &[f64],
    sigma_hat: f64,
    min_segment: usize,
    cutoff: Option<f64>,
    epidemic: Option<EpidemicConfig>,
) -> Drive {
    let n = values.len();
    // Group bookkeeping, all indexed 0-based: a live group starting at `s`
    // has its stats in stats[s] and its inclusive end in end_of_start[s];
    // start_of_end inverts that. Boundary `b` sits between indices `b` and
    // `b + 1`; its current cost is cost_of[b] and, while live, an entry
    // `(cost_of[b], b)` is in the ordered set.
    let mut stats: Vec<GroupStats> = values.iter().map(|&y| GroupStats::from_value(y)).collect();
    let mut end_of_start: Vec<usize> = (0..n).collect();
    let mut start_of_end: Vec<usize> = (0..n).collect();
    let mut cost_of: Vec<f64> = vec![0.0; n.saturating_sub(1)];
    let mut live_of: Vec<bool> = vec![true; n.saturating_sub(1)];
    let mut index = std::collections::BTreeSet::new();
    for b in 0..n.saturating_sub(1) {
        let cost = merge_cost(stats[b], stats[b + 1]);
        let live = pair_is_live(stats[b], stats[b + 1], min_segment);
        cost_of[b] = cost;
        live_of[b] = live;
        index.insert(BoundaryKey {
            live,
            cost,
            boundary: b,
        });
    }

    let mut trace = Vec::new();
    let mut max_statistic = 0.0f64;
    let mut iteration = 0usize;

    while let Some(&BoundaryKey {
        live,
        cost,
        boundary: b,
    }) = index.first()
    {
        debug_assert!(
            selected_is_min(
                n,
                &end_of_start,
                &stats,
                &cost_of,
                min_segment,
                live,
                cost,
                b,
                epidemic.is_some()
            ),
            "ordered set returned a non-minimal pair at boundary {b}"
        );
        let left_start = start_of_end[b];
        let right_start = b + 1;
        let right_end = end_of_start[right_start];
        let left = stats[left_start];
        let right = stats[right_start];

        let statistic = merge_statistic(left, right, sigma_hat, min_segment);
        if let Some(c) = cutoff {
            if statistic > c {
                break; // the pair that trips the stop rule is not merged
            }
        }
        max_statistic = max_statistic.max(statistic);
        iteration += 1;
        trace.push(MergeRecord {
            iteration,
            boundary: b + 1,
            statistic,
        });
        index.pop_first();

        let merged = left.merge(right);
        stats[left_start] = merged;
        end_of_start[left_start] = right_end;
        start_of_end[right_end] = left_start;

        // In epidemic mode a freshly merged group that is statistically
        // indistinguishable from the baseline is priced at the baseline
        // mean when its two neighboring costs are recomputed. Only the
        // pricing is affected; the group keeps its true statistics.
        let merged_mean = match epidemic {
            Some(e) if baseline_z(merged, e.mu0, sigma_hat) <= e.z_alpha => e.mu0,
            _ => merged.mean(),
        };

        if left_start > 0 {
            let lb = left_start - 1;
            let prev = stats[start_of_end[lb]];
            let new_cost = cost_between(prev.count(), prev.mean(), merged.count(), merged_mean);
            let new_live = pair_is_live(prev, merged, min_segment);
            let removed = index.remove(&BoundaryKey {
                live: live_of[lb],
                cost: cost_of[lb],
                boundary: lb,
            });
            debug_assert!(removed, "left neighbor boundary {lb} missing from set");
            cost_of[lb] = new_cost;
            live_of[lb] = new_live;
            index.insert(BoundaryKey {
                live: new_live,
                cost: new_cost,
                boundary: lb,
            });
        }
        if right_end + 1 < n {
            let rb = right_end;
            let next = stats[rb + 1];
            let new_cost = cost_between(merged.count(), merged_mean, next.count(), next.mean());
            let new_live = pair_is_live(merged, next, min_segment);
            let removed = index.remove(&BoundaryKey {
                live: live_of[rb],
                cost: cost_of[rb],
                boundary: rb,
            });
            debug_assert!(removed, "right neighbor boundary {rb} missing from set");
            cost_of[rb] = new_cost;
            live_of[rb] = new_live;
            index.insert(BoundaryKey {
                live: new_live,
                cost: new_cost,
                boundary: rb,
            });
        }
    }

    let mut groups = Vec::new();
    let mut start = 0usize;
    loop {
        let end = end_of_start[start];
        groups.push((start, end, stats[start]));
        if end + 1 >= n {
            break;
        }
        start = end + 1;
    }

    Drive {
        groups,
        trace,
        max_statistic,
    }
}

/// Debug-build check on small inputs: the selected entry must be minimal
/// in `(live, cost, boundary)` order against keys recomputed from
/// scratch. Skipped in epidemic mode, where stored costs legitimately
/// differ from recomputed ones.
#[allow(clippy::too_many_arguments)]
fn selected_is_min(
    n: usize,
    end_of_start: &[usize],
    stats: &[GroupStats],
    cost_of: &[f64],
    min_segment: usize,
    live: bool,
    cost: f64,
    boundary: usize,
    epidemic: bool,
) -> bool {
    if n > 1000 || epidemic {
        return true;
    }
    let mut start = 0usize;
    loop {
        let end = end_of_start[start];
        if end + 1 >= n {
            return true;
        }
        let fresh = merge_cost(stats[start], stats[end + 1]);
        if fresh.to_bits() != cost_of[end].to_bits() {
            return false;
        }
        let fresh_live = pair_is_live(stats[start], stats[end + 1], min_segment);
        if (fresh_live, fresh, end) < (live, cost, boundary) {
            return false;
        }
        start = end + 1;
    }
}

/// Turn a finished drive into a [`DetectionResult`].
fn assemble(
    n: usize,
    drive: Drive,
    sigma_hat: f64,
    epidemic: Option<EpidemicConfig>,
) -> DetectionResult {
    let mut change_points = Vec::with_capacity(drive.groups.len().saturating_sub(1));
    let mut segment_means = Vec::with_capacity(drive.groups.len());
    let mut calls = epidemic.map(|_| Vec::with_capacity(drive.groups.len()));
    for &(_, end, stats) in &drive.groups {
        if end + 1 < n {
            change_points.push(end + 1); // 1-based last index of the segment
        }
        match epidemic {
            Some(e) => {
                let baseline = baseline_z(stats, e.mu0, sigma_hat) <= e.z_alpha;
                segment_means.push(if baseline { e.mu0 } else { stats.mean() });
                calls
                    .as_mut()
                    .expect("calls vector exists in epidemic mode")
                    .push(if baseline {
                        SegmentCall::Baseline
                    } else {
                        SegmentCall::Variant
                    });
            }
            None => segment_means.push(stats.mean()),
        }
    }
    DetectionResult {
        change_points,
        segment_means,
        calls,
        trace: drive.trace,
        sigma_hat,
    }
}
