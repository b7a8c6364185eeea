// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reference engine: a flat vector of groups, rescanned end to end at
//! every iteration. Quadratic and proud of it — this is the straightedge
//! the ordered-set engine is checked against, so it deliberately shares no
//! bookkeeping with it. Pair pricing goes through the same closed-form
//! cost so the two engines see bit-identical numbers and must produce
//! bit-identical merge sequences.

use crate::engine::{
    baseline_z, cost_between, merge_cost, merge_statistic, pair_is_live, BwdConfig,
};
use crate::error::{BwdError, Result};
use crate::model::{DetectionResult, GroupStats, MergeRecord, SegmentCall, Sequence};
use crate::TOL_NUM;

struct Group {
    end: usize, // 0-based inclusive
    stats: GroupStats,
}

/// Backward detection by exhaustive rescan; same contract and same output
/// as [`crate::engine::run_bwd`].
pub fn run_bwd_naive(seq: &Sequence, config: &BwdConfig) -> Result<DetectionResult> {
    config.validate()?;
    Ok(drive_naive(seq, config, Some(config.cutoff)))
}

/// Unstopped merge to a single group; same contract and same output as
/// [`crate::engine::full_merge_max_statistic`].
pub fn full_merge_max_statistic_naive(
    seq: &Sequence,
    sigma_hat: f64,
    min_segment: usize,
) -> Result<f64> {
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
    let config = BwdConfig::new(0.5, f64::MAX, sigma_hat).with_min_segment(min_segment);
    let result = drive_naive(seq, &config, None);
    Ok(result
        .trace
        .iter()
        .map(|m| m.statistic)
        .fold(0.0f64, f64::max))
}

fn drive_naive(seq: &Sequence, config: &BwdConfig, cutoff: Option<f64>) -> DetectionResult {
    let n = seq.len();
    let mut groups: Vec<Group> = seq
        .values()
        .iter()
        .enumerate()
        .map(|(i, &y)| Group {
            end: i,
            stats: GroupStats::from_value(y),
        })
        .collect();
    // costs[i] prices the pair (groups[i], groups[i + 1]). Entries are kept
    // up to date after each merge rather than derived on the fly because
    // epidemic pricing depends on when a cost was last computed.
    let mut costs: Vec<f64> = groups
        .windows(2)
        .map(|w| merge_cost(w[0].stats, w[1].stats))
        .collect();

    let mut trace = Vec::new();
    let mut iteration = 0usize;

    while !costs.is_empty() {
        // Linear rescan for the minimal (live, cost) key; guarded pairs
        // come first, and ties go to the first (smallest) boundary.
        let mut best = 0usize;
        let mut best_live = pair_is_live(groups[0].stats, groups[1].stats, config.min_segment);
        for i in 1..costs.len() {
            let live = pair_is_live(groups[i].stats, groups[i + 1].stats, config.min_segment);
            let key_less = live
                .cmp(&best_live)
                .then(costs[i].total_cmp(&costs[best]))
                .is_lt();
            if key_less {
                best = i;
                best_live = live;
            }
        }

        let statistic = merge_statistic(
            groups[best].stats,
            groups[best + 1].stats,
            config.sigma_hat,
            config.min_segment,
        );
        if let Some(c) = cutoff {
            if statistic > c {
                break;
            }
        }
        iteration += 1;
        trace.push(MergeRecord {
            iteration,
            boundary: groups[best].end + 1,
            statistic,
        });

        let merged = groups[best].stats.merge(groups[best + 1].stats);
        groups[best].end = groups[best + 1].end;
        groups[best].stats = merged;
        groups.remove(best + 1);
        costs.remove(best);

        let merged_mean = match config.epidemic {
            Some(e) if baseline_z(merged, e.mu0, config.sigma_hat) <= e.z_alpha => e.mu0,
            _ => merged.mean(),
        };
        if best > 0 {
            let prev = groups[best - 1].stats;
            costs[best - 1] = cost_between(prev.count(), prev.mean(), merged.count(), merged_mean);
        }
        if best < costs.len() {
            let next = groups[best + 1].stats;
            costs[best] = cost_between(merged.count(), merged_mean, next.count(), next.mean());
        }
    }

    let mut change_points = Vec::with_capacity(groups.len().saturating_sub(1));
    let mut segment_means = Vec::with_capacity(groups.len());
    let mut calls = config.epidemic.map(|_| Vec::with_capacity(groups.len()));
    for g in &groups {
        if g.end + 1 < n {
            change_points.push(g.end + 1);
        }
        match config.epidemic {
            Some(e) => {
                let baseline = baseline_z(g.stats, e.mu0, config.sigma_hat) <= e.z_alpha;
                segment_means.push(if baseline { e.mu0 } else { g.stats.mean() });
                calls
                    .as_mut()
                    .expect("calls vector exists in epidemic mode")
                    .push(if baseline {
                        SegmentCall::Baseline
                    } else {
                        SegmentCall::Variant
                    });
            }
            None => segment_means.push(g.stats.mean()),
        }
    }

    DetectionResult {
        change_points,
        segment_means,
        calls,
        trace,
        sigma_hat: config.sigma_hat,
    }
}
