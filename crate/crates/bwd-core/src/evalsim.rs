// SPDX-License-Identifier: MIT OR Apache-2.0

//! Simulation harness: planted-segment data generation, detection-quality
//! scoring, grid evaluation, and a fixed-split forward-scan power
//! demonstration.
//!
//! Synthetic sequences are zero-baseline noise with `kappa` disjoint
//! elevated segments of length `segment_len` and height `delta`, placed
//! uniformly at random subject to a minimum gap. Detection quality is
//! scored by the overlap rule: a call is correct when it overlaps a true
//! segment and is shorter than twice the true length, each true segment
//! crediting at most one call. Replicate `b` of a study always draws from
//! RNG stream `(seed, b)`, so every report is bit-reproducible.

use crate::engine::{run_bwd, BwdConfig};
use crate::error::{BwdError, Result};
use crate::model::{DetectionResult, SegmentCall, Sequence};
use crate::parallel::map_indexed;
use crate::preprocess::{estimate_sigma, SigmaMethod, DEFAULT_WINDOW};
use crate::util::{fmt_sig, replicate_rng, standard_normal_quantile};
use rand::Rng;
use rand_distr::{Distribution, Normal, StudentT};

/// Attempts allowed per planted segment before placement gives up.
pub const PLACEMENT_ATTEMPTS: usize = 10_000;

/// Default threshold multiplier for converting plain-mode segments into
/// calls: a segment is flagged when its mean sits more than
/// `call_z * sigma_hat / sqrt(len)` away from the zero baseline. Three
/// keeps quiet stretches quiet (a length-500 noise segment clears it only
/// ~0.3% of the time) while every stop-triggering contrast still flags.
pub const DEFAULT_CALL_Z: f64 = 3.0;

/// Default minimum index gap between two planted segments.
pub const DEFAULT_MIN_GAP: usize = 200;

/// Noise model for synthetic sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    /// Centered Gaussian noise with the given standard deviation.
    Normal { sigma: f64 },
    /// Student t noise with the given degrees of freedom, used as drawn
    /// (not rescaled to unit variance); the detector's noise-scale
    /// estimate absorbs the inflation.
    StudentT { df: f64 },
}

impl Noise {
    fn validate(&self) -> Result<()> {
        match *self {
            Noise::Normal { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(BwdError::InvalidInput(format!(
                        "noise sigma must be positive and finite; got {sigma}"
                    )));
                }
            }
            Noise::StudentT { df } => {
                if !(df.is_finite() && df > 0.0) {
                    return Err(BwdError::InvalidInput(format!(
                        "t noise needs df > 0; got {df}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Noise::Normal { sigma } => {
                let normal = Normal::new(0.0, sigma).expect("validated sigma");
                normal.sample(rng)
            }
            Noise::StudentT { df } => {
                let t = StudentT::new(df).expect("validated df");
                t.sample(rng)
            }
        }
    }
}

impl std::fmt::Display for Noise {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Noise::Normal { sigma } => write!(f, "normal({})", fmt_sig(sigma, 6)),
            Noise::StudentT { df } => write!(f, "t({})", fmt_sig(df, 6)),
        }
    }
}

/// Design of one synthetic study: `kappa` segments of length
/// `segment_len` and height `delta` on a zero baseline of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub n: usize,
    /// Number of planted segments.
    pub kappa: usize,
    /// Length of each planted segment.
    pub segment_len: usize,
    /// Mean of each planted segment (the baseline is zero).
    pub delta: f64,
    pub noise: Noise,
    /// Minimum number of indices between two planted segments.
    pub min_gap: usize,
    pub seed: u64,
}

impl SimSpec {
    /// Spec with the defaults: one segment per thousand observations,
    /// unit Gaussian noise, gap 200, seed 0.
    pub fn new(n: usize, segment_len: usize, delta: f64) -> Self {
        Self {
            n,
            kappa: (n / 1000).max(1),
            segment_len,
            delta,
            noise: Noise::Normal { sigma: 1.0 },
            min_gap: DEFAULT_MIN_GAP,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(BwdError::InvalidInput("n must be >= 1; got 0".into()));
        }
        if self.kappa < 1 {
            return Err(BwdError::InvalidInput("kappa must be >= 1; got 0".into()));
        }
        if self.segment_len < 1 {
            return Err(BwdError::InvalidInput(
                "segment_len must be >= 1; got 0".into(),
            ));
        }
        if !self.delta.is_finite() {
            return Err(BwdError::InvalidInput(format!(
                "delta must be finite; got {}",
                self.delta
            )));
        }
        self.noise.validate()?;
        if self.kappa * (self.segment_len + self.min_gap) > self.n {
            return Err(BwdError::InfeasiblePlacement(format!(
                "cannot fit {} segments of length {} with gap {} into {} observations",
                self.kappa, self.segment_len, self.min_gap, self.n
            )));
        }
        Ok(())
    }
}

/// One simulated sequence with its planted segments (1-based inclusive,
/// sorted by start).
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub sequence: Sequence,
    pub true_intervals: Vec<(usize, usize)>,
}

/// Generate replicate 0 of a study. See [`generate_replicate`].
pub fn generate(spec: &SimSpec) -> Result<SimulatedData> {
    generate_replicate(spec, 0)
}

/// Generate one replicate of a study, drawing from RNG stream
/// `(spec.seed, replicate)`. Segment start positions are drawn uniformly
/// and re-drawn until the disjointness and gap constraints hold
/// (sequentially, without backtracking over earlier segments); a segment
/// that cannot be placed within [`PLACEMENT_ATTEMPTS`] draws is an error.
pub fn generate_replicate(spec: &SimSpec, replicate: u64) -> Result<SimulatedData> {
    spec.validate()?;
    let mut rng = replicate_rng(spec.seed, replicate);

    let mut intervals: Vec<(usize, usize)> = Vec::with_capacity(spec.kappa);
    for placed in 0..spec.kappa {
        let mut attempts = 0;
        let (start, end) = loop {
            if attempts >= PLACEMENT_ATTEMPTS {
                return Err(BwdError::InfeasiblePlacement(format!(
                    "gave up placing segment {} of {} after {} attempts (n={}, segment_len={}, min_gap={})",
                    placed + 1,
                    spec.kappa,
                    PLACEMENT_ATTEMPTS,
                    spec.n,
                    spec.segment_len,
                    spec.min_gap
                )));
            }
            attempts += 1;
            let start = rng.gen_range(1..=spec.n - spec.segment_len + 1);
            let end = start + spec.segment_len - 1;
            if intervals
                .iter()
                .all(|&(a, b)| gap_between(a, b, start, end).is_some_and(|g| g >= spec.min_gap))
            {
                break (start, end);
            }
        };
        intervals.push((start, end));
    }
    intervals.sort_unstable();

    let mut values: Vec<f64> = (0..spec.n).map(|_| spec.noise.sample(&mut rng)).collect();
    for &(start, end) in &intervals {
        for value in &mut values[start - 1..end] {
            *value += spec.delta;
        }
    }

    Ok(SimulatedData {
        sequence: Sequence::new(values)?,
        true_intervals: intervals,
    })
}

/// Indices strictly between two 1-based inclusive intervals, or `None`
/// when they overlap.
fn gap_between(a1: usize, b1: usize, a2: usize, b2: usize) -> Option<usize> {
    if a2 > b1 {
        Some(a2 - b1 - 1)
    } else if a1 > b2 {
        Some(a1 - b2 - 1)
    } else {
        None
    }
}

/// Scores for one replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    /// Number of planted segments.
    pub n_true: usize,
    /// Number of detected calls.
    pub n_detected: usize,
    /// Number of detected calls scored correct.
    pub n_correct: usize,
    /// `n_correct / n_true` (0/0 counts as 0).
    pub sensitivity: f64,
    /// `n_correct / n_detected` (0/0 counts as 0).
    pub precision: f64,
}

/// Score detected calls against planted segments. A call is correct when
/// it overlaps a still-uncredited true segment and its length is strictly
/// below `2 * segment_len`; matching is greedy in call order and each
/// true segment is credited at most once, so
/// `n_correct <= min(n_true, n_detected)`.
pub fn match_and_score(
    true_intervals: &[(usize, usize)],
    detected: &[(usize, usize)],
    segment_len: usize,
) -> EvalReport {
    let mut credited = vec![false; true_intervals.len()];
    let mut n_correct = 0;
    for &(start, end) in detected {
        let len = end - start + 1;
        if len >= 2 * segment_len {
            continue;
        }
        let hit = true_intervals
            .iter()
            .enumerate()
            .find(|(k, &(a, b))| !credited[*k] && gap_between(a, b, start, end).is_none());
        if let Some((k, _)) = hit {
            credited[k] = true;
            n_correct += 1;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    EvalReport {
        n_true: true_intervals.len(),
        n_detected: detected.len(),
        n_correct,
        sensitivity: ratio(n_correct, true_intervals.len()),
        precision: ratio(n_correct, detected.len()),
    }
}

/// Convert a detection result into calls: 1-based inclusive intervals.
///
/// When the result carries baseline/variant labels, the calls are the
/// maximal runs of variant-labeled segments. Otherwise a segment is
/// flagged when its mean differs from zero by more than
/// `call_z * sigma_hat / sqrt(len)`, and the calls are the maximal runs
/// of flagged segments.
pub fn detection_calls(result: &DetectionResult, n: usize, call_z: f64) -> Vec<(usize, usize)> {
    let segments = result.segments(n);
    let flagged: Vec<bool> = match &result.calls {
        Some(calls) => calls.iter().map(|c| *c == SegmentCall::Variant).collect(),
        None => segments
            .iter()
            .zip(&result.segment_means)
            .map(|(&(start, end), &mean)| {
                let len = (end - start + 1) as f64;
                mean.abs() > call_z * result.sigma_hat / len.sqrt()
            })
            .collect(),
    };

    let mut calls = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (seg, &is_call) in segments.iter().zip(&flagged) {
        match (is_call, open) {
            (true, None) => open = Some(*seg),
            (true, Some((start, _))) => open = Some((start, seg.1)),
            (false, Some(run)) => {
                calls.push(run);
                open = None;
            }
            (false, None) => {}
        }
    }
    if let Some(run) = open {
        calls.push(run);
    }
    calls
}

/// Detector variant to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectorMode {
    /// Stop-rule detection; calls come from the zero-baseline flag rule.
    Plain,
    /// Baseline-aware detection around a known baseline mean; calls are
    /// the variant-labeled segments.
    Epidemic { mu0: f64 },
}

/// One grid cell: a study design plus the detector settings to run on it.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub sim: SimSpec,
    /// Level the cutoff was calibrated at; in epidemic mode also sets the
    /// baseline test's threshold to the upper-alpha normal quantile.
    pub alpha: f64,
    pub cutoff: f64,
    pub mode: DetectorMode,
    pub min_segment: usize,
    /// Moving-average half-width for the noise-scale estimate.
    pub window: usize,
    /// Flag-rule multiplier for plain-mode calls.
    pub call_z: f64,
    pub replicates: usize,
}

impl CellSpec {
    /// Cell with the defaults: guard off, default window and call rule,
    /// 500 replicates.
    pub fn new(sim: SimSpec, alpha: f64, cutoff: f64, mode: DetectorMode) -> Self {
        Self {
            sim,
            alpha,
            cutoff,
            mode,
            min_segment: 1,
            window: DEFAULT_WINDOW,
            call_z: DEFAULT_CALL_Z,
            replicates: 500,
        }
    }
}

/// Aggregated scores for one cell. Counts are pooled over replicates;
/// `sensitivity = correct / true` and `precision = correct / detected`
/// are ratios of those pooled counts (0/0 counts as 0), each with a
/// Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub replicates: usize,
    pub n_true: usize,
    pub n_detected: usize,
    pub n_correct: usize,
    pub sensitivity: f64,
    pub sensitivity_se: f64,
    pub precision: f64,
    pub precision_se: f64,
    pub per_replicate: Vec<EvalReport>,
}

/// Run one grid cell: generate, detect, and score every replicate
/// (replicates run in parallel on deterministic streams), then pool.
pub fn run_cell(cell: &CellSpec) -> Result<CellReport> {
    cell.sim.validate()?;
    if cell.replicates < 1 {
        return Err(BwdError::InvalidInput(
            "replicates must be >= 1; got 0".into(),
        ));
    }

    let reports: Vec<Result<EvalReport>> = map_indexed(cell.replicates, |b| {
        let data = generate_replicate(&cell.sim, b as u64)?;
        let sigma = estimate_sigma(
            &data.sequence,
            SigmaMethod::WindowMean {
                window: cell.window,
            },
        )?;
        let mut config = BwdConfig::new(cell.alpha, cell.cutoff, sigma.sigma_hat)
            .with_min_segment(cell.min_segment);
        if let DetectorMode::Epidemic { mu0 } = cell.mode {
            let z_alpha = standard_normal_quantile(1.0 - cell.alpha);
            config = config.with_epidemic(mu0, z_alpha);
        }
        let result = run_bwd(&data.sequence, &config)?;
        let calls = detection_calls(&result, cell.sim.n, cell.call_z);
        Ok(match_and_score(
            &data.true_intervals,
            &calls,
            cell.sim.segment_len,
        ))
    });

    let mut per_replicate = Vec::with_capacity(cell.replicates);
    for report in reports {
        per_replicate.push(report?);
    }
    Ok(pool_reports(per_replicate))
}

/// Pool per-replicate scores into a cell report.
fn pool_reports(per_replicate: Vec<EvalReport>) -> CellReport {
    let b = per_replicate.len();
    let n_true: usize = per_replicate.iter().map(|r| r.n_true).sum();
    let n_detected: usize = per_replicate.iter().map(|r| r.n_detected).sum();
    let n_correct: usize = per_replicate.iter().map(|r| r.n_correct).sum();
    let sensitivity = pooled_ratio(n_correct, n_true);
    let precision = pooled_ratio(n_correct, n_detected);
    CellReport {
        replicates: b,
        n_true,
        n_detected,
        n_correct,
        sensitivity,
        sensitivity_se: ratio_se(&per_replicate, sensitivity, |r| (r.n_correct, r.n_true)),
        precision,
        precision_se: ratio_se(&per_replicate, precision, |r| (r.n_correct, r.n_detected)),
        per_replicate,
    }
}

fn pooled_ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Standard error of a pooled ratio of replicate totals, via the usual
/// ratio-estimator linearization over replicates.
fn ratio_se(
    reports: &[EvalReport],
    ratio: f64,
    parts: impl Fn(&EvalReport) -> (usize, usize),
) -> f64 {
    let b = reports.len();
    let den_total: f64 = reports.iter().map(|r| parts(r).1 as f64).sum();
    if b < 2 || den_total == 0.0 {
        return 0.0;
    }
    let ss: f64 = reports
        .iter()
        .map(|r| {
            let (num, den) = parts(r);
            let resid = num as f64 - ratio * den as f64;
            resid * resid
        })
        .sum();
    (ss * b as f64 / (b as f64 - 1.0)).sqrt() / den_total
}

/// Run a grid of cells in order.
pub fn run_table(cells: &[CellSpec]) -> Result<Vec<CellReport>> {
    cells.iter().map(run_cell).collect()
}

/// Render cells and their reports as one row per cell.
pub fn render_wide(cells: &[CellSpec], reports: &[CellReport]) -> String {
    let mut out = String::from(
        "n\tkappa\tL\tdelta\tnoise\talpha\tmode\tcutoff\tB\tsensitivity\tsen_se\tprecision\tpre_se\tdetected\tcorrect\n",
    );
    for (cell, report) in cells.iter().zip(reports) {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            cell.sim.n,
            cell.sim.kappa,
            cell.sim.segment_len,
            fmt_sig(cell.sim.delta, 6),
            cell.sim.noise,
            fmt_sig(cell.alpha, 6),
            match cell.mode {
                DetectorMode::Plain => "plain".to_string(),
                DetectorMode::Epidemic { mu0 } => format!("epidemic({})", fmt_sig(mu0, 6)),
            },
            fmt_sig(cell.cutoff, 6),
            report.replicates,
            fmt_sig(report.sensitivity, 6),
            fmt_sig(report.sensitivity_se, 6),
            fmt_sig(report.precision, 6),
            fmt_sig(report.precision_se, 6),
            report.n_detected,
            report.n_correct,
        ));
    }
    out
}

/// Render cells and their reports in long format: one row per metric,
/// ready for plotting tools.
pub fn render_long(cells: &[CellSpec], reports: &[CellReport]) -> String {
    let mut out = String::from("n\tkappa\tL\tdelta\tnoise\talpha\tmode\tmetric\tvalue\tse\n");
    for (cell, report) in cells.iter().zip(reports) {
        let mode = match cell.mode {
            DetectorMode::Plain => "plain".to_string(),
            DetectorMode::Epidemic { mu0 } => format!("epidemic({})", fmt_sig(mu0, 6)),
        };
        for (metric, value, se) in [
            ("sensitivity", report.sensitivity, report.sensitivity_se),
            ("precision", report.precision, report.precision_se),
        ] {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                cell.sim.n,
                cell.sim.kappa,
                cell.sim.segment_len,
                fmt_sig(cell.sim.delta, 6),
                cell.sim.noise,
                fmt_sig(cell.alpha, 6),
                mode,
                metric,
                fmt_sig(value, 6),
                fmt_sig(se, 6),
            ));
        }
    }
    out
}

/// One point of a forward-scan power curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPoint {
    pub n: usize,
    /// Fixed split point `floor(c * n)`.
    pub t1: usize,
    /// Planted segment length `floor(n^beta)`, capped at `n - t1`.
    pub segment_len: usize,
    /// Empirical rejection rate of the two-sided fixed-split test.
    pub power: f64,
}

/// Power of the fixed-split forward scan against a short segment planted
/// right after the split.
///
/// The scan splits at `t1 = floor(c * n)` and tests whether the two block
/// means differ, two-sided at level `alpha` with known noise scale. A
/// segment of length `floor(n^beta)` (capped at the second block) and
/// height `mu` sits at the start of the second block, so the difference
/// of block means is Gaussian with mean `-len * mu / (n - t1)` and
/// variance `sigma^2 (1/t1 + 1/(n - t1))`; replicates draw that
/// difference directly from its exact law. For `beta < 1/2` the shift
/// shrinks faster than the noise, so power decays to `alpha` as `n`
/// grows.
pub fn forward_power_demo(
    mu: f64,
    sigma: f64,
    c: f64,
    beta: f64,
    n_grid: &[usize],
    alpha: f64,
    replicates: usize,
    seed: u64,
) -> Result<Vec<PowerPoint>> {
    if !(c > 0.0 && c < 1.0) {
        return Err(BwdError::InvalidInput(format!(
            "split fraction c must be in (0, 1); got {c}"
        )));
    }
    if !(0.0..=1.0).contains(&beta) || !beta.is_finite() {
        return Err(BwdError::InvalidInput(format!(
            "beta must be in [0, 1]; got {beta}"
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(BwdError::InvalidInput(format!(
            "sigma must be positive and finite; got {sigma}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BwdError::InvalidInput(format!(
            "alpha must be in (0, 1); got {alpha}"
        )));
    }
    if replicates < 1 {
        return Err(BwdError::InvalidInput(
            "replicates must be >= 1; got 0".into(),
        ));
    }

    let z_crit = standard_normal_quantile(1.0 - alpha / 2.0);
    let mut curve = Vec::with_capacity(n_grid.len());
    for (point, &n) in n_grid.iter().enumerate() {
        let t1 = (c * n as f64).floor() as usize;
        if t1 < 1 || t1 >= n {
            return Err(BwdError::InvalidInput(format!(
                "split floor(c*n) must leave both blocks non-empty; got t1={t1} for n={n}"
            )));
        }
        let segment_len = ((n as f64).powf(beta).floor() as usize).min(n - t1).max(1);
        let shift = segment_len as f64 * mu / (n - t1) as f64;
        let sd = sigma * (1.0 / t1 as f64 + 1.0 / (n - t1) as f64).sqrt();

        let mut rng = replicate_rng(seed, point as u64);
        let diff = Normal::new(-shift, sd).expect("validated scale");
        let rejections = (0..replicates)
            .filter(|_| diff.sample(&mut rng).abs() > z_crit * sd)
            .count();
        curve.push(PowerPoint {
            n,
            t1,
            segment_len,
            power: rejections as f64 / replicates as f64,
        });
    }
    Ok(curve)
}
