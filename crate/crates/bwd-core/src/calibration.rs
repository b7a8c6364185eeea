// SPDX-License-Identifier: MIT OR Apache-2.0

//! Monte Carlo calibration of the stopping cutoff.
//!
//! The stop rule compares each candidate merge's standardized statistic
//! against a cutoff. Under the null of no change, the largest statistic
//! seen while merging all the way down to one group has some distribution;
//! the cutoff is its upper `1 - alpha` quantile, estimated from `B`
//! simulated null sequences. Nulls can be synthetic Gaussian draws or
//! resampled residuals of the observed data (for non-Gaussian noise).
//! Replicate `b` always draws from RNG stream `(seed, b)`, so the result
//! is bit-reproducible no matter how replicates are scheduled.
//!
//! Cutoffs grow linearly in `log n`, so a small calibrated grid plus
//! [`fit_loglinear`] covers sequence lengths between and beyond grid
//! points. [`CutoffTable`] carries calibrated entries and fitted laws in a
//! plain-text tabular format with a `#fit` comment row per fitted law.

use crate::engine::full_merge_max_statistic;
use crate::error::{BwdError, Result};
use crate::model::Sequence;
use crate::parallel::map_indexed;
use crate::preprocess::{estimate_sigma, residuals, SigmaMethod, DEFAULT_WINDOW};
use crate::util::{fmt_sig, rank_ceil, replicate_rng};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

/// Null model the cutoff is calibrated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NullModel {
    /// Independent standard normal draws.
    Normal,
    /// A random permutation of the observed residuals.
    Permute,
    /// Residuals resampled with replacement.
    Bootstrap,
}

impl std::fmt::Display for NullModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NullModel::Normal => "normal",
            NullModel::Permute => "permute",
            NullModel::Bootstrap => "bootstrap",
        })
    }
}

impl std::str::FromStr for NullModel {
    type Err = BwdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(NullModel::Normal),
            "permute" => Ok(NullModel::Permute),
            "bootstrap" => Ok(NullModel::Bootstrap),
            other => Err(BwdError::InvalidInput(format!(
                "unknown null model '{other}'; expected one of: 'normal', 'permute', 'bootstrap'"
            ))),
        }
    }
}

/// Everything a calibration run depends on. Two runs with equal specs (and
/// equal data, for resampling nulls) produce bit-identical cutoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSpec {
    /// Length of each null sequence.
    pub n: usize,
    /// Nominal level of the stop rule.
    pub alpha: f64,
    /// Number of Monte Carlo replicates (`B`).
    pub replicates: usize,
    pub null: NullModel,
    /// Small-segment guard used when scoring null merges; part of the
    /// calibration key because it changes the null distribution.
    pub min_segment: usize,
    /// Moving-average half-width for the per-replicate noise rescale (and
    /// for the residuals of resampling nulls).
    pub window: usize,
    pub seed: u64,
}

impl CalibrationSpec {
    /// Spec with the defaults: guard off, default window, replicate count
    /// chosen by [`default_replicates`], seed 0.
    pub fn new(n: usize, alpha: f64) -> Self {
        Self {
            n,
            alpha,
            replicates: default_replicates(alpha),
            null: NullModel::Normal,
            min_segment: 1,
            window: DEFAULT_WINDOW,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(BwdError::InvalidInput(format!(
                "calibration needs n >= 2; got {}",
                self.n
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(BwdError::InvalidInput(format!(
                "alpha must be in (0, 1); got {}",
                self.alpha
            )));
        }
        if self.replicates < 1 {
            return Err(BwdError::InvalidInput(
                "replicates must be >= 1; got 0".into(),
            ));
        }
        if self.min_segment < 1 {
            return Err(BwdError::InvalidInput(
                "min_segment must be >= 1; got 0".into(),
            ));
        }
        if self.window < 1 {
            return Err(BwdError::InvalidInput("window must be >= 1; got 0".into()));
        }
        Ok(())
    }
}

/// Replicate count used when the caller does not pick one: tighter levels
/// need more replicates for a stable tail quantile.
pub fn default_replicates(alpha: f64) -> usize {
    if alpha < 0.05 {
        5000
    } else {
        2000
    }
}

/// A calibrated cutoff plus a rough Monte Carlo standard error of the
/// quantile estimate (density estimated from nearby order statistics).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOutcome {
    pub cutoff: f64,
    pub quantile_se: f64,
}

/// Calibrate a cutoff. `data` carries the observed sequence whose
/// residuals the resampling nulls draw from; the Gaussian null ignores it.
pub fn calibrate(spec: &CalibrationSpec, data: Option<&Sequence>) -> Result<f64> {
    calibrate_run(spec, data).map(|outcome| outcome.cutoff)
}

/// [`calibrate`], but also reporting the quantile's Monte Carlo standard
/// error.
pub fn calibrate_run(spec: &CalibrationSpec, data: Option<&Sequence>) -> Result<CalibrationOutcome> {
    spec.validate()?;
    let pool: Option<Vec<f64>> = match spec.null {
        NullModel::Normal => None,
        NullModel::Permute | NullModel::Bootstrap => {
            let seq = data.ok_or_else(|| {
                BwdError::NullRequiresData(format!(
                    "the '{}' null resamples observed residuals, but no sequence was supplied",
                    spec.null
                ))
            })?;
            if spec.null == NullModel::Permute && seq.len() != spec.n {
                return Err(BwdError::InvalidInput(format!(
                    "permutation null needs n equal to the data length; got n={} for {} observations",
                    spec.n,
                    seq.len()
                )));
            }
            Some(residuals(seq, spec.window)?)
        }
    };

    let draws: Vec<Result<f64>> = map_indexed(spec.replicates, |b| {
        let mut rng = replicate_rng(spec.seed, b as u64);
        let values: Vec<f64> = match (&spec.null, &pool) {
            (NullModel::Normal, _) => (0..spec.n).map(|_| rng.sample(StandardNormal)).collect(),
            (NullModel::Permute, Some(pool)) => {
                let mut v = pool.clone();
                v.shuffle(&mut rng);
                v
            }
            (NullModel::Bootstrap, Some(pool)) => (0..spec.n)
                .map(|_| pool[rng.gen_range(0..pool.len())])
                .collect(),
            _ => unreachable!("resampling nulls always carry a pool"),
        };
        let null_seq = Sequence::new(values)?;
        // Each replicate re-estimates the noise scale exactly the way
        // detection does, so the calibrated statistic is self-normalized.
        let sigma = estimate_sigma(
            &null_seq,
            SigmaMethod::WindowMean {
                window: spec.window,
            },
        )?;
        full_merge_max_statistic(&null_seq, sigma.sigma_hat, spec.min_segment)
    });

    let mut max_stats = Vec::with_capacity(spec.replicates);
    for draw in draws {
        max_stats.push(draw?);
    }
    max_stats.sort_unstable_by(f64::total_cmp);

    let b = spec.replicates;
    let rank = rank_ceil((1.0 - spec.alpha) * b as f64).min(b);
    let cutoff = max_stats[rank - 1];

    // Quantile standard error from the asymptotic formula, with the
    // density estimated by a finite difference of order statistics.
    let p = 1.0 - spec.alpha;
    let d = (b / 40).max(1);
    let lo = rank.saturating_sub(1).saturating_sub(d);
    let hi = (rank - 1 + d).min(b - 1);
    let quantile_se = if hi > lo {
        (p * (1.0 - p) * b as f64).sqrt() * (max_stats[hi] - max_stats[lo]) / (hi - lo) as f64
    } else {
        0.0
    };

    Ok(CalibrationOutcome {
        cutoff,
        quantile_se,
    })
}

/// One calibrated cutoff with its full key.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffEntry {
    pub n: usize,
    pub alpha: f64,
    pub null: NullModel,
    pub min_segment: usize,
    pub cutoff: f64,
    pub replicates: usize,
    pub seed: u64,
}

/// Fitted cutoff law `cutoff ≈ intercept + slope * ln n` for one
/// `(alpha, null, min_segment)` key.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLinearFit {
    pub alpha: f64,
    pub null: NullModel,
    pub min_segment: usize,
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

/// A table of calibrated cutoffs and fitted cutoff laws.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CutoffTable {
    pub entries: Vec<CutoffEntry>,
    pub fits: Vec<LogLinearFit>,
}

impl CutoffTable {
    /// Exact-key lookup.
    pub fn lookup(&self, n: usize, alpha: f64, null: NullModel, min_segment: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.n == n && e.alpha == alpha && e.null == null && e.min_segment == min_segment)
            .map(|e| e.cutoff)
    }

    /// Fitted law for a key, if one is stored.
    pub fn fit_for(&self, alpha: f64, null: NullModel, min_segment: usize) -> Option<&LogLinearFit> {
        self.fits
            .iter()
            .find(|f| f.alpha == alpha && f.null == null && f.min_segment == min_segment)
    }

    /// Cutoff for a key: an exact entry when the table has one, otherwise
    /// a prediction from the stored fitted law.
    pub fn cutoff_for(
        &self,
        n: usize,
        alpha: f64,
        null: NullModel,
        min_segment: usize,
    ) -> Option<f64> {
        self.lookup(n, alpha, null, min_segment)
            .or_else(|| self.fit_for(alpha, null, min_segment).map(|f| predict_cutoff(f, n)))
    }

    /// Render the table. Entries are sorted by key so equal tables always
    /// serialize byte-identically; reals carry six significant digits.
    pub fn to_text(&self) -> String {
        let mut entries: Vec<&CutoffEntry> = self.entries.iter().collect();
        entries.sort_by(|a, b| {
            a.alpha
                .total_cmp(&b.alpha)
                .then_with(|| a.null.to_string().cmp(&b.null.to_string()))
                .then(a.min_segment.cmp(&b.min_segment))
                .then(a.n.cmp(&b.n))
        });
        let mut fits: Vec<&LogLinearFit> = self.fits.iter().collect();
        fits.sort_by(|a, b| {
            a.alpha
                .total_cmp(&b.alpha)
                .then_with(|| a.null.to_string().cmp(&b.null.to_string()))
                .then(a.min_segment.cmp(&b.min_segment))
        });

        let mut out = String::from("n\talpha\tnull_type\tM\tcutoff\tB\tseed\n");
        for e in entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.n,
                fmt_sig(e.alpha, 6),
                e.null,
                e.min_segment,
                fmt_sig(e.cutoff, 6),
                e.replicates,
                e.seed
            ));
        }
        for f in fits {
            out.push_str(&format!(
                "#fit\t{}\t{}\t{}\t{}\t{}\t{}\n",
                fmt_sig(f.alpha, 6),
                f.null,
                f.min_segment,
                fmt_sig(f.intercept, 6),
                fmt_sig(f.slope, 6),
                fmt_sig(f.r_squared, 6)
            ));
        }
        out
    }

    /// Parse a table rendered by [`CutoffTable::to_text`]. Unknown comment
    /// lines are skipped; malformed rows are errors naming the line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = CutoffTable::default();
        let mut saw_header = false;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#fit\t") {
                let fields: Vec<&str> = rest.split('\t').collect();
                if fields.len() != 6 {
                    return Err(BwdError::InvalidInput(format!(
                        "line {lineno}: #fit row needs 6 fields; got {}",
                        fields.len()
                    )));
                }
                table.fits.push(LogLinearFit {
                    alpha: parse_field(fields[0], "alpha", lineno)?,
                    null: fields[1].parse()?,
                    min_segment: parse_field(fields[2], "M", lineno)?,
                    intercept: parse_field(fields[3], "intercept", lineno)?,
                    slope: parse_field(fields[4], "slope", lineno)?,
                    r_squared: parse_field(fields[5], "r_squared", lineno)?,
                });
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if !line.starts_with("n\talpha") {
                    return Err(BwdError::InvalidInput(format!(
                        "line {lineno}: expected the cutoff table header row"
                    )));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 7 {
                return Err(BwdError::InvalidInput(format!(
                    "line {lineno}: cutoff row needs 7 fields; got {}",
                    fields.len()
                )));
            }
            table.entries.push(CutoffEntry {
                n: parse_field(fields[0], "n", lineno)?,
                alpha: parse_field(fields[1], "alpha", lineno)?,
                null: fields[2].parse()?,
                min_segment: parse_field(fields[3], "M", lineno)?,
                cutoff: parse_field(fields[4], "cutoff", lineno)?,
                replicates: parse_field(fields[5], "B", lineno)?,
                seed: parse_field(fields[6], "seed", lineno)?,
            });
        }
        if !saw_header && table.entries.is_empty() && table.fits.is_empty() {
            return Err(BwdError::InvalidInput(
                "cutoff table is empty or missing its header".into(),
            ));
        }
        Ok(table)
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str, lineno: usize) -> Result<T> {
    s.parse().map_err(|_| {
        BwdError::InvalidInput(format!("line {lineno}: cannot parse {what} from '{s}'"))
    })
}

/// Ordinary least squares of cutoff on `ln n` over the table entries that
/// match the key. Needs five or more distinct grid lengths.
pub fn fit_loglinear(
    table: &CutoffTable,
    alpha: f64,
    null: NullModel,
    min_segment: usize,
) -> Result<LogLinearFit> {
    let points: Vec<(f64, f64)> = table
        .entries
        .iter()
        .filter(|e| e.alpha == alpha && e.null == null && e.min_segment == min_segment)
        .map(|e| ((e.n as f64).ln(), e.cutoff))
        .collect();
    let mut lengths: Vec<u64> = points.iter().map(|(x, _)| x.to_bits()).collect();
    lengths.sort_unstable();
    lengths.dedup();
    if lengths.len() < 5 {
        return Err(BwdError::InsufficientGrid(format!(
            "log-linear fit needs >= 5 distinct grid lengths for alpha={alpha}, null={null}, M={min_segment}; got {}",
            lengths.len()
        )));
    }

    let m = points.len() as f64;
    let mean_x = points.iter().map(|(x, _)| x).sum::<f64>() / m;
    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|(x, _)| (x - mean_x) * (x - mean_x)).sum();
    let sxy: f64 = points.iter().map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_tot: f64 = points.iter().map(|(_, y)| (y - mean_y) * (y - mean_y)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    Ok(LogLinearFit {
        alpha,
        null,
        min_segment,
        intercept,
        slope,
        r_squared,
    })
}

/// Evaluate a fitted cutoff law at length `n`.
pub fn predict_cutoff(fit: &LogLinearFit, n: usize) -> f64 {
    fit.intercept + fit.slope * (n as f64).ln()
}
