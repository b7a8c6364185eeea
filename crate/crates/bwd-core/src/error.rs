// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module of the crate.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, BwdError>;

/// Everything that can go wrong in this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BwdError {
    /// A precondition on caller-supplied data or configuration failed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A variance estimate came out at or below numeric tolerance, so the
    /// standardized merge statistic is undefined.
    #[error("zero variance: {0}")]
    ZeroVariance(String),

    /// The exact segmentation oracle was asked for more data than its
    /// quadratic dynamic program is meant to handle.
    #[error("oracle scale exceeded: n={n} is over the cap of {cap}")]
    OracleScaleExceeded { n: usize, cap: usize },

    /// A resampling null (permute/bootstrap) was requested without the
    /// observed sequence it resamples from.
    #[error("null requires data: {0}")]
    NullRequiresData(String),

    /// A log-linear cutoff fit was requested on too small a grid.
    #[error("insufficient grid: {0}")]
    InsufficientGrid(String),

    /// Simulated signal intervals cannot be placed under the gap
    /// constraints.
    #[error("infeasible placement: {0}")]
    InfeasiblePlacement(String),

    /// A binning window exceeds the sequence it should summarize.
    #[error("bin larger than sequence: bin={bin}, n={n}")]
    BinLargerThanSequence { bin: usize, n: usize },

    /// No cutoff is available for this sequence length / level, neither as
    /// a table entry nor through a fitted cutoff law.
    #[error("no cutoff for n={n}, alpha={alpha}")]
    MissingCutoff { n: usize, alpha: f64 },
}
