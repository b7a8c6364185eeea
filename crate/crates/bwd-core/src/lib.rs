// SPDX-License-Identifier: MIT OR Apache-2.0

//! Change-point detection for the normal mean model by backward merging.
//!
//! Detection starts from singleton groups and repeatedly merges the adjacent
//! pair whose merge would raise the within-group sum of squared errors the
//! least. Merging stops when the standardized statistic of the cheapest pair
//! exceeds a cutoff; the surviving group boundaries are the change points.
//! The cutoff is calibrated by Monte Carlo under a null model of the noise
//! ([`calibration`]), and an optional epidemic mode anchors segments to a
//! known baseline mean ([`engine::run_bwd_epidemic`]).
//!
//! ```
//! use bwd_core::engine::{run_bwd, BwdConfig};
//! use bwd_core::model::Sequence;
//!
//! let mut values = vec![0.0; 40];
//! for v in values.iter_mut().skip(20) {
//!     *v = 5.0;
//! }
//! let seq = Sequence::new(values).expect("values should be finite");
//! let config = BwdConfig::new(0.05, 3.0, 1.0);
//! let result = run_bwd(&seq, &config).expect("detection should run");
//! assert_eq!(result.change_points, vec![20]);
//! ```

#![forbid(unsafe_code)]

pub mod calibration;
pub mod engine;
pub mod error;
pub mod evalsim;
pub mod model;
mod parallel;
pub mod preprocess;
pub mod util;

pub use error::{BwdError, Result};

/// Relative tolerance for floating-point identity checks throughout the
/// crate (and its test suites).
pub const TOL_NUM: f64 = 1e-9;

/// `true` when `a` and `b` agree up to [`TOL_NUM`] relative tolerance
/// (absolute below 1.0 so that values near zero compare sanely).
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL_NUM * a.abs().max(b.abs()).max(1.0)
}

/// Configure the size of the global thread pool used for data-parallel
/// Monte Carlo work. A no-op without the `parallel` feature. Returns an
/// error if the pool was already initialized with a different size.
#[cfg(feature = "parallel")]
pub fn configure_threads(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| BwdError::InvalidInput(format!("thread pool: {e}")))
}

/// Configure the size of the global thread pool used for data-parallel
/// Monte Carlo work. A no-op without the `parallel` feature. Returns an
/// error if the pool was already initialized with a different size.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_threads: usize) -> Result<()> {
    Ok(())
}
