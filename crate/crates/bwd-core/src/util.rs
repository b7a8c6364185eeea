// SPDX-License-Identifier: MIT OR Apache-2.0

//! Small shared helpers: significant-digit formatting, normal quantiles,
//! and the seeding scheme for Monte Carlo replicates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Format `x` with `sig` significant digits, `%g` style: plain decimal for
/// moderate magnitudes, scientific notation once the exponent leaves
/// `[-4, sig)`. Formatting is idempotent across a parse round trip, which
/// the file formats rely on.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    assert!(sig >= 1, "sig must be >= 1; got {sig}");
    if !x.is_finite() {
        return format!("{x}");
    }
    // Normalize -0.0 so output files never distinguish signed zeros.
    let x = if x == 0.0 { 0.0 } else { x };
    if x == 0.0 {
        return format!("{:.*}", sig - 1, 0.0);
    }
    let exp = x.abs().log10().floor() as i32;
    if exp < -4 || exp >= sig as i32 {
        format!("{:.*e}", sig - 1, x)
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        format!("{:.*}", decimals, x)
    }
}

/// Quantile of the standard normal distribution: the value with CDF `p`.
pub fn standard_normal_quantile(p: f64) -> f64 {
    assert!(
        p > 0.0 && p < 1.0,
        "quantile probability must be in (0, 1); got {p}"
    );
    let normal = Normal::new(0.0, 1.0).expect("unit normal should construct");
    normal.inverse_cdf(p)
}

/// RNG for replicate `replicate` of a study keyed by `seed`. Each replicate
/// draws from its own stream of one counter-based generator, so results do
/// not depend on how replicates are scheduled across threads.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Robust ceiling for quantile ranks: counteracts decimal dust in products
/// like `0.9 * 1000` that land an ulp above the exact integer.
pub(crate) fn rank_ceil(x: f64) -> usize {
    (x - 1e-9).ceil().max(1.0) as usize
}
