// SPDX-License-Identifier: MIT OR Apache-2.0

//! Feature-gated map over replicate indices. With `parallel` the work is
//! spread over the rayon pool; without it the same closure runs serially.
//! Output order is by index either way, so callers are deterministic
//! regardless of the feature or thread count.

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}
