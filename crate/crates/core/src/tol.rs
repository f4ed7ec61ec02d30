//! Global tolerance policy.
//!
//! Membership and equality tests compare against
//! `base * max(1, |x|_inf) * n`; numerical rank treats a singular value `s` as
//! zero when `s <= base * s_max * n`. The base defaults to `1e-10`.

use std::sync::atomic::{AtomicU64, Ordering};

pub const DEFAULT_BASE: f64 = 1e-10;

static BASE_BITS: AtomicU64 = AtomicU64::new(DEFAULT_BASE.to_bits());

pub fn base() -> f64 {
    f64::from_bits(BASE_BITS.load(Ordering::Relaxed))
}

/// Overrides the process-wide base tolerance. Non-positive or non-finite
/// values are ignored.
pub fn set_base(value: f64) {
    if value.is_finite() && value > 0.0 {
        BASE_BITS.store(value.to_bits(), Ordering::Relaxed);
    }
}

/// Absolute slack for a matrix of operator norm `norm` and dimension `n`.
pub fn scaled(norm: f64, n: usize) -> f64 {
    base() * norm.max(1.0) * n.max(1) as f64
}

/// Rank cut-off for singular values or eigenvalues of a positive matrix.
pub fn rank_cutoff(largest: f64, n: usize) -> f64 {
    base() * largest.abs() * n.max(1) as f64
}
