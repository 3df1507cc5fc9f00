//! Differentiable soft clipping onto `[a, b]`.
//!
//! ```text
//! clip_s(x; a, b) = s·log(e^{x/s} + e^{a/s}) − s·log(e^{(x−b)/s} + 1)
//! ```
//!
//! The first term is a smooth `max(x, a)`, the second subtracts a smooth
//! `max(x − b, 0)`. Both go to their hard counterparts as `s → 0`.

use crate::diffcore::scalar::{log_add_exp, sigmoid, softplus_unit_with_grad};

#[inline]
pub fn soft_clip(x: f64, a: f64, b: f64, s: f64) -> f64 {
    s * log_add_exp(x / s, a / s) - s * softplus_unit_with_grad((x - b) / s).0
}

/// `d clip_s / dx = σ((x−a)/s) − σ((x−b)/s)`.
#[inline]
pub fn soft_clip_grad(x: f64, a: f64, b: f64, s: f64) -> f64 {
    sigmoid((x - a) / s) - sigmoid((x - b) / s)
}

pub fn hard_clip(x: f64, a: f64, b: f64) -> f64 {
    x.max(a).min(b)
}

/// Largest deviation from the hard clip over an evenly spaced grid on `[lo, hi]`.
pub fn max_clip_deviation(lo: f64, hi: f64, points: usize, a: f64, b: f64, s: f64) -> f64 {
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .map(|x| (soft_clip(x, a, b, s) - hard_clip(x, a, b)).abs())
        .fold(0.0, f64::max)
}
