//! Plain `f64` activation functions and their derivatives.
//!
//! Each function has a matching tape op in [`super::tape`]; the tape calls
//! these to compute node values and local gradients.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Logistic sigmoid, stable in both tails.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` together with its derivative `sigmoid(x)`, sharing one `exp`.
#[inline]
pub fn softplus_unit_with_grad(x: f64) -> (f64, f64) {
    let e = (-x.abs()).exp();
    let value = x.max(0.0) + e.ln_1p();
    let grad = if x >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    (value, grad)
}

/// `(1/beta) * log(1 + exp(beta * x))`.
///
/// Evaluated as `max(x, 0) + log1p(exp(-beta|x|)) / beta`, which follows the
/// linear and zero asymptotes without overflow.
#[inline]
pub fn softplus(x: f64, beta: f64) -> f64 {
    debug_assert!(beta > 0.0);
    softplus_unit_with_grad(beta * x).0 / beta
}

/// Derivative of [`softplus`] with respect to `x`.
#[inline]
pub fn softplus_grad(x: f64, beta: f64) -> f64 {
    sigmoid(beta * x)
}

/// Inverse of [`softplus`]; `y` must be strictly positive.
pub fn softplus_inverse(y: f64, beta: f64) -> f64 {
    debug_assert!(y > 0.0 && beta > 0.0);
    let by = beta * y;
    if by > 30.0 {
        y
    } else {
        by.exp_m1().ln() / beta
    }
}

/// Exact GELU, `x * Φ(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    x * std_normal_cdf(x)
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    std_normal_cdf(x) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// `elu(x) + 1`: `x + 1` for positive inputs, `exp(x)` otherwise.
#[inline]
pub fn elu_plus_one(x: f64) -> f64 {
    if x > 0.0 {
        x + 1.0
    } else {
        x.exp()
    }
}

#[inline]
pub fn elu_plus_one_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    let lo = a.min(b);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Upper end of the leakage band of the soft clip relative to the hard clip.
pub fn soft_clip_leakage(s: f64) -> f64 {
    2.0 * s * LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_closed_forms() {
        assert!((softplus(0.0, 1.0) - LN_2).abs() < 1e-15);
        assert!((softplus(10.0, 10.0) - 10.0).abs() < 1e-12);
        assert!(softplus(-50.0, 10.0) > 0.0);
        assert!(softplus(-50.0, 10.0) < 1e-200);
        // linear asymptote far beyond the |beta x| > 30 regime
        assert_eq!(softplus(1e6, 1.0), 1e6);
    }

    #[test]
    fn softplus_inverse_round_trips() {
        for &y in &[1e-6, 0.05, 0.5, 1.0, 4.0, 50.0] {
            for &beta in &[1.0, 10.0] {
                let x = softplus_inverse(y, beta);
                assert!((softplus(x, beta) - y).abs() < 1e-10 * y.max(1.0), "y={y} beta={beta}");
            }
        }
    }

    #[test]
    fn gelu_center_and_tails() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(10.0) - 10.0).abs() < 1e-12);
        assert!(gelu(-10.0).abs() < 1e-12);
        assert!((gelu_grad(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn elu_plus_one_at_zero() {
        assert_eq!(elu_plus_one(0.0), 1.0);
        assert_eq!(elu_plus_one_grad(0.0), 1.0);
    }

    #[test]
    fn log_add_exp_is_stable() {
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + LN_2)).abs() < 1e-12);
        assert!((log_add_exp(-1000.0, 0.0)).abs() < 1e-300);
    }
}
