//! Scalar special functions used throughout the crate.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI, SQRT_2};

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * puruspe::erfc(-x * FRAC_1_SQRT_2)
    }
}

/// Standard normal survival function `1 - Φ(x)`, accurate in the upper tail.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

/// Standard normal quantile. Returns ±∞ at the endpoints.
#[inline]
pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        -SQRT_2 * puruspe::inverfc(2.0 * p)
    }
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// `ln Γ(x)` for `x > 0`.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    puruspe::ln_gamma(x)
}

/// Modified Bessel function of the second kind `K_ν(x)` for real order and `x > 0`.
///
/// `K_ν = K_{-ν}`, so negative orders are folded. Underflows to 0 beyond `x = 700`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x > 700.0 {
        return 0.0;
    }
    let (_, k, _, _) = puruspe::besselik(nu.abs(), x);
    k
}

/// Log of the Matérn normalizing constant `2^{1-κ}/Γ(κ)`.
#[inline]
pub(crate) fn ln_matern_const(kappa: f64) -> f64 {
    (1.0 - kappa) * LN_2 - ln_gamma(kappa)
}

#[inline]
pub(crate) fn ln_2pi() -> f64 {
    (2.0 * PI).ln()
}
