//! Chi-squared distribution function and upper quantiles.

use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{Error, Result};

/// `P(chi2(df) <= x)`.
pub fn chi2_cdf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_lr(df as f64 / 2.0, x / 2.0)
}

/// `P(chi2(df) > x)`.
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(df as f64 / 2.0, x / 2.0)
}

/// `(1 - alpha)`-quantile of `chi2(df)`.
///
/// Bisection on the regularized upper incomplete gamma function, run until
/// the bracket collapses to adjacent floating-point values.
pub fn chi2_quantile(df: usize, alpha: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::InvalidDegrees);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidLevel(alpha));
    }
    let mut lo = 0.0f64;
    let mut hi = (df as f64).max(1.0) * 2.0;
    while chi2_sf(hi, df) > alpha {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if chi2_sf(mid, df) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
