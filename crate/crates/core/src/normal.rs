//! Standard normal density and log-CDF helpers that stay finite deep in the tails.
//!
//! The censored likelihood evaluates `ln Φ(z)` and `ln(1 − Φ(z))` at points far
//! from the data during optimization. Below `z = −8` the CDF is computed from
//! a continued fraction for `erfc` in log space instead of `ln(erfc(..))`,
//! which would underflow to `−∞` near `z ≈ −38`.

use std::f64::consts::{LN_2, PI, SQRT_2};

use libm::erfc;

/// `ln √(2π)`
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Switch point (in `z`) between the direct and asymptotic tail evaluation.
const TAIL_SWITCH: f64 = 8.0;

const CF_TERMS: usize = 60;

/// Log density of the standard normal.
#[inline]
pub fn ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// `ln Φ(z)`
pub fn ln_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z < -TAIL_SWITCH {
        ln_erfc_large(-z / SQRT_2) - LN_2
    } else if z > 0.0 {
        (-0.5 * erfc(z / SQRT_2)).ln_1p()
    } else {
        (0.5 * erfc(-z / SQRT_2)).ln()
    }
}

/// `ln(1 − Φ(z))`
#[inline]
pub fn ln_sf(z: f64) -> f64 {
    ln_cdf(-z)
}

/// `ln erfc(x)` for large positive `x` from the Laplace continued fraction
/// `erfc(x) = e^{-x²}/√π · 1/(x + ½/(x + 1/(x + 3/2/(x + …))))`.
fn ln_erfc_large(x: f64) -> f64 {
    if x.is_infinite() {
        return f64::NEG_INFINITY;
    }
    let mut t = x;
    for k in (1..=CF_TERMS).rev() {
        t = x + (k as f64 * 0.5) / t;
    }
    -x * x - 0.5 * PI.ln() - t.ln()
}
