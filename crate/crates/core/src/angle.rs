use std::f64::consts::PI;

pub(crate) const MODULE_SPACING: f64 = 2.0 * PI / 3.0;

/// Wraps `x` into `[0, period)`.
pub(crate) fn wrap(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    // rem_euclid can round up to `period` for tiny negative inputs
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Wraps `x` into `(-period/2, period/2]`.
pub(crate) fn wrap_signed(x: f64, period: f64) -> f64 {
    let r = wrap(x, period);
    if r > period / 2.0 {
        r - period
    } else {
        r
    }
}
