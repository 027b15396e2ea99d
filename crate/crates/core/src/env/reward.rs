use crate::error::{Error, Result};
use crate::math;

/// `sqrt(-2 ln 0.1)`: makes the tolerance equal 0.1 at one margin outside.
pub const TOLERANCE_SCALE: f64 = 2.145_966_026_289_347;

/// Gaussian-shaped tolerance: 1 inside `[lo, hi]`, decaying to 0.1 at
/// distance `margin` outside.
pub fn reward_tolerance(x: f64, lo: f64, hi: f64, margin: f64) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(Error::InvalidArgument("tolerance margin must be positive".into()));
    }
    if lo > hi {
        return Err(Error::InvalidArgument("tolerance bounds are reversed".into()));
    }
    Ok(tolerance_unchecked(x, lo, hi, margin))
}

#[inline]
pub(crate) fn tolerance_unchecked(x: f64, lo: f64, hi: f64, margin: f64) -> f64 {
    let d = if x < lo {
        lo - x
    } else if x > hi {
        x - hi
    } else {
        return 1.0;
    };
    let s = d * TOLERANCE_SCALE / margin;
    math::exp(-0.5 * s * s)
}
