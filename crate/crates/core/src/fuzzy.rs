//! Scalar membership mathematics.
//!
//! A generalized Gaussian `exp(-1/2 ((x-m)/sigma)^(2 beta^2))` morphs between
//! triangular-like (small beta), bell (beta = 1), and trapezoidal-like (large
//! beta) profiles. Making the shape exponent uncertain by `delta^2` yields an
//! interval type-2 set: the upper membership function (UMF) uses the exponent
//! `beta^2 + delta^2` inside one width of the center and `beta^2 - delta^2`
//! outside, the lower membership function (LMF) swaps the two. Both exponents
//! must stay strictly positive or the "membership" grows without bound away
//! from the center.

use crate::error::{Error, Result};

/// Relative margin keeping `delta` strictly below `|beta|` after projection.
pub const DELTA_MARGIN: f64 = 1e-6;

/// Smallest magnitude `beta` may take; below this no admissible `delta` exists.
pub const BETA_FLOOR: f64 = 1e-6;

/// Parameters of one uncertain-shape fuzzy set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeParams {
    /// Center, in input units.
    pub m: f64,
    /// Width, in input units; strictly positive.
    pub sigma: f64,
    /// Shape regulator (dimensionless).
    pub beta: f64,
    /// Shape-uncertainty regulator (dimensionless, non-negative).
    pub delta: f64,
}

impl ShapeParams {
    pub fn new(m: f64, sigma: f64, beta: f64, delta: f64) -> Result<Self> {
        let p = ShapeParams { m, sigma, beta, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && self.sigma.is_finite() && self.beta.is_finite() && self.delta.is_finite()) {
            return Err(Error::Domain("non-finite shape parameter".into()));
        }
        if self.sigma <= 0.0 {
            return Err(Error::Domain(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.delta < 0.0 {
            return Err(Error::Domain(format!("delta must be >= 0, got {}", self.delta)));
        }
        if self.beta * self.beta - self.delta * self.delta <= 0.0 {
            return Err(Error::Domain(format!(
                "beta^2 - delta^2 must be > 0, got beta={}, delta={}",
                self.beta, self.delta
            )));
        }
        Ok(())
    }
}

/// Projects `(beta, delta)` back into the admissible region
/// `beta^2 - delta^2 > 0`, `delta >= 0`.
///
/// `delta` enters the membership only as `delta^2`, so its absolute value is
/// taken first; it is then clamped to `|beta| * (1 - 1e-6)`. `|beta|` itself
/// is floored at [`BETA_FLOOR`] (sign preserved) so the clamp target is never
/// zero.
pub fn project_shape(beta: f64, delta: f64) -> (f64, f64) {
    let beta = if beta.abs() < BETA_FLOOR {
        if beta.is_sign_negative() {
            -BETA_FLOOR
        } else {
            BETA_FLOOR
        }
    } else {
        beta
    };
    let delta = delta.abs().min(beta.abs() * (1.0 - DELTA_MARGIN));
    (beta, delta)
}

fn check_x(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("membership argument must be finite, got {x}")))
    }
}

/// Type-1 adaptive-shape membership `exp(-1/2 ((x-m)/sigma)^(2 beta^2))`.
///
/// The base is squared before the exponent is applied, so the value is real
/// for any sign of `x - m` and `0^p = 0` holds for fractional exponents.
pub fn mu_type1(x: f64, p: &ShapeParams) -> Result<f64> {
    check_x(x)?;
    p.validate()?;
    let u = ((x - p.m) / p.sigma).powi(2);
    Ok((-0.5 * u.powf(p.beta * p.beta)).exp())
}

/// Upper membership function of the interval type-2 set.
pub fn umf(x: f64, p: &ShapeParams) -> Result<f64> {
    check_x(x)?;
    p.validate()?;
    let d = (x - p.m) / p.sigma;
    let exponent = if d.abs() <= 1.0 {
        p.beta * p.beta + p.delta * p.delta
    } else {
        p.beta * p.beta - p.delta * p.delta
    };
    Ok((-0.5 * d.powi(2).powf(exponent)).exp())
}

/// Lower membership function of the interval type-2 set.
pub fn lmf(x: f64, p: &ShapeParams) -> Result<f64> {
    check_x(x)?;
    p.validate()?;
    let d = (x - p.m) / p.sigma;
    let exponent = if d.abs() <= 1.0 {
        p.beta * p.beta - p.delta * p.delta
    } else {
        p.beta * p.beta + p.delta * p.delta
    };
    Ok((-0.5 * d.powi(2).powf(exponent)).exp())
}

/// Intermediates of one fuzzified feature at unit scale (m = 0, sigma = 1),
/// retained for the analytic Jacobians.
///
/// `lower = exp(-1/2 pow_lower)` with `pow_lower = (z^2)^exp_lower`, and the
/// same for the upper pair. The branch split at `|z| = 1` is already folded
/// into which of `beta^2 +- delta^2` each side carries.
#[derive(Debug, Clone, Copy)]
pub struct UnitActivation {
    pub z: f64,
    pub lower: f64,
    pub upper: f64,
    pub pow_lower: f64,
    pub pow_upper: f64,
    pub exp_lower: f64,
    pub exp_upper: f64,
    /// True when `|z| <= 1` (the branch where the UMF carries `beta^2 + delta^2`).
    pub inside: bool,
}

/// Evaluates the LMF/UMF pair at unit scale. Parameters are assumed admissible.
pub(crate) fn unit_activation(z: f64, beta: f64, delta: f64) -> UnitActivation {
    let u = z * z;
    let plus = beta * beta + delta * delta;
    let minus = beta * beta - delta * delta;
    let inside = z.abs() <= 1.0;
    let (exp_lower, exp_upper) = if inside { (minus, plus) } else { (plus, minus) };
    let pow_lower = u.powf(exp_lower);
    let pow_upper = u.powf(exp_upper);
    UnitActivation {
        z,
        lower: (-0.5 * pow_lower).exp(),
        upper: (-0.5 * pow_upper).exp(),
        pow_lower,
        pow_upper,
        exp_lower,
        exp_upper,
        inside,
    }
}
