//! Iterated double-exponential quadrature over axis-aligned boxes.

use crate::error::{domain, Result};

/// Integral of `f` over the box `[lower, upper]`, one coordinate at a time.
///
/// `tol` is the absolute error target handed to each one-dimensional rule.
pub fn integrate_box(f: &dyn Fn(&[f64]) -> f64, lower: &[f64], upper: &[f64], tol: f64) -> Result<f64> {
    if lower.len() != upper.len() {
        return Err(domain("box bounds differ in dimension"));
    }
    if lower.iter().zip(upper).any(|(a, b)| !(a <= b)) {
        return Err(domain("box lower corner exceeds upper corner"));
    }
    Ok(nested(f, lower, upper, &[], tol))
}

fn nested(f: &dyn Fn(&[f64]) -> f64, lower: &[f64], upper: &[f64], prefix: &[f64], tol: f64) -> f64 {
    let i = prefix.len();
    if i == lower.len() {
        return f(prefix);
    }
    if lower[i] == upper[i] {
        return 0.0;
    }
    let inner = |t: f64| {
        let mut p = prefix.to_vec();
        p.push(t);
        nested(f, lower, upper, &p, tol)
    };
    quadrature::integrate(inner, lower[i], upper[i], tol).integral
}

/// Mean of `f` over the box under the uniform measure.
pub fn box_mean(f: &dyn Fn(&[f64]) -> f64, lower: &[f64], upper: &[f64], tol: f64) -> Result<f64> {
    let volume: f64 = lower.iter().zip(upper).map(|(a, b)| b - a).product();
    if !(volume > 0.0) {
        return Err(domain("box has zero volume"));
    }
    Ok(integrate_box(f, lower, upper, tol * volume)? / volume)
}
