//! Central finite differences for validating tape gradients.
//!
//! The probed function returns `f64` so callers can evaluate a reference
//! path at double precision; perturbed inputs are stored back through `f32`
//! and the difference quotient uses the actually-realized step, which keeps
//! the quotient exact with respect to what the function saw.

use super::tensor::{Result, Tensor};

/// Numeric gradient of a scalar function by central differences, one
/// coordinate at a time.
pub fn central_differences<F>(mut f: F, x: &Tensor, eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x.data()[i];
        let plus = (orig as f64 + eps) as f32;
        let minus = (orig as f64 - eps) as f32;

        probe.data_mut()[i] = plus;
        let fp = f(&probe)?;
        probe.data_mut()[i] = minus;
        let fm = f(&probe)?;
        probe.data_mut()[i] = orig;

        let step = plus as f64 - minus as f64;
        grad.push((fp - fm) / step);
    }
    Ok(grad)
}

/// Largest relative deviation between a numeric and an analytic gradient.
/// Each coordinate is normalized by `max(|numeric|, |analytic|) + 1e-6`.
pub fn max_relative_error(numeric: &[f64], analytic: &Tensor) -> f64 {
    numeric
        .iter()
        .zip(analytic.data().iter())
        .map(|(&n, &a)| {
            let a = a as f64;
            (n - a).abs() / (n.abs().max(a.abs()) + 1e-6)
        })
        .fold(0.0, f64::max)
}

/// Central-difference check of `analytic` against `f` at `x`; returns the
/// max relative error over all coordinates.
pub fn finite_difference_check<F>(f: F, x: &Tensor, eps: f64, analytic: &Tensor) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let numeric = central_differences(f, x, eps)?;
    Ok(max_relative_error(&numeric, analytic))
}
