//! Least-squares fits for convergence rates and decay shapes.

use crate::error::{ensure, Result};

/// Straight line `y = slope·x + intercept` with its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    ensure(x.len() == y.len(), "abscissae and ordinates differ in length")?;
    ensure(x.len() >= 2, "need at least two points")?;
    ensure(
        x.iter().chain(y).all(|v| v.is_finite()),
        "data must be finite",
    )?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    ensure(sxx > 0.0, "abscissae must not all coincide")?;
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Negated slope of `log err` against `log N`.
pub fn fit_rate(sizes: &[f64], errs: &[f64]) -> Result<f64> {
    ensure(sizes.len() >= 3, "need at least three points")?;
    ensure(
        sizes.iter().chain(errs).all(|v| *v > 0.0),
        "sizes and errors must be positive",
    )?;
    let lx: alloc::vec::Vec<f64> = sizes.iter().map(|v| libm::log(*v)).collect();
    let ly: alloc::vec::Vec<f64> = errs.iter().map(|v| libm::log(*v)).collect();
    Ok(-linear_fit(&lx, &ly)?.slope)
}
