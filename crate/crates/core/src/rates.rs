//! Least-squares convergence-rate fits in log-log scale.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    All,
    /// The last fraction of the points, by count.
    LastFraction(f64),
    /// Points with `x >= x_max / 10^d`.
    LastDecades(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Index range of `series` considered.
    pub window: Range<usize>,
}

/// Fit `log y = intercept + slope * log x` over the window; points with
/// nonpositive coordinates are skipped.
pub fn fit_rate(series: &[(f64, f64)], window: Window) -> Result<RateFit> {
    let n = series.len();
    let start = match window {
        Window::All => 0,
        Window::LastFraction(f) => n - ((f.clamp(0.0, 1.0) * n as f64).ceil() as usize).min(n),
        Window::LastDecades(d) => {
            let x_max = series.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            let lo = x_max / 10f64.powf(d) * (1.0 - 1e-12);
            series.iter().position(|p| p.0 >= lo).unwrap_or(n)
        }
    };
    let pts: Vec<(f64, f64)> = series[start..]
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::InsufficientPoints(pts.len()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints(1));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(RateFit { slope, intercept, r_squared, window: start..n })
}
