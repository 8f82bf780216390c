//! CSV history and JSON summary of a run.

use serde::Serialize;

use crate::driver::{estimator_series, quasi_error_series, reduction_factors, RunHistory};
use crate::rates::{fit_rate, Window};

pub const CSV_HEADER: &str =
    "ell,k,total_step,n_triangles,n_free_dofs,residual_norm,estimator,quasi_error,delta_used,delta_min,cumulative_cost,energy";

/// One row per record; floats use the shortest round-trip scientific form.
pub fn history_csv(h: &RunHistory) -> String {
    let mut out = String::with_capacity(128 * (h.records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    for r in &h.records {
        out.push_str(&format!(
            "{},{},{},{},{},{:e},{:e},{:e},{},{:e},{:e},{}\n",
            r.ell,
            r.k,
            r.total_step,
            r.n_triangles,
            r.n_free_dofs,
            r.residual_norm,
            r.estimator,
            r.quasi_error,
            opt(r.delta_used),
            r.delta_min,
            r.cumulative_cost,
            opt(r.energy),
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    /// Slope of the final-iterate estimator against cumulative cost over the last decade of cost.
    pub rate_slope_estimator: Option<f64>,
    pub rate_slope_quasi_error: Option<f64>,
    pub final_delta_min: f64,
    pub max_reduction_factor: Option<f64>,
    pub levels: usize,
    pub total_newton_steps: usize,
    /// `"lu"` when Jacobians are nonsymmetric, `"cholesky"` otherwise.
    pub jacobian_path: &'static str,
    pub final_triangles: usize,
    pub final_estimator: Option<f64>,
}

/// Window used for all reported slopes.
pub const RATE_WINDOW: Window = Window::LastDecades(1.0);

pub fn summarize(h: &RunHistory) -> Summary {
    let slope = |s: Vec<(f64, f64)>| fit_rate(&s, RATE_WINDOW).ok().map(|f| f.slope);
    let max_red = reduction_factors(h).iter().map(|r| r.2).fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    Summary {
        rate_slope_estimator: slope(estimator_series(h)),
        rate_slope_quasi_error: slope(quasi_error_series(h)),
        final_delta_min: h.final_delta_min(),
        max_reduction_factor: max_red,
        levels: h.levels.len(),
        total_newton_steps: h.total_newton_steps(),
        jacobian_path: if h.nonsymmetric_path { "lu" } else { "cholesky" },
        final_triangles: h.records.last().map_or(0, |r| r.n_triangles),
        final_estimator: h.level_finals().last().map(|r| r.estimator),
    }
}
