//! Dörfler marking with minimal cardinality.

use crate::error::{Error, Result};
use crate::estimator::LocalEstimators;
use crate::mesh::MarkedSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkParams {
    pub theta: f64,
    /// Informational only: greedy selection on sorted indicators is exactly minimal.
    pub cmark: f64,
}

impl MarkParams {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::Config(format!("theta must lie in (0, 1], got {theta}")));
        }
        Ok(MarkParams { theta, cmark: 1.0 })
    }
}

/// Smallest set `M` with `theta * sum_T eta_T^2 <= sum_{T in M} eta_T^2`.
///
/// Indicators are taken in descending order, ties by lower index; zero
/// indicators are never marked.
pub fn doerfler_mark(est: &LocalEstimators, params: MarkParams) -> MarkedSet {
    let eta = &est.eta_sq;
    let mut order: Vec<usize> = (0..eta.len()).filter(|&t| eta[t] > 0.0).collect();
    order.sort_by(|&a, &b| eta[b].total_cmp(&eta[a]));
    let total: f64 = order.iter().map(|&t| eta[t]).sum();
    if total == 0.0 {
        return MarkedSet::empty();
    }
    let goal = params.theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for &t in &order {
        marked.push(t);
        acc += eta[t];
        if acc >= goal {
            break;
        }
    }
    MarkedSet::new(marked, eta.len()).expect("indices come from the estimator")
}
