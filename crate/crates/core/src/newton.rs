//! Adaptively damped Newton iteration on a fixed discrete space.
//!
//! Residuals are measured in the discrete dual norm `sqrt(b^T M^{-1} b)` with
//! `M` the energy Gram matrix. The factorization of `M` is computed once per
//! space and shared by every damping trial.

use crate::error::{Error, Result};
use crate::fespace::{CoefVec, FESpace};
use crate::linsolve::Factorization;
use crate::problem::{jacobian_matrix, residual_vector, DualVec, SemilinearProblem};

/// Damping parameters below this value are treated as a failure.
pub const DELTA_FLOOR: f64 = 1.0 / (1u64 << 30) as f64;

pub const DEFAULT_MAX_STEPS: usize = 200;

#[derive(Debug, Clone)]
pub struct NewtonState {
    pub iterate: CoefVec,
    pub residual: DualVec,
    pub residual_norm: f64,
    pub delta_min: f64,
    pub k: usize,
    /// Damping parameter of the step that produced this iterate (1 for `k = 0`).
    pub last_delta: f64,
    /// Number of halvings in that step.
    pub trial_count: usize,
}

impl NewtonState {
    pub fn new(
        prob: &SemilinearProblem,
        space: &FESpace,
        energy_fac: &Factorization,
        u0: CoefVec,
        delta_min: f64,
    ) -> Result<Self> {
        if !(delta_min > 0.0 && delta_min <= 0.5) {
            return Err(Error::Config(format!("delta_min must lie in (0, 1/2], got {delta_min}")));
        }
        let residual = residual_vector(prob, space, &u0)?;
        let residual_norm = dual_norm(energy_fac, &residual)?;
        Ok(NewtonState { iterate: u0, residual, residual_norm, delta_min, k: 0, last_delta: 1.0, trial_count: 0 })
    }
}

/// `sqrt(b^T r)` where `M r = b`.
pub fn dual_norm(energy_fac: &Factorization, b: &DualVec) -> Result<f64> {
    if b.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let r = energy_fac.solve(b)?;
    let s: f64 = b.iter().zip(&r).map(|(x, y)| x * y).sum();
    Ok(s.max(0.0).sqrt())
}

/// Threshold factor `1 - delta_min^{3/2} / 2` of the damping criterion.
#[inline]
pub fn contraction_bound(delta_min: f64) -> f64 {
    1.0 - delta_min.powf(1.5) / 2.0
}

/// One Newton update followed by the damping search.
pub fn newton_step(
    prob: &SemilinearProblem,
    space: &FESpace,
    energy_fac: &Factorization,
    state: &NewtonState,
) -> Result<NewtonState> {
    if state.residual_norm == 0.0 {
        return Ok(NewtonState { k: state.k + 1, last_delta: 1.0, trial_count: 0, ..state.clone() });
    }
    let jac = jacobian_matrix(prob, space, &state.iterate)?;
    let update = CoefVec(Factorization::factor(&jac)?.solve(&state.residual)?);

    let mut delta = 1.0;
    let mut delta_min = state.delta_min;
    let mut trials = 0;
    loop {
        let candidate = state.iterate.axpy(delta, &update);
        let residual = residual_vector(prob, space, &candidate)?;
        let norm = dual_norm(energy_fac, &residual)?;
        if norm <= contraction_bound(delta_min) * state.residual_norm {
            return Ok(NewtonState {
                iterate: candidate,
                residual,
                residual_norm: norm,
                delta_min,
                k: state.k + 1,
                last_delta: delta,
                trial_count: trials,
            });
        }
        delta /= 2.0;
        delta_min = delta_min.min(delta);
        trials += 1;
        if delta < DELTA_FLOOR {
            return Err(Error::DampingFailure { step: state.k, floor: DELTA_FLOOR });
        }
    }
}

/// Iterate [`newton_step`] from `u0` until `stop` accepts a new iterate.
///
/// `stop` is called once per accepted iterate (never for rejected damping
/// trials) and is where callers evaluate their estimator. Returns all states,
/// starting with the initial one.
pub fn run_newton(
    prob: &SemilinearProblem,
    space: &FESpace,
    energy_fac: &Factorization,
    u0: CoefVec,
    delta_min: f64,
    max_steps: usize,
    stop: impl FnMut(&NewtonState) -> Result<bool>,
) -> Result<Vec<NewtonState>> {
    let initial = NewtonState::new(prob, space, energy_fac, u0, delta_min)?;
    run_newton_from(prob, space, energy_fac, initial, max_steps, stop)
}

/// As [`run_newton`], starting from an already evaluated state.
pub fn run_newton_from(
    prob: &SemilinearProblem,
    space: &FESpace,
    energy_fac: &Factorization,
    initial: NewtonState,
    max_steps: usize,
    mut stop: impl FnMut(&NewtonState) -> Result<bool>,
) -> Result<Vec<NewtonState>> {
    let mut history = vec![initial];
    loop {
        let last = history.last().expect("history starts nonempty");
        if last.k >= max_steps {
            return Err(Error::NonTermination(max_steps));
        }
        let next = newton_step(prob, space, energy_fac, last)?;
        let done = stop(&next)?;
        history.push(next);
        if done {
            return Ok(history);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseMatrix;

    #[test]
    fn dual_norm_closed_forms() {
        let m = SparseMatrix::from_dense(&[vec![4.0]], true);
        let f = Factorization::factor(&m).unwrap();
        assert_eq!(dual_norm(&f, &DualVec(vec![0.0])).unwrap(), 0.0);
        assert!((dual_norm(&f, &DualVec(vec![-3.0])).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn contraction_bound_values() {
        assert_eq!(contraction_bound(1.0), 0.5);
        assert!((contraction_bound(0.25) - (1.0 - 0.0625)).abs() < 1e-15);
    }
}
