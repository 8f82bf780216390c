//! Executable property checks on small instances, each packaged as a
//! [`PropertyReport`]. All bounds are engineering tolerances.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::driver::{estimator_series, nailfem_run, quasi_error_series, reduction_factors, RunConfig, RunHistory};
use crate::error::{Error, Result};
use crate::estimator::local_estimators;
use crate::fespace::{prolongate, CoefVec, FESpace};
use crate::linsolve::Factorization;
use crate::mesh::Triangulation;
use crate::newton::{dual_norm, newton_step, NewtonState};
use crate::problem::{energy_matrix, residual_vector, SemilinearProblem};
use crate::rates::{fit_rate, Window};
use crate::sparse::SparseMatrix;

pub const DEFAULT_SEED: u64 = 0x5eed_2024;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub name: String,
    pub passed: bool,
    pub observed: BTreeMap<String, f64>,
    pub bound: BTreeMap<String, f64>,
    pub context: String,
}

impl PropertyReport {
    fn new(name: impl Into<String>, context: impl Into<String>) -> Self {
        PropertyReport {
            name: name.into(),
            passed: true,
            observed: BTreeMap::new(),
            bound: BTreeMap::new(),
            context: context.into(),
        }
    }

    fn observe(&mut self, key: &str, value: f64) -> &mut Self {
        self.observed.insert(key.to_string(), value);
        self
    }

    fn bound(&mut self, key: &str, value: f64) -> &mut Self {
        self.bound.insert(key.to_string(), value);
        self
    }

    fn require(&mut self, ok: bool) -> &mut Self {
        self.passed &= ok;
        self
    }
}

fn energy_norm(m: &SparseMatrix, v: &[f64]) -> f64 {
    m.bilinear(v, v).max(0.0).sqrt()
}

/// Newton iterated until the residual stops decreasing by more than 1e-14
/// relative: the discrete reference solution used by the oracles.
pub fn stagnation_solve(prob: &SemilinearProblem, space: &FESpace, energy_fac: &Factorization) -> Result<NewtonState> {
    let mut state = NewtonState::new(prob, space, energy_fac, CoefVec::zeros(space.n_free()), 0.5)?;
    for _ in 0..200 {
        if state.residual_norm == 0.0 {
            break;
        }
        // At round-off level no damped step can reduce the residual further.
        let next = match newton_step(prob, space, energy_fac, &state) {
            Err(Error::DampingFailure { .. }) => break,
            other => other?,
        };
        let stagnated = next.residual_norm > (1.0 - 1e-14) * state.residual_norm;
        state = next;
        if stagnated {
            break;
        }
    }
    Ok(state)
}

/// Ratio `||F - A v|| / ||u* - v||` for random `v` near the discrete solution.
pub fn check_linearization_equivalence(
    prob: &SemilinearProblem,
    space: &FESpace,
    trials: usize,
    seed: u64,
    max_spread: f64,
) -> Result<PropertyReport> {
    let m = energy_matrix(prob, space);
    let fac = Factorization::cholesky(&m)?;
    let star = stagnation_solve(prob, space, &fac)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    let n = space.n_free();
    for _ in 0..trials {
        let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scale = 10f64.powf(rng.gen_range(-4.0..-2.0)) / energy_norm(&m, &w).max(f64::MIN_POSITIVE);
        w.iter_mut().for_each(|x| *x *= scale);
        let dist = energy_norm(&m, &w);
        if dist == 0.0 {
            continue;
        }
        let v = star.iterate.axpy(1.0, &CoefVec(w));
        let res = dual_norm(&fac, &residual_vector(prob, space, &v)?)?;
        let ratio = res / dist;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    let mut rep = PropertyReport::new(
        "linearization_equivalence",
        format!("problem={} p={} dofs={} trials={trials} seed={seed}", prob.name, space.degree(), n),
    );
    rep.observe("ratio_min", lo)
        .observe("ratio_max", hi)
        .observe("spread", hi / lo)
        .observe("reference_residual", star.residual_norm)
        .bound("spread_max", max_spread)
        .require(lo > 0.0 && hi.is_finite() && hi / lo <= max_spread);
    Ok(rep)
}

/// Stability of the estimator in its argument and reduction under one
/// uniform refinement with a fixed (prolongated) function.
pub fn check_axiom_a1_a2(prob: &SemilinearProblem, p: usize, seed: u64) -> Result<PropertyReport> {
    let coarse_mesh = Arc::new(Triangulation::initial(&prob.domain)?.uniform_refine()?);
    let coarse = FESpace::new(coarse_mesh.clone(), p)?;
    let m = energy_matrix(prob, &coarse);
    let n = coarse.n_free();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Amplitude small enough that c(v) stays moderate for the exponential nonlinearity.
    let amp = 0.02;

    let mut constants = Vec::new();
    for _ in 0..5 {
        let v = CoefVec((0..n).map(|_| amp * rng.gen_range(-1.0..1.0)).collect());
        let eta_v = local_estimators(prob, &coarse, &v).total;
        let mut c: f64 = 0.0;
        for _ in 0..10 {
            let d: Vec<f64> = (0..n).map(|_| 1e-4 * amp * rng.gen_range(-1.0..1.0)).collect();
            let dist = energy_norm(&m, &d);
            let w = v.axpy(1.0, &CoefVec(d));
            let eta_w = local_estimators(prob, &coarse, &w).total;
            c = c.max((eta_v - eta_w).abs() / dist);
        }
        constants.push(c);
    }
    let c_min = constants.iter().copied().fold(f64::INFINITY, f64::min);
    let c_max = constants.iter().copied().fold(0.0, f64::max);

    let fine_mesh = Arc::new(coarse_mesh.uniform_refine()?);
    let fine = FESpace::new(fine_mesh, p)?;
    let v = CoefVec((0..n).map(|_| amp * rng.gen_range(-1.0..1.0)).collect());
    let eta_coarse = local_estimators(prob, &coarse, &v).total;
    let eta_fine = local_estimators(prob, &fine, &prolongate(&coarse, &fine, &v)?).total;
    let reduction = eta_fine / eta_coarse;

    let mut rep = PropertyReport::new("axioms_stability_reduction", format!("problem={} p={p} seed={seed}", prob.name));
    rep.observe("stability_constant_min", c_min)
        .observe("stability_constant_max", c_max)
        .observe("reduction_ratio", reduction)
        .bound("stability_spread_max", 10.0)
        .bound("reduction_ratio_max", 1.0 + 1e-10)
        .require(c_max.is_finite() && c_min > 0.0 && c_max <= 10.0 * c_min)
        .require(reduction <= 1.0 + 1e-10);
    Ok(rep)
}

/// Expected final-estimator slope band for an adaptive run of degree `p`.
pub fn adaptive_slope_band(p: usize) -> (f64, f64) {
    let center = -(p as f64) / 2.0;
    let half = (0.1 * p as f64).max(0.15);
    (center - half, center + half)
}

/// Lower bound for the slope of a uniform run: the corner singularity caps
/// the rate at 1/3.
pub fn uniform_slope_floor(p: usize) -> f64 {
    -(p as f64 / 2.0).min(1.0 / 3.0) - 0.12
}

/// Reports on the invariants and rates of one complete run.
pub fn check_history(cfg: &RunConfig, h: &RunHistory) -> Vec<PropertyReport> {
    let ctx = format!(
        "problem={} p={} theta={} lambda_lin={} kmin={} uniform={} max_triangles={:?}",
        cfg.problem.name, cfg.degree, cfg.theta, cfg.lambda_lin, cfg.k_min, cfg.uniform, cfg.max_triangles
    );
    let mut out = Vec::new();

    let mut rep = PropertyReport::new("stopping_criterion", ctx.clone());
    let mut worst: f64 = 0.0;
    let mut k_ok = true;
    for r in h.level_finals() {
        worst = worst.max(r.residual_norm - cfg.lambda_lin * r.estimator);
        k_ok &= r.k >= cfg.k_min;
    }
    rep.observe("max_excess", worst).bound("max_excess", 1e-12).require(worst <= 1e-12 && k_ok);
    out.push(rep);

    let mut rep = PropertyReport::new("delta_min_monotone", ctx.clone());
    let ok = h.records.windows(2).all(|w| w[1].delta_min <= w[0].delta_min);
    rep.observe("final_delta_min", h.final_delta_min()).require(ok);
    out.push(rep);

    let mut rep = PropertyReport::new("cumulative_cost", ctx.clone());
    let mut max_err: f64 = 0.0;
    for r in &h.records {
        let expected: f64 =
            h.records.iter().filter(|q| q.in_q && q.total_step <= r.total_step).map(|q| q.n_triangles as f64).sum();
        max_err = max_err.max((expected - r.cumulative_cost).abs());
    }
    let increasing = quasi_error_series(h).windows(2).all(|w| w[1].0 > w[0].0);
    rep.observe("max_abs_error", max_err).require(max_err == 0.0 && increasing);
    out.push(rep);

    let red = reduction_factors(h);
    let mut rep = PropertyReport::new("reduction_factors", ctx.clone());
    let max_r = red.iter().map(|r| r.2).fold(0.0, f64::max);
    rep.observe("max", max_r).bound("max", 1.0).require(red.iter().all(|r| r.2 < 1.0));
    out.push(rep);

    let mut rep = PropertyReport::new("quasi_error_r_linear", ctx.clone());
    let qe = quasi_error_series(h);
    let ratios: Vec<f64> = qe.windows(2).map(|w| w[1].1 / w[0].1).collect();
    let geo = (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len().max(1) as f64).exp();
    let max_q = ratios.iter().copied().fold(0.0, f64::max);
    rep.observe("geometric_mean_ratio", geo)
        .observe("max_ratio", max_q)
        .bound("geometric_mean_ratio", 1.0)
        .require(!ratios.is_empty() && geo < 1.0 && max_q.is_finite());
    out.push(rep);

    let mut rep = PropertyReport::new("undamped_terminal_phase", ctx.clone());
    let deltas: Vec<f64> = h.records.iter().filter_map(|r| r.delta_used).collect();
    let tail = &deltas[deltas.len().saturating_sub(10)..];
    rep.observe("steps_checked", tail.len() as f64)
        .observe("min_delta", tail.iter().copied().fold(1.0, f64::min))
        .require(tail.len() == 10 && tail.iter().all(|&d| d == 1.0));
    out.push(rep);

    let mut rep = PropertyReport::new("estimator_rate", ctx);
    match fit_rate(&estimator_series(h), Window::LastDecades(1.0)) {
        Ok(fit) => {
            rep.observe("slope", fit.slope).observe("r_squared", fit.r_squared);
            if cfg.uniform {
                let floor = uniform_slope_floor(cfg.degree);
                rep.bound("slope_min", floor).require(fit.slope >= floor);
            } else {
                let (lo, hi) = adaptive_slope_band(cfg.degree);
                rep.bound("slope_min", lo).bound("slope_max", hi).require((lo..=hi).contains(&fit.slope));
            }
        }
        Err(_) => {
            rep.require(false);
        }
    }
    out.push(rep);
    out
}

/// Run `cfg` and check its history.
pub fn check_full_run(cfg: &RunConfig) -> Result<Vec<PropertyReport>> {
    let h = nailfem_run(cfg).map_err(|f| f.error)?;
    Ok(check_history(cfg, &h))
}
