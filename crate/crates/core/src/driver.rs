//! The adaptive loop: solve (damped Newton with an estimator-based stopping
//! rule), estimate, mark, refine, and prolongate the final iterate.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimator::{local_estimators, LocalEstimators};
use crate::fespace::{prolongate, CoefVec, FESpace};
use crate::linsolve::Factorization;
use crate::marking::{doerfler_mark, MarkParams};
use crate::mesh::{MarkedSet, Triangulation};
use crate::newton::{run_newton_from, NewtonState, DEFAULT_MAX_STEPS};
use crate::problem::{energy, energy_matrix, SemilinearProblem};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: SemilinearProblem,
    /// Initial mesh; defaults to the problem's domain.
    pub mesh: Option<Triangulation>,
    pub degree: usize,
    pub theta: f64,
    pub lambda_lin: f64,
    pub k_min: usize,
    pub max_triangles: Option<usize>,
    pub max_cost: Option<f64>,
    pub tol: Option<f64>,
    pub max_levels: Option<usize>,
    /// Refine every element (the `theta = 1` baseline).
    pub uniform: bool,
    pub max_newton_steps: usize,
}

impl RunConfig {
    pub fn new(problem: SemilinearProblem, degree: usize) -> Self {
        RunConfig {
            problem,
            mesh: None,
            degree,
            theta: 0.3,
            lambda_lin: 0.1,
            k_min: 1,
            max_triangles: None,
            max_cost: Some(5e6),
            tol: None,
            max_levels: None,
            uniform: false,
            max_newton_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_lin > 0.0) {
            return Err(Error::Config(format!("lambda_lin must be positive, got {}", self.lambda_lin)));
        }
        if self.k_min < 1 {
            return Err(Error::Config("kmin must be at least 1".into()));
        }
        MarkParams::new(self.theta)?;
        if self.max_triangles.is_none() && self.max_cost.is_none() && self.tol.is_none() && self.max_levels.is_none() {
            return Err(Error::Config("at least one termination bound is required".into()));
        }
        if self.max_newton_steps == 0 {
            return Err(Error::Config("the Newton step cap must be positive".into()));
        }
        Ok(())
    }

    fn effective_theta(&self) -> f64 {
        if self.uniform {
            1.0
        } else {
            self.theta
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub ell: usize,
    pub k: usize,
    pub total_step: usize,
    pub n_triangles: usize,
    pub n_free_dofs: usize,
    pub residual_norm: f64,
    pub estimator: f64,
    pub quasi_error: f64,
    /// Damping parameter of the step producing this iterate; `None` for `k = 0`.
    pub delta_used: Option<f64>,
    pub damping_trials: usize,
    pub delta_min: f64,
    pub cumulative_cost: f64,
    /// Energy of the iterate when the problem has one.
    pub energy: Option<f64>,
    /// Whether the record belongs to the index set of distinct total steps:
    /// a level's final record is dropped there when the next level exists,
    /// because it coincides with the next level's initial guess.
    pub in_q: bool,
}

#[derive(Debug, Clone)]
pub struct LevelSnapshot {
    pub mesh: Arc<Triangulation>,
    pub iterate: CoefVec,
    pub estimators: LocalEstimators,
    /// Elements marked for refinement (empty on the final level).
    pub marked: MarkedSet,
}

#[derive(Debug, Clone)]
pub struct RunHistory {
    pub records: Vec<StepRecord>,
    pub levels: Vec<LevelSnapshot>,
    /// Mesh of the last level reached, if any.
    pub final_mesh: Option<Arc<Triangulation>>,
    pub degree: usize,
    /// `true` when the Jacobians were factored by LU (nonsymmetric path).
    pub nonsymmetric_path: bool,
}

impl RunHistory {
    /// Final record `(ell, k_bar[ell])` of every completed level.
    pub fn level_finals(&self) -> Vec<&StepRecord> {
        let mut out: Vec<&StepRecord> = Vec::new();
        for r in &self.records {
            match out.last() {
                Some(last) if last.ell == r.ell => *out.last_mut().unwrap() = r,
                _ => out.push(r),
            }
        }
        out.truncate(self.levels.len());
        out
    }

    pub fn total_newton_steps(&self) -> usize {
        self.records.iter().filter(|r| r.k > 0).count()
    }

    pub fn final_delta_min(&self) -> f64 {
        self.records.last().map_or(0.5, |r| r.delta_min)
    }
}

/// Failure of a run, carrying everything computed before it.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    #[source]
    pub error: Error,
    pub history: RunHistory,
}

/// `cost(s) = sum over records in Q with total step <= s of #T`.
pub fn assign_cumulative_cost(records: &mut [StepRecord]) {
    let mut q: Vec<(usize, usize)> = records.iter().filter(|r| r.in_q).map(|r| (r.total_step, r.n_triangles)).collect();
    q.sort_by_key(|&(s, _)| s);
    let mut prefix = Vec::with_capacity(q.len());
    let mut acc = 0.0;
    for &(_, n) in &q {
        acc += n as f64;
        prefix.push(acc);
    }
    for r in records.iter_mut() {
        let cnt = q.partition_point(|&(s, _)| s <= r.total_step);
        r.cumulative_cost = if cnt == 0 { 0.0 } else { prefix[cnt - 1] };
    }
}

fn finalize(
    mut records: Vec<StepRecord>,
    levels: Vec<LevelSnapshot>,
    mesh: Option<Arc<Triangulation>>,
    cfg: &RunConfig,
) -> RunHistory {
    if let Some(last_ell) = records.last().map(|r| r.ell) {
        let n = records.len();
        for i in 0..n {
            let next_level_exists = records[i].ell < last_ell;
            let is_level_final = i + 1 == n || records[i + 1].ell != records[i].ell;
            records[i].in_q = !(is_level_final && next_level_exists);
        }
    }
    assign_cumulative_cost(&mut records);
    RunHistory {
        records,
        levels,
        final_mesh: mesh,
        degree: cfg.degree,
        nonsymmetric_path: !cfg.problem.is_symmetric(),
    }
}

pub fn nailfem_run(cfg: &RunConfig) -> std::result::Result<RunHistory, Box<RunFailure>> {
    let mut records = Vec::new();
    let mut levels = Vec::new();
    let mut mesh = None;
    let outcome = run_levels(cfg, &mut records, &mut levels, &mut mesh);
    let history = finalize(records, levels, mesh, cfg);
    match outcome {
        Ok(()) => Ok(history),
        Err(error) => Err(Box::new(RunFailure { error, history })),
    }
}

fn run_levels(
    cfg: &RunConfig,
    records: &mut Vec<StepRecord>,
    levels: &mut Vec<LevelSnapshot>,
    mesh_out: &mut Option<Arc<Triangulation>>,
) -> Result<()> {
    cfg.validate()?;
    let prob = &cfg.problem;
    let params = MarkParams::new(cfg.effective_theta())?;
    let mesh = match &cfg.mesh {
        Some(m) => m.clone(),
        None => Triangulation::initial(&prob.domain)?,
    };
    let mut mesh = Arc::new(mesh);
    *mesh_out = Some(mesh.clone());
    let mut space = FESpace::new(mesh.clone(), cfg.degree)?;
    let mut u0 = CoefVec::zeros(space.n_free());
    let mut delta_min = 0.5;
    let mut step_offset = 0;
    let mut cost_so_far = 0.0;

    for ell in 0.. {
        let energy_fac = Factorization::cholesky(&energy_matrix(prob, &space))?;
        let nt = mesh.n_triangles();
        let nfree = space.n_free();
        let energy_of = |v: &CoefVec| -> Result<Option<f64>> {
            if prob.has_convection() {
                Ok(None)
            } else {
                energy(prob, &space, v).map(Some)
            }
        };
        let record = |k: usize, res: f64, eta: f64, delta: Option<f64>, trials: usize, dmin: f64, e: Option<f64>| StepRecord {
            ell,
            k,
            total_step: step_offset + k,
            n_triangles: nt,
            n_free_dofs: nfree,
            residual_norm: res,
            estimator: eta,
            quasi_error: res + eta,
            delta_used: delta,
            damping_trials: trials,
            delta_min: dmin,
            cumulative_cost: 0.0,
            energy: e,
            in_q: true,
        };

        let initial = NewtonState::new(prob, &space, &energy_fac, u0, delta_min)?;
        let mut est = local_estimators(prob, &space, &initial.iterate);
        records.push(record(0, initial.residual_norm, est.total, None, 0, delta_min, energy_of(&initial.iterate)?));
        let states = run_newton_from(prob, &space, &energy_fac, initial, cfg.max_newton_steps, |s| {
            est = local_estimators(prob, &space, &s.iterate);
            records.push(record(
                s.k,
                s.residual_norm,
                est.total,
                Some(s.last_delta),
                s.trial_count,
                s.delta_min,
                energy_of(&s.iterate)?,
            ));
            Ok(s.k >= cfg.k_min && s.residual_norm <= cfg.lambda_lin * est.total)
        })?;
        let last = states.last().expect("at least the initial state");
        delta_min = last.delta_min;
        let k_bar = last.k;
        cost_so_far += nt as f64 * k_bar as f64;

        let eta = est.total;
        let done = cfg.max_triangles.is_some_and(|m| nt >= m)
            || cfg.max_cost.is_some_and(|m| cost_so_far >= m)
            || cfg.tol.is_some_and(|t| eta <= t)
            || cfg.max_levels.is_some_and(|m| ell + 1 >= m);
        let marked = if done { MarkedSet::empty() } else { doerfler_mark(&est, params) };
        levels.push(LevelSnapshot { mesh: mesh.clone(), iterate: last.iterate.clone(), estimators: est, marked: marked.clone() });
        if done || marked.is_empty() {
            break;
        }

        let fine = Arc::new(mesh.refine(&marked)?);
        let fine_space = FESpace::new(fine.clone(), cfg.degree)?;
        u0 = prolongate(&space, &fine_space, &last.iterate)?;
        space = fine_space;
        mesh = fine;
        *mesh_out = Some(mesh.clone());
        step_offset += k_bar;
    }
    Ok(())
}

/// `(ell, k, ||res_k|| / ||res_{k-1}||)` for every `k >= 1`; a zero denominator gives 0.
pub fn reduction_factors(h: &RunHistory) -> Vec<(usize, usize, f64)> {
    h.records
        .windows(2)
        .filter(|w| w[1].ell == w[0].ell && w[1].k == w[0].k + 1)
        .map(|w| {
            let r = if w[0].residual_norm == 0.0 { 0.0 } else { w[1].residual_norm / w[0].residual_norm };
            (w[1].ell, w[1].k, r)
        })
        .collect()
}

/// `(cumulative cost, quasi-error)` over the index set of distinct total steps.
pub fn quasi_error_series(h: &RunHistory) -> Vec<(f64, f64)> {
    h.records.iter().filter(|r| r.in_q).map(|r| (r.cumulative_cost, r.quasi_error)).collect()
}

/// `(cumulative cost, estimator)` at each level's final iterate.
pub fn estimator_series(h: &RunHistory) -> Vec<(f64, f64)> {
    h.level_finals().iter().map(|r| (r.cumulative_cost, r.estimator)).collect()
}
