mod common;

use common::*;
use nailfem::fespace::{CoefVec, FESpace};
use nailfem::linsolve::Factorization;
use nailfem::mesh::Domain;
use nailfem::newton::{contraction_bound, dual_norm, newton_step, run_newton, NewtonState, DELTA_FLOOR};
use nailfem::poly::Poly2;
use nailfem::problem::{energy_matrix, residual_vector, Diffusion, DualVec, Reaction, SemilinearProblem, IDENTITY};
use nailfem::Error;
use proptest::prelude::*;

/// Exponential reaction with a large load: Newton from zero overshoots and
/// needs damping.
fn forced(f: f64) -> SemilinearProblem {
    SemilinearProblem::new(
        "forced",
        Domain::UnitSquare,
        Diffusion::Constant(IDENTITY),
        [0.0, 0.0],
        Reaction::TruncatedExp { order: 11, scale: 40.0 },
        Poly2::constant(f),
        [Poly2::zero(), Poly2::zero()],
    )
    .unwrap()
}

fn setup(prob: &SemilinearProblem, level: usize, p: usize) -> (FESpace, Factorization) {
    let s = space(&prob.domain, level, p);
    let fac = Factorization::cholesky(&energy_matrix(prob, &s)).unwrap();
    (s, fac)
}

/// Newton to convergence from zero, every accepted state.
fn iterate(prob: &SemilinearProblem, s: &FESpace, fac: &Factorization, tol: f64) -> Vec<NewtonState> {
    run_newton(prob, s, fac, CoefVec::zeros(s.n_free()), 0.5, 100, |st| Ok(st.residual_norm <= tol)).unwrap()
}

#[test]
fn dual_norm_closed_forms() {
    let prob = SemilinearProblem::case1();
    let (s, fac) = setup(&prob, 1, 2);
    assert_eq!(dual_norm(&fac, &DualVec::zeros(s.n_free())).unwrap(), 0.0);

    // The 2-triangle square with p = 2 has one free dof.
    let sq = SemilinearProblem::linear(Domain::UnitSquare, 0.0, 1.0);
    let (s1, fac1) = setup(&sq, 0, 2);
    assert_eq!(s1.n_free(), 1);
    let m = energy_matrix(&sq, &s1).get(0, 0);
    let got = dual_norm(&fac1, &DualVec(vec![-0.7])).unwrap();
    assert!((got - 0.7 / m.sqrt()).abs() <= 1e-15 * got);
}

#[test]
fn dual_norm_matches_dense_oracle() {
    let prob = SemilinearProblem::case1();
    for p in [1, 2] {
        let (s, fac) = setup(&prob, 2, p);
        let n = s.n_free();
        let dense = energy_matrix(&prob, &s).to_dense();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| dense[i][j]);
        let lu = m.lu();
        let mut g = rng(21);
        for _ in 0..10 {
            let b = random_vec(&mut g, n, 1.0);
            let r = lu.solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
            let oracle = dot(&b, r.as_slice()).sqrt();
            let got = dual_norm(&fac, &DualVec(b)).unwrap();
            assert!((got - oracle).abs() <= 1e-10 * oracle, "{got} vs {oracle}");
        }
    }
}

#[test]
fn zero_residual_step_is_identity() {
    let prob = SemilinearProblem::linear(Domain::UnitSquare, 0.0, 0.0);
    let (s, fac) = setup(&prob, 2, 1);
    let st = NewtonState::new(&prob, &s, &fac, CoefVec::zeros(s.n_free()), 0.5).unwrap();
    assert_eq!(st.residual_norm, 0.0);
    let next = newton_step(&prob, &s, &fac, &st).unwrap();
    assert_eq!(next.iterate, st.iterate);
    assert_eq!((next.k, next.last_delta, next.trial_count), (1, 1.0, 0));
}

#[test]
fn linear_problem_converges_in_one_undamped_step() {
    for (sigma, p) in [(0.0, 1), (0.0, 2), (3.0, 3)] {
        let prob = SemilinearProblem::linear(Domain::UnitSquare, sigma, 1.0);
        let (s, fac) = setup(&prob, 3, p);
        let st = NewtonState::new(&prob, &s, &fac, CoefVec::zeros(s.n_free()), 0.5).unwrap();
        let next = newton_step(&prob, &s, &fac, &st).unwrap();
        assert_eq!(next.last_delta, 1.0);
        assert!(next.residual_norm <= 1e-10 * st.residual_norm, "{} vs {}", next.residual_norm, st.residual_norm);
    }
}

#[test]
fn forced_problem_needs_damping_and_obeys_the_criterion() {
    for f in [10.0, 200.0, 1000.0] {
        let prob = forced(f);
        let (s, fac) = setup(&prob, 4, 1);
        let states = iterate(&prob, &s, &fac, 1e-11);
        assert!(states[1].last_delta < 1.0, "f={f}: first step undamped");
        for w in states.windows(2) {
            let (old, new) = (&w[0], &w[1]);
            // Accepted criterion with the updated delta_min.
            assert!(new.residual_norm <= contraction_bound(new.delta_min) * old.residual_norm * (1.0 + 1e-12));
            // delta is a power of 1/2 in (0, 1], reset to 1 each step.
            assert_eq!(new.last_delta, 0.5f64.powi(new.trial_count as i32));
            assert!(new.delta_min <= old.delta_min);
            // delta_min only changes through halvings.
            if new.trial_count == 0 {
                assert_eq!(new.delta_min, old.delta_min);
            } else {
                assert_eq!(new.delta_min, old.delta_min.min(new.last_delta));
            }
            assert_eq!(new.k, old.k + 1);
        }
        // Level-set property.
        assert!(states[1..].iter().all(|st| st.residual_norm < states[0].residual_norm));
        // The damping eventually switches off.
        let tail = &states[states.len() - 3..];
        assert!(tail.iter().all(|st| st.last_delta == 1.0), "f={f}");
    }
}

#[test]
fn quadratic_terminal_phase_on_case1() {
    let prob = SemilinearProblem::case1();
    let (s, fac) = setup(&prob, 5, 2);
    let states = iterate(&prob, &s, &fac, 1e-12);
    // Steps taken while the residual is well above round-off.
    let norms: Vec<f64> = states.iter().map(|s| s.residual_norm).filter(|&r| r > 1e-11).collect();
    assert!(norms.len() >= 4, "{norms:?}");
    let ratios: Vec<f64> = norms.windows(2).map(|w| w[1] / w[0]).collect();
    let last = &ratios[ratios.len() - 3..];
    assert!(last[0] > last[1] && last[1] > last[2], "ratios {ratios:?}");
    assert!(states.iter().skip(1).all(|st| st.last_delta == 1.0));
    // Quadratic convergence: new / old^2 stays bounded.
    let q: Vec<f64> = norms.windows(2).map(|w| w[1] / (w[0] * w[0])).collect();
    assert!(q.iter().all(|&c| c < 10.0), "{q:?}");
}

#[test]
fn run_newton_takes_at_least_one_step_and_caps() {
    let prob = SemilinearProblem::case1();
    let (s, fac) = setup(&prob, 1, 1);
    let states = run_newton(&prob, &s, &fac, CoefVec::zeros(s.n_free()), 0.5, 10, |_| Ok(true)).unwrap();
    assert_eq!(states.len(), 2);
    let capped = run_newton(&prob, &s, &fac, CoefVec::zeros(s.n_free()), 0.5, 3, |_| Ok(false));
    assert!(matches!(capped, Err(Error::NonTermination(3))));
    let bad = NewtonState::new(&prob, &s, &fac, CoefVec::zeros(s.n_free()), 0.75);
    assert!(matches!(bad, Err(Error::Config(_))));
}

#[test]
fn residual_of_state_is_consistent() {
    let prob = forced(50.0);
    let (s, fac) = setup(&prob, 3, 2);
    for st in iterate(&prob, &s, &fac, 1e-10) {
        let r = residual_vector(&prob, &s, &st.iterate).unwrap();
        assert_eq!(r, st.residual);
        assert_eq!(dual_norm(&fac, &r).unwrap(), st.residual_norm);
    }
}

#[test]
fn floor_is_tiny() {
    assert_eq!(DELTA_FLOOR, 0.5f64.powi(30));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Damping invariants from random starting points and loads.
    #[test]
    fn damped_steps_from_random_starts(f in 1.0f64..500.0, amp in 0.0f64..0.2, seed in any::<u64>()) {
        let prob = forced(f);
        let (s, fac) = setup(&prob, 2, 1);
        let u0 = random_coef(&mut rng(seed), s.n_free(), amp);
        let mut st = NewtonState::new(&prob, &s, &fac, u0, 0.5).unwrap();
        for _ in 0..5 {
            if st.residual_norm < 1e-10 {
                break;
            }
            let next = newton_step(&prob, &s, &fac, &st).unwrap();
            prop_assert!(next.residual_norm <= contraction_bound(next.delta_min) * st.residual_norm * (1.0 + 1e-12));
            prop_assert!(next.last_delta > 0.0 && next.last_delta <= 1.0);
            prop_assert!(next.delta_min <= st.delta_min && next.delta_min > 0.0);
            st = next;
        }
    }
}
