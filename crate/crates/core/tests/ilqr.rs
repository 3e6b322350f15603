mod common;

use common::{random_matrix, random_spd, random_vector, rel};
use layered_ocp::dynamics::{Cartpole, CartpoleParams, Dynamics, Euler, LinearModel, rollout};
use layered_ocp::ilqr::{IlqrCost, IlqrOptions, QuadraticCost, StateTerm, InputTerm, ilqr_solve, input_gradient};
use layered_ocp::tracking_lqr::{TrackingProblem, solve_tracking, tracking_objective};
use layered_ocp::{Error, Matrix, Vector};
use nalgebra::dvector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn cartpole() -> Euler<Cartpole> {
    Euler::new(Cartpole::new(CartpoleParams::default()), 0.1).unwrap()
}

fn upright_cost(horizon: usize) -> QuadraticCost {
    QuadraticCost::goal(
        Matrix::identity(4, 4),
        &dvector![0.0, PI, 0.0, 0.0],
        horizon,
        &(Matrix::identity(4, 4) * 0.1),
        &(Matrix::identity(4, 4) * 1000.0),
        &(Matrix::identity(1, 1) * 0.01),
    )
}

#[test]
fn one_iteration_solves_linear_quadratic_tracking() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..10 {
        let n = rng.random_range(2..=4);
        let m = rng.random_range(1..=2);
        let horizon = rng.random_range(3..=15);
        let a = Matrix::identity(n, n) + random_matrix(&mut rng, n, n, 0.3);
        let b = random_matrix(&mut rng, n, m, 1.0);
        let prob = TrackingProblem {
            a: vec![a.clone(); horizon],
            b: vec![b.clone(); horizon],
            input_weights: (0..horizon).map(|_| random_spd(&mut rng, m)).collect(),
            reference: (0..=horizon).map(|_| random_vector(&mut rng, n, 2.0)).collect(),
            dual: (0..=horizon).map(|_| random_vector(&mut rng, n, 0.5)).collect(),
            rho: rng.random_range(0.5..5.0),
            initial_state: random_vector(&mut rng, n, 1.0),
            output: None,
            input_prox: None,
        };
        let exact = solve_tracking(&prob).unwrap();
        let target = tracking_objective(&prob, &exact.trajectory);

        let model = LinearModel::time_invariant(a, b).unwrap();
        let cost = QuadraticCost::tracking(
            Matrix::identity(n, n),
            &prob.reference,
            &prob.dual,
            prob.rho,
            &prob.input_weights,
            None,
        );
        let opts = IlqrOptions { max_iters: 1, tol: 1e-6 };
        let res = ilqr_solve(&model, &cost, &prob.initial_state, &vec![Vector::zeros(m); horizon], opts).unwrap();
        assert_eq!(res.iterations_used, 1);
        let achieved = tracking_objective(&prob, &res.trajectory);
        assert!(rel(achieved, target) <= 1e-8, "{achieved} vs {target}");
        for (x, xe) in res.trajectory.states.iter().zip(&exact.trajectory.states) {
            assert!((x - xe).amax() <= 1e-8 * (1.0 + xe.amax()));
        }
    }
}

#[test]
fn tracking_cost_agrees_with_tracking_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let horizon = 6;
    let prob = TrackingProblem {
        a: vec![Matrix::identity(2, 2); horizon],
        b: vec![Matrix::identity(2, 2); horizon],
        input_weights: vec![Matrix::identity(2, 2) * 0.3; horizon],
        reference: (0..=horizon).map(|_| random_vector(&mut rng, 2, 1.0)).collect(),
        dual: (0..=horizon).map(|_| random_vector(&mut rng, 2, 1.0)).collect(),
        rho: 3.0,
        initial_state: dvector![0.5, 0.5],
        output: None,
        input_prox: None,
    };
    let model = LinearModel::time_invariant(Matrix::identity(2, 2), Matrix::identity(2, 2)).unwrap();
    let inputs: Vec<Vector> = (0..horizon).map(|_| random_vector(&mut rng, 2, 1.0)).collect();
    let traj = rollout(&model, &prob.initial_state, &inputs, None).unwrap();
    let cost = QuadraticCost::tracking(Matrix::identity(2, 2), &prob.reference, &prob.dual, 3.0, &prob.input_weights, None);
    assert!(rel(cost.total(&traj), tracking_objective(&prob, &traj)) < 1e-12);
}

#[test]
fn optimal_initial_inputs_are_a_fixed_point() {
    let model = LinearModel::double_integrator_2d();
    let horizon = 8;
    let goal = dvector![1.0, -1.0];
    let cost = QuadraticCost::goal(
        Matrix::identity(2, 2),
        &goal,
        horizon,
        &Matrix::identity(2, 2),
        &(Matrix::identity(2, 2) * 10.0),
        &(Matrix::identity(2, 2) * 0.5),
    );
    let x0 = dvector![0.2, 0.1];
    let first = ilqr_solve(&model, &cost, &x0, &vec![Vector::zeros(2); horizon], IlqrOptions::default()).unwrap();
    let again = ilqr_solve(&model, &cost, &x0, &first.trajectory.inputs, IlqrOptions::default()).unwrap();
    assert!(again.converged);
    assert_eq!(again.iterations_used, 1);
    assert_eq!(again.cost, first.cost);
    assert_eq!(again.trajectory, first.trajectory);
}

#[test]
fn cartpole_near_upright_is_stabilized() {
    // One-second horizon from a cold start; longer horizons let the zero-input
    // rollout spin the pole, which is the baseline's failure mode.
    let model = cartpole();
    let horizon = 10;
    let cost = upright_cost(horizon);
    for offset in [0.1, -0.1] {
        let x0 = dvector![0.0, PI + offset, 0.0, 0.0];
        let opts = IlqrOptions { max_iters: 50, tol: 1e-6 };
        let res = ilqr_solve(&model, &cost, &x0, &vec![Vector::zeros(1); horizon], opts).unwrap();
        assert!(res.converged);
        assert!(res.iterations_used <= 50);
        let theta = res.trajectory.terminal()[1];
        assert!((theta - PI).abs() < 0.05, "terminal angle {theta}");
    }
}

#[test]
fn cost_never_increases_and_trajectories_are_feasible() {
    let model = cartpole();
    let horizon = 30;
    let cost = upright_cost(horizon);
    let x0 = dvector![0.3, PI - 0.4, 0.0, 0.2];
    let zeros = vec![Vector::zeros(1); horizon];
    let initial = cost.total(&rollout(&model, &x0, &zeros, None).unwrap());
    let mut prev = initial;
    for k in 1..=15 {
        let res = ilqr_solve(&model, &cost, &x0, &zeros, IlqrOptions { max_iters: k, tol: 0.0 }).unwrap();
        assert!(res.cost <= prev, "iteration {k}: {} > {prev}", res.cost);
        assert!(res.trajectory.is_feasible_for(&model));
        assert_eq!(res.cost, cost.total(&res.trajectory));
        prev = res.cost;
    }
    assert!(prev < initial);
}

#[test]
fn divergent_initial_rollout_is_an_error() {
    let model = LinearModel::time_invariant(Matrix::identity(1, 1) * 10.0, Matrix::identity(1, 1)).unwrap();
    let cost = QuadraticCost::goal(
        Matrix::identity(1, 1),
        &dvector![0.0],
        10,
        &Matrix::identity(1, 1),
        &Matrix::identity(1, 1),
        &Matrix::identity(1, 1),
    );
    let err = ilqr_solve(&model, &cost, &dvector![1.0], &vec![dvector![0.0]; 10], IlqrOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Divergence { step: 7 }), "{err:?}");
}

#[test]
fn cost_hessians_match_finite_differences_of_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 4;
    let m = 2;
    let cost = QuadraticCost {
        output: random_matrix(&mut rng, 2, n, 1.0),
        state_terms: (0..=3)
            .map(|_| StateTerm { target: random_vector(&mut rng, 2, 1.0), weight: random_spd(&mut rng, 2) })
            .collect(),
        input_terms: (0..3)
            .map(|_| InputTerm {
                weight: random_spd(&mut rng, m),
                prox: Some((random_vector(&mut rng, m, 1.0), random_spd(&mut rng, m))),
            })
            .collect(),
    };
    let h = 1e-6;
    for t in 0..3 {
        let x = random_vector(&mut rng, n, 2.0);
        let u = random_vector(&mut rng, m, 2.0);
        let d = cost.stage_derivatives(t, &x, &u);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let dp = cost.stage_derivatives(t, &xp, &u);
            let dm = cost.stage_derivatives(t, &xm, &u);
            let col = (&dp.lx - &dm.lx) / (2.0 * h);
            assert!((&col - d.lxx.column(j)).amax() <= 1e-4 * d.lxx.amax());
            let fd_grad = (cost.stage(t, &xp, &u) - cost.stage(t, &xm, &u)) / (2.0 * h);
            assert!((fd_grad - d.lx[j]).abs() <= 1e-4 * (1.0 + d.lx.amax()));
        }
        for j in 0..m {
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += h;
            um[j] -= h;
            let dp = cost.stage_derivatives(t, &x, &up);
            let dm = cost.stage_derivatives(t, &x, &um);
            let col = (&dp.lu - &dm.lu) / (2.0 * h);
            assert!((&col - d.luu.column(j)).amax() <= 1e-4 * d.luu.amax());
            let cross = (&dp.lx - &dm.lx) / (2.0 * h);
            assert!((&cross - d.lux.row(j).transpose()).amax() <= 1e-4 * (1.0 + d.lux.amax()));
        }
    }
}

#[test]
fn adjoint_gradient_matches_finite_differences_on_cartpole() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let model = cartpole();
    let horizon = 15;
    let cost = upright_cost(horizon);
    for _ in 0..5 {
        let x0 = dvector![rng.random_range(-0.5..0.5), PI + rng.random_range(-0.5..0.5), 0.0, 0.0];
        let inputs: Vec<Vector> = (0..horizon).map(|_| random_vector(&mut rng, 1, 1.0)).collect();
        let traj = rollout(&model, &x0, &inputs, None).unwrap();
        let grads = input_gradient(&model, &cost, &traj);
        let h = 1e-6;
        for t in 0..horizon {
            let mut up = inputs.clone();
            let mut um = inputs.clone();
            up[t][0] += h;
            um[t][0] -= h;
            let jp = cost.total(&rollout(&model, &x0, &up, None).unwrap());
            let jm = cost.total(&rollout(&model, &x0, &um, None).unwrap());
            let fd = (jp - jm) / (2.0 * h);
            assert!((fd - grads[t][0]).abs() <= 1e-3 * (1.0 + fd.abs()), "t={t}: {fd} vs {}", grads[t][0]);
        }
    }
}

#[test]
fn gains_cover_the_horizon() {
    let model = cartpole();
    let cost = upright_cost(10);
    let res = ilqr_solve(&model, &cost, &dvector![0.0, PI + 0.05, 0.0, 0.0], &vec![Vector::zeros(1); 10], IlqrOptions::default())
        .unwrap();
    assert_eq!(res.feedback.len(), 10);
    assert_eq!(res.feedforward.len(), 10);
    assert_eq!(res.feedback[0].shape(), (1, 4));
    assert!(model.state_dim() == 4);
}
