mod common;

use common::random_vector;
use layered_ocp::dynamics::{
    Cartpole, CartpoleParams, Dynamics, Euler, LinearModel, NoiseModel, Quadrotor, QuadrotorParams, Unicycle,
    linearize, rollout,
};
use layered_ocp::{Error, Matrix, Vector};
use nalgebra::dvector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central differences with a step different from the library's own.
fn fd_oracle(model: &dyn Dynamics, x: &Vector, u: &Vector) -> (Matrix, Matrix) {
    let h = 1e-5;
    let n = x.len();
    let m = u.len();
    let mut a = Matrix::zeros(n, n);
    let mut b = Matrix::zeros(n, m);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        a.set_column(j, &((model.transition(0, &xp, u) - model.transition(0, &xm, u)) / (2.0 * h)));
    }
    for j in 0..m {
        let mut up = u.clone();
        let mut um = u.clone();
        up[j] += h;
        um[j] -= h;
        b.set_column(j, &((model.transition(0, x, &up) - model.transition(0, x, &um)) / (2.0 * h)));
    }
    (a, b)
}

fn assert_close(ours: &Matrix, oracle: &Matrix) {
    let scale = oracle.amax().max(1.0);
    assert!((ours - oracle).amax() <= 1e-5 * scale, "{ours} vs {oracle}");
}

fn check_jacobians(model: &dyn Dynamics, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let x = random_vector(&mut rng, model.state_dim(), scale);
        let u = random_vector(&mut rng, model.input_dim(), scale);
        let (a, b) = linearize(model, 0, &x, &u).unwrap();
        let (ao, bo) = fd_oracle(model, &x, &u);
        assert_close(&a, &ao);
        assert_close(&b, &bo);
    }
}

#[test]
fn jacobians_match_finite_differences() {
    check_jacobians(&LinearModel::double_integrator_2d(), 1, 3.0);
    check_jacobians(&Euler::new(Unicycle, 0.1).unwrap(), 2, 3.0);
    check_jacobians(&Euler::new(Cartpole::new(CartpoleParams::default()), 0.1).unwrap(), 3, 3.0);
    check_jacobians(&Euler::new(Quadrotor::new(QuadrotorParams::default()), 0.1).unwrap(), 4, 1.0);
}

#[test]
fn linear_jacobians_are_exact_and_constant() {
    let model = LinearModel::double_integrator_2d();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in 0..5 {
        let (a, b) = linearize(&model, t, &random_vector(&mut rng, 2, 5.0), &random_vector(&mut rng, 2, 5.0)).unwrap();
        assert_eq!(&a, model.a(t));
        assert_eq!(&b, model.b(t));
    }
}

#[test]
fn rollouts_revalidate_bit_for_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let models: Vec<Box<dyn Dynamics>> = vec![
        Box::new(LinearModel::double_integrator_2d()),
        Box::new(Euler::new(Unicycle, 0.1).unwrap()),
        Box::new(Euler::new(Cartpole::new(CartpoleParams::default()), 0.1).unwrap()),
        Box::new(Euler::new(Quadrotor::new(QuadrotorParams::default()), 0.1).unwrap()),
    ];
    for model in &models {
        let inputs: Vec<Vector> = (0..30).map(|_| random_vector(&mut rng, model.input_dim(), 0.5)).collect();
        let x0 = random_vector(&mut rng, model.state_dim(), 0.5);
        let traj = rollout(model.as_ref(), &x0, &inputs, None).unwrap();
        assert_eq!(traj.states[0], x0);
        for t in 0..30 {
            assert_eq!(model.step(t, &traj.states[t], &traj.inputs[t]).unwrap(), traj.states[t + 1]);
        }
    }
}

#[test]
fn noisy_rollouts_are_seed_deterministic() {
    let model = LinearModel::double_integrator_2d();
    let noise = NoiseModel::isotropic(2, 0.1);
    let inputs = vec![dvector![0.1, -0.2]; 15];
    let x0 = dvector![0.3, 0.1];
    let a = rollout(&model, &x0, &inputs, Some((&noise, 99))).unwrap();
    let b = rollout(&model, &x0, &inputs, Some((&noise, 99))).unwrap();
    let c = rollout(&model, &x0, &inputs, Some((&noise, 100))).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn step_rejects_non_finite_and_mismatched_inputs() {
    let model = Euler::new(Unicycle, 0.1).unwrap();
    assert!(matches!(
        model.step(0, &dvector![0.0, f64::NAN, 0.0], &dvector![1.0, 0.0]),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(model.step(0, &dvector![0.0, 0.0], &dvector![1.0, 0.0]), Err(Error::InvalidArgument(_))));
}

#[test]
fn cartpole_random_point_is_stable_under_small_steps() {
    // Repeated halving of dt converges the one-step map to the identity.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = dvector![rng.random_range(-1.0..1.0), 2.0, 0.1, -0.3];
    let u = dvector![0.4];
    let mut prev = f64::INFINITY;
    for k in 0..5 {
        let dt = 0.1 / 2f64.powi(k);
        let model = Euler::new(Cartpole::new(CartpoleParams::default()), dt).unwrap();
        let moved = (model.transition(0, &x, &u) - &x).norm();
        assert!(moved < prev);
        prev = moved;
    }
}
