//! Discrete-time dynamical systems.
//!
//! Every model is exposed through the [`Dynamics`] trait as a discrete map
//! `x_{t+1} = f_t(x_t, u_t)`. Continuous-time benchmark systems implement
//! [`ContinuousDynamics`] and are turned into discrete models by forward Euler
//! ([`Euler`]).

mod cartpole;
mod linear;
mod noise;
mod quadrotor;
mod unicycle;

pub use cartpole::{Cartpole, CartpoleParams};
pub use linear::LinearModel;
pub use noise::NoiseModel;
pub use quadrotor::{Quadrotor, QuadrotorParams};
pub use unicycle::Unicycle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Any state entry above this magnitude aborts a rollout.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Central finite-difference step used for Jacobians without a closed form.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Linear,
    Cartpole,
    Unicycle,
    Quadrotor,
    Custom,
}

/// A discrete-time system `x_{t+1} = f_t(x_t, u_t)`.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;

    fn input_dim(&self) -> usize;

    fn kind(&self) -> ModelKind;

    /// Sampling time for discretized continuous models.
    fn dt(&self) -> Option<f64> {
        None
    }

    /// Unchecked transition. Callers must pass vectors of the right size.
    fn transition(&self, t: usize, x: &Vector, u: &Vector) -> Vector;

    /// `(∂f/∂x, ∂f/∂u)` at `(x, u)`. Defaults to central differences.
    fn jacobians(&self, t: usize, x: &Vector, u: &Vector) -> (Matrix, Matrix) {
        finite_difference_jacobians(|x, u| self.transition(t, x, u), x, u)
    }

    /// `(A_t, B_t)` when the model is exactly linear.
    fn linear_parts(&self, _t: usize) -> Option<(&Matrix, &Matrix)> {
        None
    }

    /// Checked transition.
    fn step(&self, t: usize, x: &Vector, u: &Vector) -> Result<Vector> {
        check_dims(self, x, u)?;
        if x.iter().chain(u.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite state or input"));
        }
        Ok(self.transition(t, x, u))
    }
}

fn check_dims<D: Dynamics + ?Sized>(model: &D, x: &Vector, u: &Vector) -> Result<()> {
    if x.len() != model.state_dim() {
        return Err(Error::invalid(format!(
            "state has dimension {}, model expects {}",
            x.len(),
            model.state_dim()
        )));
    }
    if u.len() != model.input_dim() {
        return Err(Error::invalid(format!(
            "input has dimension {}, model expects {}",
            u.len(),
            model.input_dim()
        )));
    }
    Ok(())
}

/// Jacobians of `f` at `(x, u)` with finite entries, or a numerical error.
pub fn linearize<D: Dynamics + ?Sized>(
    model: &D,
    t: usize,
    x: &Vector,
    u: &Vector,
) -> Result<(Matrix, Matrix)> {
    check_dims(model, x, u)?;
    let (a, b) = model.jacobians(t, x, u);
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("non-finite Jacobian at step {t}")));
    }
    Ok((a, b))
}

/// Central differences with step [`FD_STEP`].
pub fn finite_difference_jacobians<F>(f: F, x: &Vector, u: &Vector) -> (Matrix, Matrix)
where
    F: Fn(&Vector, &Vector) -> Vector,
{
    let n = x.len();
    let m = u.len();
    let fx = f(x, u);
    let rows = fx.len();
    let mut a = Matrix::zeros(rows, n);
    let mut b = Matrix::zeros(rows, m);
    let h = FD_STEP;
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp, u) - f(&xm, u)) / (2.0 * h);
        a.set_column(j, &col);
    }
    for j in 0..m {
        let mut up = u.clone();
        let mut um = u.clone();
        up[j] += h;
        um[j] -= h;
        let col = (f(x, &up) - f(x, &um)) / (2.0 * h);
        b.set_column(j, &col);
    }
    (a, b)
}

/// Continuous-time vector field `ẋ = g(x, u)`.
pub trait ContinuousDynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn kind(&self) -> ModelKind {
        ModelKind::Custom
    }
    fn rhs(&self, x: &Vector, u: &Vector) -> Vector;

    /// Analytic `(∂g/∂x, ∂g/∂u)` if available.
    fn rhs_jacobians(&self, _x: &Vector, _u: &Vector) -> Option<(Matrix, Matrix)> {
        None
    }
}

/// Forward-Euler discretization `f(x, u) = x + dt·g(x, u)`.
#[derive(Debug, Clone)]
pub struct Euler<S> {
    system: S,
    dt: f64,
}

impl<S: ContinuousDynamics> Euler<S> {
    pub fn new(system: S, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { system, dt })
    }

    pub fn system(&self) -> &S {
        &self.system
    }
}

impl<S: ContinuousDynamics> Dynamics for Euler<S> {
    fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.system.input_dim()
    }

    fn kind(&self) -> ModelKind {
        self.system.kind()
    }

    fn dt(&self) -> Option<f64> {
        Some(self.dt)
    }

    fn transition(&self, _t: usize, x: &Vector, u: &Vector) -> Vector {
        x + self.system.rhs(x, u) * self.dt
    }

    fn jacobians(&self, t: usize, x: &Vector, u: &Vector) -> (Matrix, Matrix) {
        match self.system.rhs_jacobians(x, u) {
            Some((ac, bc)) => {
                let n = x.len();
                (Matrix::identity(n, n) + ac * self.dt, bc * self.dt)
            }
            None => finite_difference_jacobians(|x, u| self.transition(t, x, u), x, u),
        }
    }
}

/// Vector field given by a closure.
pub struct FnRhs<F> {
    f: F,
    state_dim: usize,
    input_dim: usize,
}

impl<F> ContinuousDynamics for FnRhs<F>
where
    F: Fn(&Vector, &Vector) -> Vector + Send + Sync,
{
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn rhs(&self, x: &Vector, u: &Vector) -> Vector {
        (self.f)(x, u)
    }
}

/// Discretize an arbitrary vector field with forward Euler.
pub fn euler_discretize<F>(
    rhs: F,
    state_dim: usize,
    input_dim: usize,
    dt: f64,
) -> Result<Euler<FnRhs<F>>>
where
    F: Fn(&Vector, &Vector) -> Vector + Send + Sync,
{
    Euler::new(
        FnRhs {
            f: rhs,
            state_dim,
            input_dim,
        },
        dt,
    )
}

/// State sequence of length `N + 1` paired with an input sequence of length `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
}

impl Trajectory {
    pub fn new(states: Vec<Vector>, inputs: Vec<Vector>) -> Result<Self> {
        if states.len() != inputs.len() + 1 {
            return Err(Error::invalid(format!(
                "trajectory has {} states and {} inputs",
                states.len(),
                inputs.len()
            )));
        }
        if let Some(first) = states.first() {
            if states.iter().any(|s| s.len() != first.len()) {
                return Err(Error::invalid("state dimensions differ along trajectory"));
            }
        }
        if let Some(first) = inputs.first() {
            if inputs.iter().any(|s| s.len() != first.len()) {
                return Err(Error::invalid("input dimensions differ along trajectory"));
            }
        }
        Ok(Self { states, inputs })
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn terminal(&self) -> &Vector {
        self.states.last().expect("trajectory has at least one state")
    }

    /// True when every transition equals `model.transition` bit for bit.
    pub fn is_feasible_for<D: Dynamics + ?Sized>(&self, model: &D) -> bool {
        self.inputs.iter().enumerate().all(|(t, u)| {
            model.transition(t, &self.states[t], u) == self.states[t + 1]
        })
    }
}

/// Forward simulation, optionally with additive process noise `H_t w_t`.
pub fn rollout<D: Dynamics + ?Sized>(
    model: &D,
    x0: &Vector,
    inputs: &[Vector],
    noise: Option<(&NoiseModel, u64)>,
) -> Result<Trajectory> {
    if x0.len() != model.state_dim() {
        return Err(Error::invalid(format!(
            "initial state has dimension {}, model expects {}",
            x0.len(),
            model.state_dim()
        )));
    }
    if let Some(bad) = inputs.iter().position(|u| u.len() != model.input_dim()) {
        return Err(Error::invalid(format!(
            "input {bad} has dimension {}, model expects {}",
            inputs[bad].len(),
            model.input_dim()
        )));
    }
    let mut sampler = match noise {
        Some((nm, seed)) => {
            if nm.state_dim() != model.state_dim() {
                return Err(Error::invalid("noise matrix row count differs from state dimension"));
            }
            Some(nm.sampler(seed))
        }
        None => None,
    };
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.clone());
    for (t, u) in inputs.iter().enumerate() {
        let mut next = model.transition(t, &states[t], u);
        if let Some(s) = sampler.as_mut() {
            next += s.sample(t);
        }
        if diverged(&next) {
            return Err(Error::Divergence { step: t + 1 });
        }
        states.push(next);
    }
    Ok(Trajectory {
        states,
        inputs: inputs.to_vec(),
    })
}

pub(crate) fn diverged(x: &Vector) -> bool {
    x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn euler_of_zero_field_is_identity() {
        let model = euler_discretize(|x: &Vector, _u: &Vector| Vector::zeros(x.len()), 3, 1, 0.1)
            .unwrap();
        let x = dvector![1.0, -2.0, 3.5];
        let u = dvector![4.0];
        assert_eq!(model.transition(0, &x, &u), x);
    }

    #[test]
    fn euler_rejects_nonpositive_dt() {
        let rhs = |x: &Vector, _u: &Vector| x.clone();
        assert!(matches!(
            euler_discretize(rhs, 1, 1, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(euler_discretize(rhs, 1, 1, -0.1).is_err());
    }

    #[test]
    fn euler_difference_quotient_recovers_rhs() {
        let model = Euler::new(Unicycle, 0.1).unwrap();
        let x = dvector![0.3, -0.2, 1.1];
        let u = dvector![0.7, -0.4];
        let fd = (model.transition(0, &x, &u) - &x) / 0.1;
        let rhs = Unicycle.rhs(&x, &u);
        assert!((fd - rhs).amax() < 1e-14);
    }

    #[test]
    fn step_checks_dimensions() {
        let model = Euler::new(Unicycle, 0.1).unwrap();
        let err = model.step(0, &dvector![0.0, 0.0], &dvector![1.0, 0.0]);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
        let err = model.step(0, &dvector![0.0, 0.0, 0.0], &dvector![1.0]);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn empty_rollout_is_single_state() {
        let model = LinearModel::double_integrator_2d();
        let x0 = dvector![0.5, -0.5];
        let traj = rollout(&model, &x0, &[], None).unwrap();
        assert_eq!(traj.states, vec![x0]);
        assert!(traj.inputs.is_empty());
    }

    #[test]
    fn rollout_reports_divergence_step() {
        let model = euler_discretize(|x: &Vector, _u: &Vector| x * 1e4, 1, 1, 1.0).unwrap();
        let inputs = vec![dvector![0.0]; 5];
        match rollout(&model, &dvector![1.0], &inputs, None) {
            Err(Error::Divergence { step }) => assert_eq!(step, 2),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn trajectory_validates_lengths() {
        let s = vec![dvector![0.0]; 3];
        let u = vec![dvector![0.0]; 3];
        assert!(Trajectory::new(s, u).is_err());
    }
}
