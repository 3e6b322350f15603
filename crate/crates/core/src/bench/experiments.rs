use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::admm::{AdmmConfig, LayeredProblem};
use crate::dynamics::{
    Cartpole, CartpoleParams, Dynamics, Euler, LinearModel, NoiseModel, Quadrotor, QuadrotorParams,
};
use crate::error::{Error, Result};
use crate::ilqr::{InputTerm, QuadraticCost, StateTerm};
use crate::traj_opt::{BoxBounds, InputBox, ObstacleRect, ReferenceCost, StateConstraint};
use crate::{Matrix, Vector};

use super::stats::Distribution;

pub const DT: f64 = 0.1;
pub const CIRCLE_OMEGA: f64 = 0.5;
pub const CIRCLE_RADIUS: f64 = 2.0;
pub const LINEAR_INPUT_WEIGHT: f64 = 0.001;
pub const LINEAR_NOISE_SCALE: f64 = 0.1;
pub const STAGE_WEIGHT: f64 = 0.1;
pub const TERMINAL_WEIGHT: f64 = 1000.0;
pub const INPUT_WEIGHT: f64 = 0.01;
pub const SPEED_LIMIT: f64 = 7.0;
pub const UNICYCLE_GOAL: [f64; 2] = [3.0, 2.0];
pub const QUADROTOR_GOAL: [f64; 3] = [3.0, 2.0, 1.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    LinearCircle,
    LinearNoise,
    Cartpole,
    Unicycle,
    UnicycleCorridor,
    UnicycleLowOrder,
    UnicycleLowOrderCorridor,
    UnicycleLowOrderCorridorVel,
    UnicycleObstacle,
    Quadrotor,
    QuadrotorLowOrder,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::LinearCircle,
        Experiment::LinearNoise,
        Experiment::Cartpole,
        Experiment::Unicycle,
        Experiment::UnicycleCorridor,
        Experiment::UnicycleLowOrder,
        Experiment::UnicycleLowOrderCorridor,
        Experiment::UnicycleLowOrderCorridorVel,
        Experiment::UnicycleObstacle,
        Experiment::Quadrotor,
        Experiment::QuadrotorLowOrder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::LinearCircle => "linear-circle",
            Experiment::LinearNoise => "linear-noise",
            Experiment::Cartpole => "cartpole",
            Experiment::Unicycle => "unicycle",
            Experiment::UnicycleCorridor => "unicycle-corridor",
            Experiment::UnicycleLowOrder => "unicycle-low-order",
            Experiment::UnicycleLowOrderCorridor => "unicycle-low-order-corridor",
            Experiment::UnicycleLowOrderCorridorVel => "unicycle-low-order-corridor-vel",
            Experiment::UnicycleObstacle => "unicycle-obstacle",
            Experiment::Quadrotor => "quadrotor",
            Experiment::QuadrotorLowOrder => "quadrotor-low-order",
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(self, Experiment::LinearCircle | Experiment::LinearNoise)
    }

    pub fn default_horizon(self) -> usize {
        match self {
            Experiment::LinearCircle | Experiment::LinearNoise => 20,
            Experiment::Cartpole => 40,
            Experiment::Quadrotor | Experiment::QuadrotorLowOrder => 30,
            _ => 20,
        }
    }

    /// Quadrotor runs use a fixed `ρ = 5`: with adaptation the penalty drifts
    /// down to ~0.8 and some trials stall.
    pub fn default_config(self) -> AdmmConfig {
        match self {
            Experiment::LinearCircle | Experiment::LinearNoise => AdmmConfig { rho0: 1.0, ..AdmmConfig::default() },
            Experiment::Quadrotor | Experiment::QuadrotorLowOrder => AdmmConfig {
                rho0: 5.0,
                adapt_rho: false,
                ..AdmmConfig::default()
            },
            _ => AdmmConfig { rho0: 25.0, ..AdmmConfig::default() },
        }
    }

    /// `None` for the linear benchmarks, which start at the origin.
    pub fn distribution(self) -> Option<Distribution> {
        match self {
            Experiment::LinearCircle | Experiment::LinearNoise => None,
            Experiment::Cartpole => Some(Distribution::Uniform),
            _ => Some(Distribution::Normal),
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            Experiment::LinearCircle | Experiment::LinearNoise => 2,
            Experiment::Cartpole => 4,
            Experiment::Quadrotor | Experiment::QuadrotorLowOrder => 12,
            _ => 3,
        }
    }

    /// Maps a raw draw to an initial state. Cartpole draws are shifted by
    /// `(0, π − 0.5, 0, 0)` so the pole starts near upright.
    pub fn initial_state(self, draw: &Vector) -> Vector {
        match self {
            Experiment::Cartpole => draw + Vector::from_vec(vec![0.0, PI - 0.5, 0.0, 0.0]),
            _ => draw.clone(),
        }
    }

    pub fn build(self, horizon: usize, x0: &Vector) -> Result<Setup> {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if x0.len() != self.state_dim() {
            return Err(Error::invalid(format!(
                "{} expects a {}-dimensional initial state",
                self.name(),
                self.state_dim()
            )));
        }
        match self {
            Experiment::LinearCircle => Ok(linear_setup(horizon, x0, None)),
            Experiment::LinearNoise => Ok(linear_setup(
                horizon,
                x0,
                Some(NoiseModel::isotropic(2, LINEAR_NOISE_SCALE)),
            )),
            Experiment::Cartpole => {
                let model = Euler::new(Cartpole::new(CartpoleParams::default()), DT)?;
                let goal = Vector::from_vec(vec![0.0, PI, 0.0, 0.0]);
                Ok(goal_setup(Arc::new(model), horizon, x0, &goal, Matrix::identity(4, 4), None, (0..4).collect()))
            }
            Experiment::Quadrotor | Experiment::QuadrotorLowOrder => {
                let model = Euler::new(Quadrotor::new(QuadrotorParams::default()), DT)?;
                let mut goal = Vector::zeros(12);
                goal.rows_mut(0, 3).copy_from_slice(&QUADROTOR_GOAL);
                let output = (self == Experiment::QuadrotorLowOrder).then(|| position_selector(3, 12));
                Ok(goal_setup(Arc::new(model), horizon, x0, &goal, Matrix::identity(12, 12), output, vec![0, 1, 2]))
            }
            _ => self.unicycle(horizon, x0),
        }
    }

    fn unicycle(self, horizon: usize, x0: &Vector) -> Result<Setup> {
        use Experiment::*;
        let model = Arc::new(Euler::new(crate::dynamics::Unicycle, DT)?);
        let goal = Vector::from_vec(vec![UNICYCLE_GOAL[0], UNICYCLE_GOAL[1], 0.0]);
        // Full-order variants leave the heading free.
        let shape = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 1.0, 0.0]));
        let low_order = matches!(self, UnicycleLowOrder | UnicycleLowOrderCorridor | UnicycleLowOrderCorridorVel | UnicycleObstacle);
        let output = low_order.then(|| position_selector(2, 3));
        let mut setup = goal_setup(model, horizon, x0, &goal, shape, output, vec![0, 1]);
        let dim = setup.problem.cost.dim();
        match self {
            UnicycleCorridor | UnicycleLowOrderCorridor | UnicycleLowOrderCorridorVel => {
                setup.problem.constraints = corridor(dim, horizon);
            }
            UnicycleObstacle => {
                let rect = ObstacleRect::new(1.0, 0.5, 1.5, 1.0)?;
                setup.problem.constraints = (0..=horizon)
                    .map(|t| if t == 0 { StateConstraint::Unconstrained } else { StateConstraint::Obstacle(rect.clone()) })
                    .collect();
            }
            _ => {}
        }
        if self == UnicycleLowOrderCorridorVel {
            setup.problem.input_box = Some(InputBox::symmetric_on(2, &[0], SPEED_LIMIT)?);
        }
        Ok(setup)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let canonical = match s {
            "unicycle-plain" => "unicycle",
            "quadrotor-full" => "quadrotor",
            other => other,
        };
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == canonical)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                Error::Usage(format!("unknown experiment '{s}'; expected one of {}", names.join(", ")))
            })
    }
}

/// A fully specified trial: the layered problem, the baseline's cost on the
/// same objective, and how success is measured.
#[derive(Debug, Clone)]
pub struct Setup {
    pub problem: LayeredProblem,
    pub baseline: QuadraticCost,
    /// Success target, compared on `success_coords` of the terminal state.
    pub goal: Vector,
    pub success_coords: Vec<usize>,
}

impl Setup {
    pub fn terminal_distance(&self, terminal: &Vector) -> f64 {
        self.success_coords
            .iter()
            .zip(self.goal.iter())
            .map(|(&i, g)| (terminal[i] - g).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// `[I_q 0]`, selecting the first `q` state coordinates.
pub fn position_selector(q: usize, n: usize) -> Matrix {
    Matrix::from_fn(q, n, |i, j| if i == j { 1.0 } else { 0.0 })
}

/// Circle targets `s_t = 2(cos ωt, sin ωt)` for `t = 0..=N`.
pub fn circle_targets(horizon: usize) -> Vec<Vector> {
    (0..=horizon)
        .map(|t| {
            let a = CIRCLE_OMEGA * t as f64;
            Vector::from_vec(vec![CIRCLE_RADIUS * a.cos(), CIRCLE_RADIUS * a.sin()])
        })
        .collect()
}

/// The 2-D linear circle-tracking problem.
pub fn linear_circle_problem(horizon: usize, x0: &Vector) -> LayeredProblem {
    linear_setup(horizon, x0, None).problem
}

/// First half of the horizon: `0 ≤ r₁ ≤ 1`; second half: `1.5 ≤ r₂ ≤ 2.5`.
/// `r_0` is left free because `x_0` is fixed.
pub fn corridor(dim: usize, horizon: usize) -> Vec<StateConstraint> {
    (0..=horizon)
        .map(|t| {
            if t == 0 {
                StateConstraint::Unconstrained
            } else if t <= horizon / 2 {
                StateConstraint::Box(BoxBounds::on_coordinate(dim, 0, 0.0, 1.0))
            } else {
                StateConstraint::Box(BoxBounds::on_coordinate(dim, 1, 1.5, 2.5))
            }
        })
        .collect()
}

fn linear_setup(horizon: usize, x0: &Vector, noise: Option<NoiseModel>) -> Setup {
    let targets = circle_targets(horizon);
    let r = Matrix::identity(2, 2) * LINEAR_INPUT_WEIGHT;
    let problem = LayeredProblem {
        model: Arc::new(LinearModel::double_integrator_2d()),
        cost: ReferenceCost::tracking(&targets, Matrix::identity(2, 2)),
        input_weights: vec![r.clone(); horizon],
        constraints: vec![StateConstraint::Unconstrained; horizon + 1],
        input_box: None,
        initial_state: x0.clone(),
        output: None,
        noise,
    };
    let baseline = QuadraticCost {
        output: Matrix::identity(2, 2),
        state_terms: targets
            .iter()
            .map(|s| StateTerm { target: s.clone(), weight: Matrix::identity(2, 2) })
            .collect(),
        input_terms: vec![InputTerm { weight: r, prox: None }; horizon],
    };
    Setup {
        problem,
        baseline,
        goal: targets[horizon].clone(),
        success_coords: vec![0, 1],
    }
}

/// Goal-reaching setup with the shared stage, terminal and input weights.
/// `shape` scales the state weights of a full-order reference.
fn goal_setup(
    model: Arc<dyn Dynamics>,
    horizon: usize,
    x0: &Vector,
    goal: &Vector,
    shape: Matrix,
    output: Option<Matrix>,
    success_coords: Vec<usize>,
) -> Setup {
    let n = model.state_dim();
    let m = model.input_dim();
    let r = Matrix::identity(m, m) * INPUT_WEIGHT;
    let (ref_goal, ref_shape) = match &output {
        Some(c) => (c * goal, Matrix::identity(c.nrows(), c.nrows())),
        None => (goal.clone(), shape.clone()),
    };
    let cost = ReferenceCost::goal_reaching(
        &ref_goal,
        horizon,
        &ref_shape * STAGE_WEIGHT,
        &ref_shape * TERMINAL_WEIGHT,
    );
    let baseline = QuadraticCost::goal(
        Matrix::identity(n, n),
        goal,
        horizon,
        &(&shape * STAGE_WEIGHT),
        &(&shape * TERMINAL_WEIGHT),
        &r,
    );
    let success_goal = Vector::from_iterator(success_coords.len(), success_coords.iter().map(|&i| goal[i]));
    Setup {
        problem: LayeredProblem {
            model,
            cost,
            input_weights: vec![r; horizon],
            constraints: vec![StateConstraint::Unconstrained; horizon + 1],
            input_box: None,
            initial_state: x0.clone(),
            output,
            noise: None,
        },
        baseline,
        goal: success_goal,
        success_coords,
    }
}
