//! Iterative LQR (Gauss-Newton variant) for unconstrained nonlinear
//! trajectory optimization.

use nalgebra::Cholesky;

use crate::dynamics::{diverged, rollout, Dynamics, Trajectory};
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// First and second derivatives of a stage cost at one point.
#[derive(Debug, Clone)]
pub struct StageDerivatives {
    pub lx: Vector,
    pub lu: Vector,
    pub lxx: Matrix,
    pub luu: Matrix,
    pub lux: Matrix,
}

/// Stage costs `ℓ_t(x, u)` for `t < N` and a terminal cost `ℓ_N(x)`.
pub trait IlqrCost: Send + Sync {
    fn horizon(&self) -> usize;
    fn stage(&self, t: usize, x: &Vector, u: &Vector) -> f64;
    fn terminal(&self, x: &Vector) -> f64;
    fn stage_derivatives(&self, t: usize, x: &Vector, u: &Vector) -> StageDerivatives;
    fn terminal_derivatives(&self, x: &Vector) -> (Vector, Matrix);

    fn total(&self, traj: &Trajectory) -> f64 {
        let running: f64 = traj
            .inputs
            .iter()
            .enumerate()
            .map(|(t, u)| self.stage(t, &traj.states[t], u))
            .sum();
        running + self.terminal(traj.terminal())
    }
}

/// `(M x − y)ᵀ W (M x − y)`.
#[derive(Debug, Clone)]
pub struct StateTerm {
    pub target: Vector,
    pub weight: Matrix,
}

/// `uᵀ R u + (u − a)ᵀ S (u − a)`, the second part optional.
#[derive(Debug, Clone)]
pub struct InputTerm {
    pub weight: Matrix,
    pub prox: Option<(Vector, Matrix)>,
}

/// Quadratic cost through an output map `M`, covering both the
/// feedback-layer tracking objective and goal-reaching baseline costs.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub output: Matrix,
    /// `t = 0..=N`.
    pub state_terms: Vec<StateTerm>,
    /// `t = 0..N`.
    pub input_terms: Vec<InputTerm>,
}

impl QuadraticCost {
    /// `(ρ/2)‖M x_t − r_t + v_t‖² + u_tᵀR_t u_t [+ (ρ/2)‖u_t − a_t + v_{a,t}‖²]`.
    pub fn tracking(
        output: Matrix,
        reference: &[Vector],
        dual: &[Vector],
        rho: f64,
        input_weights: &[Matrix],
        input_prox: Option<(&[Vector], &[Vector])>,
    ) -> Self {
        let q = output.nrows();
        let w = Matrix::identity(q, q) * (0.5 * rho);
        let state_terms = reference
            .iter()
            .zip(dual)
            .map(|(r, v)| StateTerm {
                target: r - v,
                weight: w.clone(),
            })
            .collect();
        let input_terms = input_weights
            .iter()
            .enumerate()
            .map(|(t, r)| InputTerm {
                weight: r.clone(),
                prox: input_prox.map(|(a, va)| {
                    let m = r.nrows();
                    (&a[t] - &va[t], Matrix::identity(m, m) * (0.5 * rho))
                }),
            })
            .collect();
        Self {
            output,
            state_terms,
            input_terms,
        }
    }

    /// `Σ_{t<N} ‖M x_t − g‖²_{W} + ‖M x_N − g‖²_{W_N} + Σ u_tᵀ R u_t`.
    pub fn goal(
        output: Matrix,
        goal: &Vector,
        horizon: usize,
        stage_weight: &Matrix,
        terminal_weight: &Matrix,
        input_weight: &Matrix,
    ) -> Self {
        let mut state_terms = vec![
            StateTerm {
                target: goal.clone(),
                weight: stage_weight.clone(),
            };
            horizon
        ];
        state_terms.push(StateTerm {
            target: goal.clone(),
            weight: terminal_weight.clone(),
        });
        Self {
            output,
            state_terms,
            input_terms: vec![
                InputTerm {
                    weight: input_weight.clone(),
                    prox: None,
                };
                horizon
            ],
        }
    }

    fn state_value(&self, t: usize, x: &Vector) -> f64 {
        let term = &self.state_terms[t];
        let d = &self.output * x - &term.target;
        (d.transpose() * &term.weight * &d)[0]
    }

    fn state_grad_hess(&self, t: usize, x: &Vector) -> (Vector, Matrix) {
        let term = &self.state_terms[t];
        let mw = self.output.transpose() * &term.weight;
        let d = &self.output * x - &term.target;
        (&mw * d * 2.0, &mw * &self.output * 2.0)
    }
}

impl IlqrCost for QuadraticCost {
    fn horizon(&self) -> usize {
        self.input_terms.len()
    }

    fn stage(&self, t: usize, x: &Vector, u: &Vector) -> f64 {
        let term = &self.input_terms[t];
        let mut v = self.state_value(t, x) + (u.transpose() * &term.weight * u)[0];
        if let Some((a, s)) = &term.prox {
            let d = u - a;
            v += (d.transpose() * s * &d)[0];
        }
        v
    }

    fn terminal(&self, x: &Vector) -> f64 {
        self.state_value(self.horizon(), x)
    }

    fn stage_derivatives(&self, t: usize, x: &Vector, u: &Vector) -> StageDerivatives {
        let (lx, lxx) = self.state_grad_hess(t, x);
        let term = &self.input_terms[t];
        let mut lu = &term.weight * u * 2.0;
        let mut luu = &term.weight * 2.0;
        if let Some((a, s)) = &term.prox {
            lu += s * (u - a) * 2.0;
            luu += s * 2.0;
        }
        StageDerivatives {
            lx,
            lu,
            lxx,
            luu,
            lux: Matrix::zeros(u.len(), x.len()),
        }
    }

    fn terminal_derivatives(&self, x: &Vector) -> (Vector, Matrix) {
        self.state_grad_hess(self.horizon(), x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IlqrOptions {
    pub max_iters: usize,
    /// Relative cost decrease below which the solve is declared converged.
    pub tol: f64,
}

impl Default for IlqrOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-6,
        }
    }
}

const REG_MIN: f64 = 1e-6;
const REG_MAX: f64 = 1e10;
const BACKTRACKS: i32 = 10;

#[derive(Debug, Clone)]
pub struct IlqrResult {
    pub trajectory: Trajectory,
    pub feedback: Vec<Matrix>,
    pub feedforward: Vec<Vector>,
    pub iterations_used: usize,
    pub converged: bool,
    pub cost: f64,
}

struct BackwardPass {
    feedback: Vec<Matrix>,
    feedforward: Vec<Vector>,
    /// Predicted decrease for a full step.
    expected_decrease: f64,
}

fn backward_pass(
    cost: &dyn IlqrCost,
    traj: &Trajectory,
    jacobians: &[(Matrix, Matrix)],
    reg: f64,
) -> Option<BackwardPass> {
    let horizon = traj.horizon();
    let (mut vx, mut vxx) = cost.terminal_derivatives(traj.terminal());
    let mut feedback = vec![Matrix::zeros(0, 0); horizon];
    let mut feedforward = vec![Vector::zeros(0); horizon];
    let mut expected = 0.0;
    for t in (0..horizon).rev() {
        let (a, b) = &jacobians[t];
        let d = cost.stage_derivatives(t, &traj.states[t], &traj.inputs[t]);
        let qx = &d.lx + a.transpose() * &vx;
        let qu = &d.lu + b.transpose() * &vx;
        let vxx_a = &vxx * a;
        let vxx_b = &vxx * b;
        let qxx = &d.lxx + a.transpose() * &vxx_a;
        let mut quu = &d.luu + b.transpose() * &vxx_b;
        let qux = &d.lux + b.transpose() * &vxx_a;
        let m = quu.nrows();
        quu += Matrix::identity(m, m) * reg;
        let chol = Cholesky::new(quu.clone())?;
        let k_ff = -chol.solve(&qu);
        let k_fb = -chol.solve(&qux);

        expected -= k_ff.dot(&qu) + 0.5 * (k_ff.transpose() * &quu * &k_ff)[0];
        vx = &qx + k_fb.transpose() * &quu * &k_ff + k_fb.transpose() * &qu + qux.transpose() * &k_ff;
        let v = &qxx + k_fb.transpose() * &quu * &k_fb + k_fb.transpose() * &qux + qux.transpose() * &k_fb;
        vxx = (&v + v.transpose()) * 0.5;
        feedback[t] = k_fb;
        feedforward[t] = k_ff;
    }
    Some(BackwardPass {
        feedback,
        feedforward,
        expected_decrease: expected,
    })
}

fn forward_pass(
    model: &dyn Dynamics,
    nominal: &Trajectory,
    pass: &BackwardPass,
    alpha: f64,
) -> Option<Trajectory> {
    let horizon = nominal.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    states.push(nominal.states[0].clone());
    for t in 0..horizon {
        let dx = &states[t] - &nominal.states[t];
        let u = &nominal.inputs[t] + &pass.feedforward[t] * alpha + &pass.feedback[t] * dx;
        let next = model.transition(t, &states[t], &u);
        if diverged(&next) {
            return None;
        }
        inputs.push(u);
        states.push(next);
    }
    Some(Trajectory { states, inputs })
}

/// `∂J/∂u_t` of the total cost along `traj`, by the adjoint recursion that
/// forms the first-order part of the backward pass.
pub fn input_gradient(model: &dyn Dynamics, cost: &dyn IlqrCost, traj: &Trajectory) -> Vec<Vector> {
    let (mut lambda, _) = cost.terminal_derivatives(traj.terminal());
    let mut grads = vec![Vector::zeros(0); traj.horizon()];
    for t in (0..traj.horizon()).rev() {
        let (a, b) = model.jacobians(t, &traj.states[t], &traj.inputs[t]);
        let d = cost.stage_derivatives(t, &traj.states[t], &traj.inputs[t]);
        grads[t] = &d.lu + b.transpose() * &lambda;
        lambda = &d.lx + a.transpose() * &lambda;
    }
    grads
}

pub fn ilqr_solve(
    model: &dyn Dynamics,
    cost: &dyn IlqrCost,
    x0: &Vector,
    u_init: &[Vector],
    opts: IlqrOptions,
) -> Result<IlqrResult> {
    if opts.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    if u_init.len() != cost.horizon() {
        return Err(Error::invalid(format!(
            "initial inputs have length {}, cost horizon is {}",
            u_init.len(),
            cost.horizon()
        )));
    }
    let mut traj = rollout(model, x0, u_init, None)?;
    let mut current = cost.total(&traj);
    let mut reg = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut gains: Option<BackwardPass> = None;

    while iterations < opts.max_iters {
        iterations += 1;
        let jacobians: Vec<(Matrix, Matrix)> = (0..traj.horizon())
            .map(|t| model.jacobians(t, &traj.states[t], &traj.inputs[t]))
            .collect();

        let pass = loop {
            match backward_pass(cost, &traj, &jacobians, reg) {
                Some(p) => break Some(p),
                None => {
                    reg = (reg * 10.0).max(REG_MIN);
                    if reg > REG_MAX {
                        break None;
                    }
                }
            }
        };
        let Some(pass) = pass else { break };

        let scale = current.abs().max(f64::MIN_POSITIVE);
        if pass.expected_decrease <= opts.tol * scale {
            converged = true;
            gains = Some(pass);
            break;
        }

        let mut accepted = None;
        for i in 0..=BACKTRACKS {
            let alpha = 0.5f64.powi(i);
            if let Some(candidate) = forward_pass(model, &traj, &pass, alpha) {
                let value = cost.total(&candidate);
                if value < current {
                    accepted = Some((candidate, value));
                    break;
                }
            }
        }
        gains = Some(pass);

        match accepted {
            Some((candidate, value)) => {
                let decrease = (current - value) / scale;
                traj = candidate;
                current = value;
                reg /= 10.0;
                if reg < REG_MIN {
                    reg = 0.0;
                }
                if decrease < opts.tol {
                    converged = true;
                    break;
                }
            }
            None => {
                reg = (reg * 10.0).max(REG_MIN);
                if reg > REG_MAX {
                    break;
                }
            }
        }
    }

    let (feedback, feedforward) = match gains {
        Some(p) => (p.feedback, p.feedforward),
        None => (Vec::new(), Vec::new()),
    };
    Ok(IlqrResult {
        trajectory: traj,
        feedback,
        feedforward,
        iterations_used: iterations,
        converged,
        cost: current,
    })
}
