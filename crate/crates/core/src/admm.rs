//! Outer ADMM loop coordinating the trajectory-generation and feedback layers.
//!
//! Each outer iteration updates the reference `r` (and the action copy `a`
//! when inputs are bounded), re-solves the feedback layer for `(x, u)`, then
//! takes a scaled dual step `v ← v + Cx − r`. The penalty `ρ` follows the
//! residual-balancing rule, with scaled duals rescaled on every change so the
//! unscaled multipliers `ρv` are continuous.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{diverged, rollout, Dynamics, NoiseModel, Trajectory};
use crate::error::{Error, Result};
use crate::ilqr::{ilqr_solve, IlqrOptions, QuadraticCost};
use crate::tracking_lqr::{lqr_gain, solve_tracking, InputProx, RiccatiSolution, TrackingProblem};
use crate::traj_opt::{prox_input, prox_reference, InputBox, ReferenceCost, StateConstraint};
use crate::{Matrix, Vector};

#[derive(Clone)]
pub struct LayeredProblem {
    pub model: Arc<dyn Dynamics>,
    /// Reference cost over `t = 0..=N`; its dimension is the output dimension.
    pub cost: ReferenceCost,
    /// `R_t` for `t = 0..N`.
    pub input_weights: Vec<Matrix>,
    pub constraints: Vec<StateConstraint>,
    pub input_box: Option<InputBox>,
    pub initial_state: Vector,
    /// Low-order output map `C`; identity when absent.
    pub output: Option<Matrix>,
    pub noise: Option<NoiseModel>,
}

impl std::fmt::Debug for LayeredProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LayeredProblem")
            .field("model", &self.model.kind())
            .field("horizon", &self.horizon())
            .field("initial_state", &self.initial_state)
            .field("low_order", &self.output.is_some())
            .field("input_constrained", &self.input_box.is_some())
            .finish_non_exhaustive()
    }
}

impl LayeredProblem {
    pub fn horizon(&self) -> usize {
        self.input_weights.len()
    }

    pub fn output_matrix(&self) -> Matrix {
        let n = self.model.state_dim();
        self.output.clone().unwrap_or_else(|| Matrix::identity(n, n))
    }

    /// `(A_t, B_t)` for every step when the model is linear.
    pub fn linear_sequences(&self) -> Option<(Vec<Matrix>, Vec<Matrix>)> {
        (0..self.horizon())
            .map(|t| self.model.linear_parts(t).map(|(a, b)| (a.clone(), b.clone())))
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().unzip())
    }

    /// `C_x(Cx) + Σ u_tᵀR_t u_t`, the objective of the original problem.
    pub fn objective(&self, traj: &Trajectory) -> f64 {
        let c = self.output_matrix();
        let outputs: Vec<Vector> = traj.states.iter().map(|x| &c * x).collect();
        let inputs: f64 = traj
            .inputs
            .iter()
            .zip(&self.input_weights)
            .map(|(u, r)| (u.transpose() * r * u)[0])
            .sum();
        self.cost.eval(&outputs) + inputs
    }

    pub fn validate(&self) -> Result<()> {
        let horizon = self.horizon();
        let n = self.model.state_dim();
        let m = self.model.input_dim();
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if self.initial_state.len() != n {
            return Err(Error::invalid(format!(
                "initial state has dimension {}, model expects {n}",
                self.initial_state.len()
            )));
        }
        let c = self.output_matrix();
        if c.ncols() != n || c.nrows() > n {
            return Err(Error::invalid(format!("output map is {}x{}, state dimension {n}", c.nrows(), c.ncols())));
        }
        if self.cost.stages.len() != horizon + 1 || self.cost.dim() != c.nrows() {
            return Err(Error::invalid("reference cost does not match horizon and output dimension"));
        }
        self.cost.validate()?;
        if self.constraints.len() != horizon + 1 {
            return Err(Error::invalid(format!(
                "expected {} constraint entries, got {}",
                horizon + 1,
                self.constraints.len()
            )));
        }
        if self.input_weights.iter().any(|r| r.shape() != (m, m)) {
            return Err(Error::invalid(format!("input weights must be {m}x{m}")));
        }
        if let Some(b) = &self.input_box {
            if b.bounds.lower.len() != m {
                return Err(Error::invalid("input box dimension differs from input dimension"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    pub rho0: f64,
    pub mu: f64,
    pub tau_incr: f64,
    pub tau_decr: f64,
    /// Bound on the squared primal residual.
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub max_outer: usize,
    /// iLQR iteration cap per outer step.
    pub max_inner: usize,
    /// iLQR iteration cap for the initial solve against `r⁰`.
    pub max_warmup: usize,
    pub ilqr_tol: f64,
    pub adapt_rho: bool,
    pub seed: u64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho0: 25.0,
            mu: 10.0,
            tau_incr: 2.0,
            tau_decr: 2.0,
            eps_primal: 1e-2,
            eps_dual: 1e-1,
            max_outer: 200,
            max_inner: 10,
            max_warmup: 200,
            ilqr_tol: 1e-6,
            adapt_rho: true,
            seed: 0,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho0 > 0.0) {
            return Err(Error::invalid(format!("rho0 must be positive, got {}", self.rho0)));
        }
        if !(self.mu > 1.0 && self.tau_incr > 1.0 && self.tau_decr > 1.0) {
            return Err(Error::invalid("mu, tau_incr and tau_decr must exceed 1"));
        }
        if !(self.eps_primal > 0.0 && self.eps_dual > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.max_warmup == 0 {
            return Err(Error::invalid("iteration caps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub outer: usize,
    /// Penalty used during this iteration.
    pub rho: f64,
    pub primal: f64,
    pub dual: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct AdmmState {
    pub reference: Vec<Vector>,
    pub trajectory: Trajectory,
    pub dual: Vec<Vector>,
    pub actions: Option<Vec<Vector>>,
    pub action_dual: Option<Vec<Vector>>,
    pub rho: f64,
    pub outer: usize,
    pub primal_history: Vec<f64>,
    pub dual_history: Vec<f64>,
    /// Inner iteration count `i_k` per outer iteration.
    pub inner_ledger: Vec<usize>,
    /// Inner iterations of the initial feedback solve against `r⁰`.
    pub warmup_iterations: usize,
}

impl AdmmState {
    fn initial(prob: &LayeredProblem, cfg: &AdmmConfig) -> Result<Self> {
        let horizon = prob.horizon();
        let m = prob.model.input_dim();
        let zeros = vec![Vector::zeros(m); horizon];
        let trajectory = rollout(prob.model.as_ref(), &prob.initial_state, &zeros, None)?;
        let q = prob.cost.dim();
        Ok(Self {
            reference: initial_reference(prob),
            trajectory,
            dual: vec![Vector::zeros(q); horizon + 1],
            actions: prob.input_box.as_ref().map(|_| zeros.clone()),
            action_dual: prob.input_box.as_ref().map(|_| zeros),
            rho: cfg.rho0,
            outer: 0,
            primal_history: Vec::new(),
            dual_history: Vec::new(),
            inner_ledger: Vec::new(),
            warmup_iterations: 0,
        })
    }
}

/// Straight line from `Cξ` to the terminal target of the reference cost.
///
/// The first feedback solve tracks this line, starting from the zero-input
/// rollout, so the first reference update sees a meaningful state trajectory.
pub fn initial_reference(prob: &LayeredProblem) -> Vec<Vector> {
    let horizon = prob.horizon();
    let start = prob.output_matrix() * &prob.initial_state;
    let end = &prob.cost.stages[horizon].target;
    (0..=horizon)
        .map(|t| {
            let s = t as f64 / horizon as f64;
            &start * (1.0 - s) + end * s
        })
        .collect()
}

/// Residual-balancing penalty update. Returns `(ρ', ρ/ρ')`, the second
/// factor being the multiplier for every scaled dual.
pub fn update_rho(rho: f64, primal: f64, dual: f64, mu: f64, tau_incr: f64, tau_decr: f64) -> (f64, f64) {
    let next = if primal > mu * dual {
        rho * tau_incr
    } else if dual > mu * primal {
        rho / tau_decr
    } else {
        rho
    };
    (next, rho / next)
}

/// `(‖Cx − r‖, ρ‖r − r_prev‖)` over the stacked horizon, with the action
/// copy included when present.
pub fn residuals(
    state: &AdmmState,
    output: &Matrix,
    previous: &[Vector],
    previous_actions: Option<&[Vector]>,
) -> (f64, f64) {
    let mut primal = 0.0;
    for (x, r) in state.trajectory.states.iter().zip(&state.reference) {
        primal += (output * x - r).norm_squared();
    }
    let mut change: f64 = state
        .reference
        .iter()
        .zip(previous)
        .map(|(r, p)| (r - p).norm_squared())
        .sum();
    if let Some(a) = &state.actions {
        for (u, a) in state.trajectory.inputs.iter().zip(a) {
            primal += (u - a).norm_squared();
        }
        if let Some(prev) = previous_actions {
            change += a.iter().zip(prev).map(|(a, p)| (a - p).norm_squared()).sum::<f64>();
        }
    }
    (primal.sqrt(), state.rho * change.sqrt())
}

/// Scaled dual step `v ← v + (Cx − r)`.
pub fn dual_update(v: &mut Vector, cx: &Vector, r: &Vector) {
    *v += cx - r;
}

/// `Σ_k (1 + i_k)`: one reference solve plus the inner iterations per outer step.
pub fn iteration_count(ledger: &[usize]) -> usize {
    ledger.iter().map(|i| 1 + i).sum()
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub total_iterations: usize,
}

/// Plan plus feedback: `u_t = u^d_t − K_t (x_t − x^d_t)`.
#[derive(Debug, Clone)]
pub struct LayeredPolicy {
    pub reference: Vec<Vector>,
    pub plan: Trajectory,
    /// Final tracking-layer solution when the model is linear.
    pub tracking: Option<RiccatiSolution>,
    /// Gains acting on `x − x^d`; empty for a purely open-loop plan.
    pub stochastic_gains: Vec<Matrix>,
}

impl LayeredPolicy {
    pub fn control(&self, t: usize, x: &Vector) -> Vector {
        let ud = &self.plan.inputs[t];
        match self.stochastic_gains.get(t) {
            Some(k) => ud - k * (x - &self.plan.states[t]),
            None => ud.clone(),
        }
    }

    /// Closed-loop simulation from the plan's initial state.
    pub fn simulate(&self, model: &dyn Dynamics, noise: Option<(&NoiseModel, u64)>) -> Result<Trajectory> {
        let horizon = self.plan.horizon();
        let mut sampler = noise.map(|(nm, seed)| nm.sampler(seed));
        let mut states = Vec::with_capacity(horizon + 1);
        let mut inputs = Vec::with_capacity(horizon);
        states.push(self.plan.states[0].clone());
        for t in 0..horizon {
            let u = self.control(t, &states[t]);
            let mut next = model.transition(t, &states[t], &u);
            if let Some(s) = sampler.as_mut() {
                next += s.sample(t);
            }
            if diverged(&next) {
                return Err(Error::Divergence { step: t + 1 });
            }
            inputs.push(u);
            states.push(next);
        }
        Ok(Trajectory { states, inputs })
    }
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub state: AdmmState,
    pub policy: LayeredPolicy,
    pub diagnostics: Diagnostics,
}

struct FeedbackStep {
    trajectory: Trajectory,
    inner: usize,
    riccati: Option<RiccatiSolution>,
}

fn feedback_step(
    prob: &LayeredProblem,
    cfg: &AdmmConfig,
    max_iters: usize,
    linear: Option<&(Vec<Matrix>, Vec<Matrix>)>,
    state: &AdmmState,
) -> Result<FeedbackStep> {
    let input_prox = match (&state.actions, &state.action_dual) {
        (Some(a), Some(va)) => Some(InputProx {
            actions: a.clone(),
            duals: va.clone(),
        }),
        _ => None,
    };
    if let Some((a, b)) = linear {
        let tp = TrackingProblem {
            a: a.clone(),
            b: b.clone(),
            input_weights: prob.input_weights.clone(),
            reference: state.reference.clone(),
            dual: state.dual.clone(),
            rho: state.rho,
            initial_state: prob.initial_state.clone(),
            output: prob.output.clone(),
            input_prox,
        };
        let sol = solve_tracking(&tp)?;
        return Ok(FeedbackStep {
            trajectory: sol.trajectory,
            inner: 1,
            riccati: Some(sol.riccati),
        });
    }
    let cost = QuadraticCost::tracking(
        prob.output_matrix(),
        &state.reference,
        &state.dual,
        state.rho,
        &prob.input_weights,
        input_prox.as_ref().map(|p| (p.actions.as_slice(), p.duals.as_slice())),
    );
    let opts = IlqrOptions {
        max_iters,
        tol: cfg.ilqr_tol,
    };
    let res = ilqr_solve(
        prob.model.as_ref(),
        &cost,
        &prob.initial_state,
        &state.trajectory.inputs,
        opts,
    )?;
    Ok(FeedbackStep {
        trajectory: res.trajectory,
        inner: res.iterations_used,
        riccati: None,
    })
}

pub fn admm_solve(prob: &LayeredProblem, cfg: &AdmmConfig) -> Result<AdmmOutcome> {
    prob.validate()?;
    cfg.validate()?;
    let c = prob.output_matrix();
    let linear = prob.linear_sequences();
    let mut state = AdmmState::initial(prob, cfg)?;
    let warmup = feedback_step(prob, cfg, cfg.max_warmup, linear.as_ref(), &state)?;
    state.trajectory = warmup.trajectory;
    state.warmup_iterations = warmup.inner;
    let mut records = Vec::new();
    let mut converged = false;
    let mut riccati = warmup.riccati;

    for k in 1..=cfg.max_outer {
        let previous = std::mem::take(&mut state.reference);
        let anchor: Vec<Vector> = state
            .trajectory
            .states
            .iter()
            .zip(&state.dual)
            .map(|(x, v)| &c * x + v)
            .collect();
        state.reference = prox_reference(&prob.cost, &anchor, state.rho, &prob.constraints)?;

        let previous_actions = state.actions.clone();
        if let (Some(bounds), Some(va)) = (&prob.input_box, &state.action_dual) {
            let shifted: Vec<Vector> = state.trajectory.inputs.iter().zip(va).map(|(u, v)| u + v).collect();
            state.actions = Some(prox_input(&shifted, bounds));
        }

        let step = feedback_step(prob, cfg, cfg.max_inner, linear.as_ref(), &state)?;
        state.trajectory = step.trajectory;
        riccati = step.riccati;

        for ((v, x), r) in state.dual.iter_mut().zip(&state.trajectory.states).zip(&state.reference) {
            dual_update(v, &(&c * x), r);
        }
        if let (Some(va), Some(a)) = (state.action_dual.as_mut(), &state.actions) {
            for ((v, u), a) in va.iter_mut().zip(&state.trajectory.inputs).zip(a) {
                dual_update(v, u, a);
            }
        }

        let (primal, dual) = residuals(&state, &c, &previous, previous_actions.as_deref());
        state.outer = k;
        state.primal_history.push(primal);
        state.dual_history.push(dual);
        state.inner_ledger.push(step.inner);
        records.push(IterationRecord {
            outer: k,
            rho: state.rho,
            primal,
            dual,
            inner_iterations: step.inner,
        });

        if primal * primal <= cfg.eps_primal && dual <= cfg.eps_dual {
            converged = true;
            break;
        }
        if cfg.adapt_rho {
            let (next, scale) = update_rho(state.rho, primal, dual, cfg.mu, cfg.tau_incr, cfg.tau_decr);
            if next != state.rho {
                state.rho = next;
                state.dual.iter_mut().for_each(|v| *v *= scale);
                if let Some(va) = state.action_dual.as_mut() {
                    va.iter_mut().for_each(|v| *v *= scale);
                }
            }
        }
    }

    let policy = LayeredPolicy {
        reference: state.reference.clone(),
        plan: state.trajectory.clone(),
        tracking: riccati,
        stochastic_gains: Vec::new(),
    };
    let diagnostics = Diagnostics {
        total_iterations: state.warmup_iterations + iteration_count(&state.inner_ledger),
        records,
        converged,
    };
    Ok(AdmmOutcome {
        state,
        policy,
        diagnostics,
    })
}

/// Certainty-equivalent policy: ADMM on the noiseless problem plus an LQR
/// gain on the deviation `x − x^d`.
pub fn solve_stochastic(prob: &LayeredProblem, cfg: &AdmmConfig) -> Result<AdmmOutcome> {
    let Some((a, b)) = prob.linear_sequences() else {
        return Err(Error::UnsupportedCost("stochastic decomposition needs linear dynamics".into()));
    };
    if prob.output.is_some()
        || prob.input_box.is_some()
        || prob.constraints.iter().any(|c| *c != StateConstraint::Unconstrained)
    {
        return Err(Error::UnsupportedCost(
            "stochastic decomposition needs an unconstrained full-state quadratic cost".into(),
        ));
    }
    let state_weight = &prob.cost.stages[0].weight;
    if prob.cost.stages.iter().any(|s| &s.weight != state_weight) {
        return Err(Error::UnsupportedCost("state weight must be time-invariant".into()));
    }
    let input_weight = &prob.input_weights[0];
    if prob.input_weights.iter().any(|r| r != input_weight) {
        return Err(Error::UnsupportedCost("input weight must be time-invariant".into()));
    }
    let gains = lqr_gain(&a, &b, state_weight, input_weight)?;

    let deterministic = LayeredProblem {
        noise: None,
        ..prob.clone()
    };
    let mut outcome = admm_solve(&deterministic, cfg)?;
    outcome.policy.stochastic_gains = gains;
    Ok(outcome)
}
