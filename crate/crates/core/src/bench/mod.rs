//! Seeded benchmark batches comparing the layered ADMM solver against a
//! plain iLQR baseline, plus the oracle-equivalence suite behind `verify`.

mod experiments;
mod report;
mod stats;
mod verify;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{admm_solve, solve_stochastic, AdmmConfig, AdmmOutcome};
use crate::dynamics::{rollout, Trajectory};
use crate::error::{Error, Result};
use crate::ilqr::{ilqr_solve, IlqrOptions};
use crate::Vector;

pub use experiments::{
    circle_targets, corridor, linear_circle_problem, position_selector, Experiment, Setup, CIRCLE_OMEGA,
    CIRCLE_RADIUS, DT, INPUT_WEIGHT, LINEAR_INPUT_WEIGHT, LINEAR_NOISE_SCALE, QUADROTOR_GOAL, SPEED_LIMIT,
    STAGE_WEIGHT, TERMINAL_WEIGHT, UNICYCLE_GOAL,
};
pub use report::{
    aggregates, Aggregate, Check, CsvTables, ExperimentReport, ResidualRow, Series, Solver, TrajectoryRow,
    TrialRecord, AGGREGATE_FILE, CHECK_FILE, RESIDUAL_FILE, SCHEMA_VERSION, SUMMARY_FILE, TRAJECTORY_FILE,
};
pub use stats::{is_success, mean_std, sample_initial_conditions, success_rate, Distribution, SUCCESS_RADIUS};
pub use verify::{linear_oracle, monte_carlo_check, rho_consistency, verify_suite};

/// Iteration cap of the iLQR baseline.
pub const BASELINE_MAX_ITERS: usize = 200;
/// Relative objective gap allowed between ADMM and the dense oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-4;
/// Monte-Carlo rollouts in the certainty-equivalence check.
pub const MONTE_CARLO_ROLLOUTS: usize = 10_000;
/// Window over which residual traces must trend down.
pub const TREND_WINDOW: usize = 5;

/// Optional overrides of an experiment's default ADMM settings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmOverrides {
    pub rho0: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    pub max_warmup: Option<usize>,
    pub eps_primal: Option<f64>,
    pub eps_dual: Option<f64>,
    pub adapt_rho: Option<bool>,
}

impl AdmmOverrides {
    pub fn apply(&self, mut cfg: AdmmConfig) -> AdmmConfig {
        if let Some(v) = self.rho0 {
            cfg.rho0 = v;
        }
        if let Some(v) = self.max_outer {
            cfg.max_outer = v;
        }
        if let Some(v) = self.max_inner {
            cfg.max_inner = v;
        }
        if let Some(v) = self.max_warmup {
            cfg.max_warmup = v;
        }
        if let Some(v) = self.eps_primal {
            cfg.eps_primal = v;
        }
        if let Some(v) = self.eps_dual {
            cfg.eps_dual = v;
        }
        if let Some(v) = self.adapt_rho {
            cfg.adapt_rho = v;
        }
        cfg
    }

    /// Fields set in `other` win.
    pub fn merged(self, other: AdmmOverrides) -> Self {
        Self {
            rho0: other.rho0.or(self.rho0),
            max_outer: other.max_outer.or(self.max_outer),
            max_inner: other.max_inner.or(self.max_inner),
            max_warmup: other.max_warmup.or(self.max_warmup),
            eps_primal: other.eps_primal.or(self.eps_primal),
            eps_dual: other.eps_dual.or(self.eps_dual),
            adapt_rho: other.adapt_rho.or(self.adapt_rho),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub trials: usize,
    pub seed: u64,
    /// Experiment default when absent.
    pub horizon: Option<usize>,
    pub admm: AdmmOverrides,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, trials: usize, seed: u64) -> Self {
        Self {
            experiment,
            trials,
            seed,
            horizon: None,
            admm: AdmmOverrides::default(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or_else(|| self.experiment.default_horizon())
    }

    pub fn admm_config(&self) -> AdmmConfig {
        AdmmConfig {
            seed: self.seed,
            ..self.admm.apply(self.experiment.default_config())
        }
    }

    pub fn initial_conditions(&self) -> Result<Vec<Vector>> {
        let exp = self.experiment;
        match exp.distribution() {
            Some(dist) => Ok(sample_initial_conditions(dist, self.trials, exp.state_dim(), self.seed)?
                .iter()
                .map(|d| exp.initial_state(d))
                .collect()),
            None if self.trials > 0 => Ok(vec![Vector::zeros(exp.state_dim()); self.trials]),
            None => Err(Error::invalid("need at least one trial")),
        }
    }
}

/// Per-trial noise seed, distinct from the initial-condition stream.
pub fn noise_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(trial as u64 + 1)
}

/// Everything one trial produces, before it is folded into the report.
#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub admm: TrialRecord,
    pub baseline: TrialRecord,
    pub outcome: Option<AdmmOutcome>,
    pub baseline_trajectory: Option<Trajectory>,
    pub setup: Setup,
}

/// Runs the layered solver and the baseline from the same initial state.
pub fn run_trial(cfg: &ExperimentConfig, admm_cfg: &AdmmConfig, trial: usize, x0: &Vector) -> Result<TrialOutput> {
    let exp = cfg.experiment;
    let setup = exp.build(cfg.horizon(), x0)?;
    let model = setup.problem.model.clone();
    let noise = setup.problem.noise.as_ref().map(|n| (n, noise_seed(cfg.seed, trial)));

    let admm = if exp == Experiment::LinearNoise {
        solve_stochastic(&setup.problem, admm_cfg)
    } else {
        admm_solve(&setup.problem, admm_cfg)
    };
    let (admm_record, outcome) = match admm {
        Ok(out) => {
            let executed = match noise {
                Some(n) => out.policy.simulate(model.as_ref(), Some(n)),
                None => Ok(out.state.trajectory.clone()),
            };
            let mut record = record_from(&setup, trial, Solver::Admm, x0, executed);
            record.total_iterations = out.diagnostics.total_iterations;
            record.outer_iterations = out.state.outer;
            record.converged = out.diagnostics.converged;
            (record, Some(out))
        }
        Err(e) => (record_from(&setup, trial, Solver::Admm, x0, Err(e)), None),
    };

    let zeros = vec![Vector::zeros(model.input_dim()); setup.problem.horizon()];
    let opts = IlqrOptions {
        max_iters: BASELINE_MAX_ITERS,
        tol: admm_cfg.ilqr_tol,
    };
    let (baseline_record, baseline_trajectory) = match ilqr_solve(model.as_ref(), &setup.baseline, x0, &zeros, opts) {
        Ok(res) => {
            let executed = match noise {
                Some(n) => rollout(model.as_ref(), x0, &res.trajectory.inputs, Some(n)),
                None => Ok(res.trajectory.clone()),
            };
            let mut record = record_from(&setup, trial, Solver::Ilqr, x0, executed);
            record.total_iterations = res.iterations_used;
            record.outer_iterations = res.iterations_used;
            record.converged = res.converged;
            (record, Some(res.trajectory))
        }
        Err(e) => (record_from(&setup, trial, Solver::Ilqr, x0, Err(e)), None),
    };

    Ok(TrialOutput {
        admm: admm_record,
        baseline: baseline_record,
        outcome,
        baseline_trajectory,
        setup,
    })
}

fn record_from(setup: &Setup, trial: usize, solver: Solver, x0: &Vector, executed: Result<Trajectory>) -> TrialRecord {
    let mut record = TrialRecord {
        trial,
        solver,
        initial_condition: x0.iter().copied().collect(),
        terminal_state: Vec::new(),
        terminal_distance: None,
        success: false,
        total_iterations: 0,
        outer_iterations: 0,
        converged: false,
        error: None,
    };
    match executed {
        Ok(traj) => {
            let d = setup.terminal_distance(traj.terminal());
            record.terminal_state = traj.terminal().iter().copied().collect();
            record.terminal_distance = Some(d);
            record.success = is_success(d);
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let admm_cfg = cfg.admm_config();
    admm_cfg.validate()?;
    let x0s = cfg.initial_conditions()?;
    let outputs: Vec<TrialOutput> = x0s
        .par_iter()
        .enumerate()
        .map(|(i, x0)| run_trial(cfg, &admm_cfg, i, x0))
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(2 * outputs.len());
    let mut residuals = Vec::new();
    let mut trajectories = Vec::new();
    for (i, out) in outputs.iter().enumerate() {
        records.push(out.admm.clone());
        records.push(out.baseline.clone());
        if let Some(o) = &out.outcome {
            residuals.extend(o.diagnostics.records.iter().map(|r| ResidualRow {
                trial: i,
                outer: r.outer,
                rho: r.rho,
                primal: r.primal,
                dual: r.dual,
                inner_iterations: r.inner_iterations,
            }));
            dump(&mut trajectories, i, Solver::Admm, Series::State, &o.state.trajectory.states);
            dump(&mut trajectories, i, Solver::Admm, Series::Input, &o.state.trajectory.inputs);
            dump(&mut trajectories, i, Solver::Admm, Series::Reference, &o.state.reference);
            if let Some(a) = &o.state.actions {
                dump(&mut trajectories, i, Solver::Admm, Series::Action, a);
            }
        }
        if let Some(t) = &out.baseline_trajectory {
            dump(&mut trajectories, i, Solver::Ilqr, Series::State, &t.states);
            dump(&mut trajectories, i, Solver::Ilqr, Series::Input, &t.inputs);
        }
    }

    let checks = checks(cfg, &admm_cfg, &outputs)?;
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        experiment: cfg.experiment,
        horizon: cfg.horizon(),
        seed: cfg.seed,
        config: admm_cfg,
        aggregates: aggregates(&records)?,
        records,
        residuals,
        trajectories,
        checks,
    })
}

fn dump(rows: &mut Vec<TrajectoryRow>, trial: usize, solver: Solver, series: Series, seq: &[Vector]) {
    rows.extend(seq.iter().enumerate().map(|(t, v)| TrajectoryRow {
        trial,
        solver,
        series,
        t,
        values: v.iter().copied().collect(),
    }));
}

/// `max(primal²/ε_p, dual/ε_d)`: below 1 exactly when the stopping test holds.
pub fn stopping_merit(primal: f64, dual: f64, cfg: &AdmmConfig) -> f64 {
    (primal * primal / cfg.eps_primal).max(dual / cfg.eps_dual)
}

/// True when the trace ends no higher than it stood `window − 1` iterations
/// earlier. Traces shorter than the window pass trivially.
pub fn trending_down(trace: &[f64], window: usize) -> bool {
    if trace.len() < window || window < 2 {
        return true;
    }
    let tail = &trace[trace.len() - window..];
    tail[window - 1] <= tail[0]
}

/// Stopping-merit trace of one ADMM run.
pub fn merit_trace(records: &[crate::admm::IterationRecord], cfg: &AdmmConfig) -> Vec<f64> {
    records.iter().map(|r| stopping_merit(r.primal, r.dual, cfg)).collect()
}

fn checks(cfg: &ExperimentConfig, admm_cfg: &AdmmConfig, outputs: &[TrialOutput]) -> Result<Vec<Check>> {
    let exp = cfg.experiment;
    let mut out = Vec::new();

    let mut infeasible = Vec::new();
    for (i, o) in outputs.iter().enumerate() {
        let model = o.setup.problem.model.as_ref();
        let admm_ok = o.outcome.as_ref().is_none_or(|a| a.state.trajectory.is_feasible_for(model));
        let base_ok = o.baseline_trajectory.as_ref().is_none_or(|t| t.is_feasible_for(model));
        if !(admm_ok && base_ok) {
            infeasible.push(i);
        }
    }
    out.push(Check::new(
        "dynamic-feasibility",
        infeasible.is_empty(),
        format!("{} of {} trials re-validate exactly", outputs.len() - infeasible.len(), outputs.len()),
    ));

    if exp == Experiment::LinearCircle {
        let mut worst: f64 = 0.0;
        let mut all_converged = true;
        for o in outputs {
            let Some(a) = &o.outcome else {
                all_converged = false;
                continue;
            };
            let oracle = linear_oracle(&o.setup.problem)?;
            let ours = o.setup.problem.objective(&a.state.trajectory);
            worst = worst.max((ours - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE));
            let last = a.state.primal_history.last().copied().unwrap_or(f64::INFINITY);
            all_converged &= last * last <= admm_cfg.eps_primal;
        }
        out.push(Check::new(
            "oracle-match",
            all_converged && worst <= ORACLE_TOLERANCE,
            format!("worst relative objective gap {worst:.3e}, converged {all_converged}"),
        ));
    }

    if exp == Experiment::LinearNoise {
        if let Some(first) = outputs.first() {
            out.push(monte_carlo_check(&first.setup.problem, admm_cfg, MONTE_CARLO_ROLLOUTS, cfg.seed)?);
        }
    }

    let constrained = outputs
        .first()
        .is_some_and(|o| o.setup.problem.constraints.iter().any(|c| *c != crate::traj_opt::StateConstraint::Unconstrained));
    if constrained {
        let violations = outputs
            .iter()
            .filter_map(|o| o.outcome.as_ref().map(|a| (o, a)))
            .filter(|(o, a)| {
                a.state
                    .reference
                    .iter()
                    .zip(&o.setup.problem.constraints)
                    .any(|(r, c)| !c.is_satisfied(r))
            })
            .count();
        out.push(Check::new(
            "reference-constraints",
            violations == 0,
            format!("{violations} trials with a final reference outside its constraint set"),
        ));
    }

    if let Some(b) = outputs.first().and_then(|o| o.setup.problem.input_box.clone()) {
        let mut worst_action: f64 = 0.0;
        let mut worst_input: f64 = 0.0;
        let mut ok = true;
        for a in outputs.iter().filter_map(|o| o.outcome.as_ref()) {
            if let Some(actions) = &a.state.actions {
                ok &= actions.iter().all(|v| b.bounds.contains(v));
                for v in actions {
                    worst_action = worst_action.max(v[0].abs());
                }
            }
            for u in &a.state.trajectory.inputs {
                worst_input = worst_input.max(u[0].abs());
            }
        }
        out.push(Check::new(
            "speed-limit",
            ok,
            format!("max |action speed| {worst_action:.6}, max |executed speed| {worst_input:.6}"),
        ));
    }

    if matches!(exp, Experiment::Quadrotor | Experiment::QuadrotorLowOrder) {
        let flat = outputs
            .iter()
            .filter_map(|o| o.outcome.as_ref())
            .filter(|a| !trending_down(&merit_trace(&a.diagnostics.records, admm_cfg), TREND_WINDOW))
            .count();
        out.push(Check::new(
            "residual-trend",
            flat == 0,
            format!("{flat} trials whose stopping merit rose over the final {TREND_WINDOW} iterations"),
        ));
    }

    Ok(out)
}
