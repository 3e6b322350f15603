use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::admm::{admm_solve, solve_stochastic, AdmmConfig, LayeredProblem};
use crate::error::{Error, Result};
use crate::oracle::{tracking_oracle, TrajectoryQp};
use crate::tracking_lqr::{solve_tracking, tracking_objective, TrackingProblem};
use crate::traj_opt::{prox_obstacle, stage_objective, ObstacleRect, StageCost};
use crate::{Matrix, Vector};

use super::experiments::linear_circle_problem;
use super::report::Check;
use super::{noise_seed, ORACLE_TOLERANCE};

/// Optimal value of a linear, unconstrained layered problem from the dense
/// stacked-KKT solve.
pub fn linear_oracle(prob: &LayeredProblem) -> Result<f64> {
    let (a, b) = prob
        .linear_sequences()
        .ok_or_else(|| Error::UnsupportedCost("dense oracle needs linear dynamics".into()))?;
    let mut qp = TrajectoryQp::new(&a, &b, &prob.initial_state)?;
    let c = prob.output_matrix();
    for (t, s) in prob.cost.stages.iter().enumerate() {
        qp.add_state_term(t, &c, &s.target, &s.weight);
        if let Some(l) = &s.linear {
            qp.add_state_linear(t, &c, l);
        }
    }
    let m = prob.model.input_dim();
    for (t, r) in prob.input_weights.iter().enumerate() {
        qp.add_input_term(t, &Vector::zeros(m), r);
    }
    Ok(qp.solve()?.objective)
}

/// Certainty equivalence: the plan is bit-identical across noise seeds and
/// the closed-loop Monte-Carlo mean stays within three standard errors of it.
pub fn monte_carlo_check(prob: &LayeredProblem, cfg: &AdmmConfig, rollouts: usize, seed: u64) -> Result<Check> {
    let noise = prob
        .noise
        .clone()
        .ok_or_else(|| Error::invalid("Monte-Carlo check needs a noise model"))?;
    let a = solve_stochastic(prob, &AdmmConfig { seed, ..*cfg })?;
    let b = solve_stochastic(prob, &AdmmConfig { seed: seed.wrapping_add(1), ..*cfg })?;
    let identical = a.policy.plan == b.policy.plan && a.policy.reference == b.policy.reference;

    let plan = &a.policy.plan;
    let horizon = plan.horizon();
    let n = plan.states[0].len();
    let mut sum = vec![Vector::zeros(n); horizon + 1];
    let mut sq = vec![Vector::zeros(n); horizon + 1];
    for i in 0..rollouts {
        let traj = a.policy.simulate(prob.model.as_ref(), Some((&noise, noise_seed(seed, i))))?;
        for (t, x) in traj.states.iter().enumerate() {
            sum[t] += x;
            sq[t] += x.component_mul(x);
        }
    }
    let k = rollouts as f64;
    let mut worst: f64 = 0.0;
    for t in 0..=horizon {
        for j in 0..n {
            let mean = sum[t][j] / k;
            let var = (sq[t][j] / k - mean * mean).max(0.0) * k / (k - 1.0);
            let se = (var / k).sqrt();
            let gap = (mean - plan.states[t][j]).abs();
            // t = 0 has no noise: the mean must be exact.
            let ratio = if se > 0.0 { gap / se } else if gap == 0.0 { 0.0 } else { f64::INFINITY };
            worst = worst.max(ratio);
        }
    }
    Ok(Check::new(
        "certainty-equivalence",
        identical && worst <= 3.0,
        format!("plan identical across seeds: {identical}; worst mean gap {worst:.3} standard errors over {rollouts} rollouts"),
    ))
}

fn random_tracking(rng: &mut ChaCha8Rng) -> TrackingProblem {
    let n = rng.random_range(1..=4);
    let m = rng.random_range(1..=2);
    let horizon = rng.random_range(1..=20);
    let mat = |rng: &mut ChaCha8Rng, r: usize, c: usize, s: f64| Matrix::from_fn(r, c, |_, _| rng.random_range(-s..s));
    let vec = |rng: &mut ChaCha8Rng, r: usize, s: f64| Vector::from_fn(r, |_, _| rng.random_range(-s..s));
    TrackingProblem {
        a: (0..horizon).map(|_| Matrix::identity(n, n) + mat(rng, n, n, 0.3)).collect(),
        b: (0..horizon).map(|_| mat(rng, n, m, 1.0)).collect(),
        input_weights: (0..horizon)
            .map(|_| {
                let l = mat(rng, m, m, 1.0);
                &l * l.transpose() + Matrix::identity(m, m) * 0.1
            })
            .collect(),
        reference: (0..=horizon).map(|_| vec(rng, n, 2.0)).collect(),
        dual: (0..=horizon).map(|_| vec(rng, n, 0.5)).collect(),
        rho: rng.random_range(0.5..5.0),
        initial_state: vec(rng, n, 1.0),
        output: None,
        input_prox: None,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

fn tracking_checks() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_obj, mut worst_traj, mut worst_value, mut worst_split) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut selectors_exact = true;
    for _ in 0..50 {
        let prob = random_tracking(&mut rng);
        let sol = solve_tracking(&prob)?;
        let oracle = tracking_oracle(&prob)?;
        let achieved = tracking_objective(&prob, &sol.trajectory);
        worst_obj = worst_obj.max(rel(achieved, oracle.objective));
        worst_value = worst_value.max(rel(sol.predicted_objective(), achieved));
        let scale = oracle.states.iter().map(|x| x.amax()).fold(1.0, f64::max);
        for (x, xo) in sol.trajectory.states.iter().zip(&oracle.states) {
            worst_traj = worst_traj.max((x - xo).amax() / scale);
        }

        let aug = &sol.augmented;
        let d = aug.dim();
        selectors_exact &= aug.f.transpose() * &aug.f + aug.g.transpose() * &aug.g == Matrix::identity(d, d);
        let r = &sol.riccati;
        for t in 0..prob.horizon() {
            for _ in 0..100 {
                let z = Vector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
                let full = r.control(t, &z);
                let split = r.control_decomposed(t, &(&aug.f * &z), &(&aug.g * &z));
                worst_split = worst_split.max((&full - &split).amax() / full.amax().max(1.0));
            }
        }
    }
    Ok(vec![
        Check::new(
            "tracking-lqr-oracle",
            worst_obj <= 1e-6 && worst_traj <= 1e-6 && worst_value <= 1e-8,
            format!(
                "50 instances: objective gap {worst_obj:.2e}, trajectory gap {worst_traj:.2e}, value gap {worst_value:.2e}"
            ),
        ),
        Check::new(
            "decomposition-identity",
            selectors_exact && worst_split <= 1e-12,
            format!("FᵀF + GᵀG = I exact: {selectors_exact}; control split gap {worst_split:.2e}"),
        ),
    ])
}

fn linear_checks() -> Result<Vec<Check>> {
    let prob = linear_circle_problem(20, &Vector::zeros(2));
    let adaptive = AdmmConfig { rho0: 1.0, ..AdmmConfig::default() };
    let out = admm_solve(&prob, &adaptive)?;
    let oracle = linear_oracle(&prob)?;
    let gap = rel(prob.objective(&out.state.trajectory), oracle);
    let primal = out.state.primal_history.last().copied().unwrap_or(f64::INFINITY);

    let (fixed, adapted, diff, changes) = rho_consistency(&prob)?;
    Ok(vec![
        Check::new(
            "linear-circle-oracle",
            out.diagnostics.converged && primal * primal <= adaptive.eps_primal && gap <= ORACLE_TOLERANCE,
            format!("{} outer iterations, primal² {:.2e}, objective gap {gap:.2e}", out.state.outer, primal * primal),
        ),
        Check::new(
            "rho-adaptation",
            fixed && adapted && changes > 0 && diff <= ORACLE_TOLERANCE,
            format!("{changes} penalty changes; max difference between fixed- and adaptive-ρ solutions {diff:.2e}"),
        ),
    ])
}

/// Solves the linear problem with a fixed `ρ = 1` and with adaptation from
/// `ρ₀ = 50`, both to tight tolerances. Returns convergence flags, the largest
/// coordinate difference between the two solutions, and how often `ρ` moved.
pub fn rho_consistency(prob: &LayeredProblem) -> Result<(bool, bool, f64, usize)> {
    let tight = AdmmConfig { eps_primal: 1e-10, eps_dual: 1e-6, ..AdmmConfig::default() };
    let fixed = admm_solve(prob, &AdmmConfig { rho0: 1.0, adapt_rho: false, ..tight })?;
    let adaptive = admm_solve(prob, &AdmmConfig { rho0: 50.0, adapt_rho: true, ..tight })?;
    let mut diff: f64 = 0.0;
    let (a, b) = (&fixed.state.trajectory, &adaptive.state.trajectory);
    for (x, y) in a.states.iter().zip(&b.states).chain(a.inputs.iter().zip(&b.inputs)) {
        diff = diff.max((x - y).amax());
    }
    for (x, y) in fixed.state.reference.iter().zip(&adaptive.state.reference) {
        diff = diff.max((x - y).amax());
    }
    let changes = adaptive.diagnostics.records.windows(2).filter(|w| w[0].rho != w[1].rho).count();
    Ok((fixed.diagnostics.converged, adaptive.diagnostics.converged, diff, changes))
}

/// Two-pass grid search: coarse over the window, then 1e-3 around the best.
fn grid_minimum(f: impl Fn(f64, f64) -> f64, feasible: impl Fn(f64, f64) -> bool, lo: [f64; 2], hi: [f64; 2]) -> f64 {
    let scan = |lo: [f64; 2], hi: [f64; 2], h: f64| {
        let nx = ((hi[0] - lo[0]) / h).ceil() as usize;
        let ny = ((hi[1] - lo[1]) / h).ceil() as usize;
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for i in 0..=nx {
            for j in 0..=ny {
                let (x, y) = (lo[0] + i as f64 * h, lo[1] + j as f64 * h);
                if feasible(x, y) {
                    let v = f(x, y);
                    if v < best.0 {
                        best = (v, [x, y]);
                    }
                }
            }
        }
        best
    };
    let (coarse, c) = scan(lo, hi, 2e-2);
    let (fine, _) = scan([c[0] - 0.05, c[1] - 0.05], [c[0] + 0.05, c[1] + 0.05], 1e-3);
    coarse.min(fine)
}

fn obstacle_check() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let rect = ObstacleRect::new(1.0, 0.5, 1.5, 1.0)?;
    let mut worst: f64 = 0.0;
    let mut outside = true;
    let mut no_better_grid = true;
    for _ in 0..100 {
        let w = Matrix::from_diagonal(&Vector::from_fn(2, |_, _| rng.random_range(0.0..2.0)));
        let cost = StageCost::new(w, Vector::from_vec(vec![3.0, 2.0]));
        let anchor = Vector::from_vec(vec![rng.random_range(0.5..2.0), rng.random_range(0.0..1.5)]);
        let rho = rng.random_range(1.0..30.0);
        let r = prox_obstacle(&cost, &anchor, rho, &rect)?;
        outside &= !rect.contains_strictly(&r);
        let ours = stage_objective(&cost, &anchor, rho, &r);
        let grid = grid_minimum(
            |x, y| stage_objective(&cost, &anchor, rho, &Vector::from_vec(vec![x, y])),
            |x, y| !rect.contains_strictly(&Vector::from_vec(vec![x, y])),
            [-1.0, -1.5],
            [4.0, 3.5],
        );
        no_better_grid &= ours <= grid + 1e-12;
        worst = worst.max((grid - ours) / (1.0 + ours.abs()));
    }
    Ok(Check::new(
        "obstacle-prox-grid",
        outside && no_better_grid && worst <= 1e-3,
        format!("100 anchors: outputs outside {outside}, grid never better {no_better_grid}, worst grid excess {worst:.2e}"),
    ))
}

/// The oracle-equivalence suite run by `layered-ocp verify`.
pub fn verify_suite() -> Result<Vec<Check>> {
    let mut checks = tracking_checks()?;
    checks.extend(linear_checks()?);
    checks.push(obstacle_check()?);
    Ok(checks)
}
