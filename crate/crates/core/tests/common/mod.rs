#![allow(dead_code)]

use std::sync::Arc;

use layered_ocp::admm::LayeredProblem;
use layered_ocp::dynamics::LinearModel;
use layered_ocp::traj_opt::{ReferenceCost, StageCost, StateConstraint};
use layered_ocp::{Matrix, Vector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

pub fn random_spd(rng: &mut ChaCha8Rng, m: usize) -> Matrix {
    let l = random_matrix(rng, m, m, 1.0);
    &l * l.transpose() + Matrix::identity(m, m) * 0.1
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// Brute-force minimum of `f` over `feasible` points of a 2-D grid.
///
/// A coarse pass (step 2e-2) over `[lo, hi]` locates the basin, then a fine
/// pass at `step` resolution covers a neighborhood of the best coarse point.
pub fn grid_minimum<F, G>(f: F, feasible: G, lo: [f64; 2], hi: [f64; 2], step: f64) -> (f64, [f64; 2])
where
    F: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> bool,
{
    let scan = |lo: [f64; 2], hi: [f64; 2], h: f64| {
        let nx = ((hi[0] - lo[0]) / h).ceil() as usize;
        let ny = ((hi[1] - lo[1]) / h).ceil() as usize;
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for i in 0..=nx {
            let x = lo[0] + i as f64 * h;
            for j in 0..=ny {
                let y = lo[1] + j as f64 * h;
                if !feasible(x, y) {
                    continue;
                }
                let v = f(x, y);
                if v < best.0 {
                    best = (v, [x, y]);
                }
            }
        }
        best
    };
    let coarse = scan(lo, hi, 2e-2);
    let c = coarse.1;
    let fine = scan([c[0] - 0.05, c[1] - 0.05], [c[0] + 0.05, c[1] + 0.05], step);
    if fine.0 < coarse.0 { fine } else { coarse }
}

/// Random stable-ish LTI tracking instance with diagonal state weights.
pub fn random_convex(rng: &mut ChaCha8Rng) -> LayeredProblem {
    let n = rng.random_range(2..=3);
    let m = rng.random_range(1..=2);
    let horizon = rng.random_range(5..=15);
    let a = Matrix::identity(n, n) + random_matrix(rng, n, n, 0.2);
    let b = random_matrix(rng, n, m, 1.0);
    let stages = (0..=horizon)
        .map(|_| {
            let w = Matrix::from_diagonal(&Vector::from_fn(n, |_, _| rng.random_range(0.5..2.0)));
            StageCost::new(w, random_vector(rng, n, 2.0))
        })
        .collect();
    LayeredProblem {
        model: Arc::new(LinearModel::time_invariant(a, b).unwrap()),
        cost: ReferenceCost { stages },
        input_weights: vec![Matrix::identity(m, m) * rng.random_range(0.01..1.0); horizon],
        constraints: vec![StateConstraint::Unconstrained; horizon + 1],
        input_box: None,
        initial_state: random_vector(rng, n, 1.0),
        output: None,
        noise: None,
    }
}
