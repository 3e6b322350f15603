mod common;

use common::{grid_minimum, random_spd, random_vector};
use layered_ocp::oracle::EqualityQp;
use layered_ocp::traj_opt::{
    box_kkt_residual, prox_box, prox_input, prox_obstacle, prox_reference, stage_objective,
    BoxBounds, InputBox, ObstacleRect, ReferenceCost, StageCost, StateConstraint,
};
use layered_ocp::{Matrix, Vector};
use nalgebra::dvector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_diag(rng: &mut ChaCha8Rng, dim: usize) -> Matrix {
    Matrix::from_diagonal(&Vector::from_fn(dim, |_, _| rng.random_range(0.0..2.0)))
}

#[test]
fn diagonal_box_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let cost = StageCost::new(random_diag(&mut rng, 2), random_vector(&mut rng, 2, 1.5));
        let anchor = random_vector(&mut rng, 2, 1.5);
        let rho = rng.random_range(0.5..5.0);
        let b = BoxBounds {
            lower: vec![Some(rng.random_range(-1.0..0.0)), Some(rng.random_range(-1.0..0.0))],
            upper: vec![Some(rng.random_range(0.0..1.0)), Some(rng.random_range(0.0..1.0))],
        };
        let r = prox_box(&cost, &anchor, rho, Some(&b)).unwrap();
        assert!(b.contains(&r));
        let ours = stage_objective(&cost, &anchor, rho, &r);
        let (grid, _) = grid_minimum(
            |x, y| stage_objective(&cost, &anchor, rho, &dvector![x, y]),
            |x, y| b.contains(&dvector![x, y]),
            [b.lower[0].unwrap(), b.lower[1].unwrap()],
            [b.upper[0].unwrap(), b.upper[1].unwrap()],
            1e-3,
        );
        assert!(ours <= grid + 1e-12, "{ours} > {grid}");
        assert!(grid - ours < 5e-3 * (1.0 + ours.abs()), "grid {grid} vs {ours}");
    }
}

#[test]
fn obstacle_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rect = ObstacleRect::new(1.0, 0.5, 1.5, 1.0).unwrap();
    for _ in 0..30 {
        let cost = StageCost::new(random_diag(&mut rng, 2), dvector![3.0, 2.0]);
        let anchor = dvector![rng.random_range(0.5..2.0), rng.random_range(0.0..1.5)];
        let rho = rng.random_range(1.0..30.0);
        let r = prox_obstacle(&cost, &anchor, rho, &rect).unwrap();
        assert!(!rect.contains_strictly(&r));
        let ours = stage_objective(&cost, &anchor, rho, &r);
        let (grid, _) = grid_minimum(
            |x, y| stage_objective(&cost, &anchor, rho, &dvector![x, y]),
            |x, y| !rect.contains_strictly(&dvector![x, y]),
            [-1.0, -1.5],
            [4.0, 3.5],
            1e-3,
        );
        assert!(ours <= grid + 1e-12);
        assert!(grid - ours < 1e-3 * (1.0 + ours.abs()), "grid {grid} vs {ours}");
    }
}

#[test]
fn obstacle_beats_every_half_space_candidate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rect = ObstacleRect::new(-0.5, -0.5, 0.5, 0.5).unwrap();
    for _ in 0..50 {
        let cost = StageCost::new(random_spd(&mut rng, 2), random_vector(&mut rng, 2, 1.0));
        let anchor = random_vector(&mut rng, 2, 1.0);
        let r = prox_obstacle(&cost, &anchor, 2.0, &rect).unwrap();
        let best = stage_objective(&cost, &anchor, 2.0, &r);
        let halves = [
            BoxBounds { lower: vec![None, None], upper: vec![Some(-0.5), None] },
            BoxBounds { lower: vec![Some(0.5), None], upper: vec![None, None] },
            BoxBounds { lower: vec![None, None], upper: vec![None, Some(-0.5)] },
            BoxBounds { lower: vec![None, Some(0.5)], upper: vec![None, None] },
        ];
        for h in &halves {
            let cand = prox_box(&cost, &anchor, 2.0, Some(h)).unwrap();
            assert!(best <= stage_objective(&cost, &anchor, 2.0, &cand) + 1e-12);
        }
        assert!(!rect.contains_strictly(&r));
    }
}

#[test]
fn active_set_solutions_are_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for dim in 2..=6 {
        for _ in 0..10 {
            let cost = StageCost::new(random_spd(&mut rng, dim), random_vector(&mut rng, dim, 2.0));
            let anchor = random_vector(&mut rng, dim, 2.0);
            let b = BoxBounds {
                lower: (0..dim).map(|_| Some(rng.random_range(-1.0..-0.1))).collect(),
                upper: (0..dim).map(|_| Some(rng.random_range(0.1..1.0))).collect(),
            };
            let r = prox_box(&cost, &anchor, 1.5, Some(&b)).unwrap();
            assert!(b.contains(&r));
            assert!(box_kkt_residual(&cost, &anchor, 1.5, &b, &r) <= 1e-8);
        }
    }
}

#[test]
fn per_step_solutions_match_stacked_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let horizon = 6;
    let dim = 3;
    let rho = 2.5;
    let cost = ReferenceCost {
        stages: (0..=horizon)
            .map(|_| {
                let mut s = StageCost::new(random_spd(&mut rng, dim), random_vector(&mut rng, dim, 1.0));
                s.linear = Some(random_vector(&mut rng, dim, 0.5));
                s
            })
            .collect(),
    };
    let anchor: Vec<Vector> = (0..=horizon).map(|_| random_vector(&mut rng, dim, 1.0)).collect();
    let cons = vec![StateConstraint::Unconstrained; horizon + 1];
    let r = prox_reference(&cost, &anchor, rho, &cons).unwrap();

    // Stacked objective Σ_t [rᵀ(Q+ρ/2)r − 2(Qs − c/2 + ρ/2 a)ᵀr] with no constraints.
    let nv = dim * (horizon + 1);
    let mut h = Matrix::zeros(nv, nv);
    let mut g = Vector::zeros(nv);
    for (t, s) in cost.stages.iter().enumerate() {
        let mut hv = h.view_mut((t * dim, t * dim), (dim, dim));
        hv += &s.weight + Matrix::identity(dim, dim) * (0.5 * rho);
        let lin = &s.weight * &s.target - s.linear.as_ref().unwrap() * 0.5 + &anchor[t] * (0.5 * rho);
        g.rows_mut(t * dim, dim).copy_from(&(-lin));
    }
    let qp = EqualityQp {
        hessian: h,
        linear: g,
        constant: 0.0,
        constraints: Matrix::zeros(0, nv),
        rhs: Vector::zeros(0),
    };
    let w = qp.solve().unwrap();
    for t in 0..=horizon {
        assert!((&r[t] - w.rows(t * dim, dim)).amax() < 1e-8);
    }
}

#[test]
fn corridor_style_schedule_is_respected() {
    let goal = dvector![3.0, 2.0];
    let horizon = 10;
    let cost = ReferenceCost::goal_reaching(
        &goal,
        horizon,
        Matrix::identity(2, 2) * 0.1,
        Matrix::identity(2, 2) * 1000.0,
    );
    let cons: Vec<StateConstraint> = (0..=horizon)
        .map(|t| {
            if t <= horizon / 2 {
                StateConstraint::Box(BoxBounds::on_coordinate(2, 0, 0.0, 1.0))
            } else {
                StateConstraint::Box(BoxBounds::on_coordinate(2, 1, 1.5, 2.5))
            }
        })
        .collect();
    let anchor: Vec<Vector> = (0..=horizon).map(|t| dvector![t as f64 * 0.4 - 1.0, 0.1 * t as f64]).collect();
    let r = prox_reference(&cost, &anchor, 25.0, &cons).unwrap();
    for (t, (rt, c)) in r.iter().zip(&cons).enumerate() {
        assert!(c.is_satisfied(rt), "step {t}: {rt}");
    }
}

proptest! {
    #[test]
    fn projection_is_nonexpansive(
        a1 in prop::collection::vec(-3.0f64..3.0, 2),
        a2 in prop::collection::vec(-3.0f64..3.0, 2),
        lo in -1.0f64..0.0,
        hi in 0.0f64..1.0,
    ) {
        let cost = StageCost::new(Matrix::zeros(2, 2), dvector![0.0, 0.0]);
        let b = BoxBounds { lower: vec![Some(lo), Some(lo)], upper: vec![Some(hi), Some(hi)] };
        let a1 = Vector::from_vec(a1);
        let a2 = Vector::from_vec(a2);
        let r1 = prox_box(&cost, &a1, 1.0, Some(&b)).unwrap();
        let r2 = prox_box(&cost, &a2, 1.0, Some(&b)).unwrap();
        prop_assert!((&r1 - &r2).norm() <= (&a1 - &a2).norm() + 1e-12);
    }

    #[test]
    fn obstacle_output_is_never_inside(
        ax in -1.0f64..3.0,
        ay in -1.0f64..3.0,
        w in 0.0f64..5.0,
        rho in 0.1f64..50.0,
    ) {
        let rect = ObstacleRect::new(1.0, 0.5, 1.5, 1.0).unwrap();
        let cost = StageCost::new(Matrix::identity(2, 2) * w, dvector![1.2, 0.7]);
        let r = prox_obstacle(&cost, &dvector![ax, ay], rho, &rect).unwrap();
        prop_assert!(!rect.contains_strictly(&r));
    }

    #[test]
    fn input_projection_matches_scalar_grid(w in -20.0f64..20.0, bound in 0.5f64..10.0) {
        let b = InputBox::symmetric(1, bound).unwrap();
        let a = prox_input(&[dvector![w]], &b)[0][0];
        prop_assert!(a.abs() <= bound);
        // brute force over [-bound, bound] at 1e-3 resolution
        let steps = (2.0 * bound / 1e-3) as usize;
        let best = (0..=steps)
            .map(|i| -bound + i as f64 * 1e-3)
            .min_by(|x, y| (x - w).abs().total_cmp(&(y - w).abs()))
            .unwrap();
        prop_assert!((a - best).abs() <= 1e-3);
    }
}
