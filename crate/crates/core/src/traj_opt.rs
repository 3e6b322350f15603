//! Trajectory-generation layer: the reference update.
//!
//! Each timestep solves
//!
//! ```text
//! min_r (r − s_t)ᵀ Q_t (r − s_t) + c_tᵀ r + (ρ/2)‖anchor_t − r‖²   s.t. r ∈ R_t
//! ```
//!
//! independently, since both the cost and the constraint sets are separable
//! in time. Boxes are solved in closed form (diagonal `Q`) or by a small
//! active-set method; rectangular obstacles by enumerating the four
//! half-spaces whose union is the obstacle's complement.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// `(r − target)ᵀ weight (r − target) + linearᵀ r`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCost {
    pub weight: Matrix,
    pub target: Vector,
    pub linear: Option<Vector>,
}

impl StageCost {
    pub fn new(weight: Matrix, target: Vector) -> Self {
        Self {
            weight,
            target,
            linear: None,
        }
    }

    pub fn eval(&self, r: &Vector) -> f64 {
        let d = r - &self.target;
        let mut v = (d.transpose() * &self.weight * &d)[0];
        if let Some(c) = &self.linear {
            v += c.dot(r);
        }
        v
    }

    fn is_diagonal(&self) -> bool {
        let w = &self.weight;
        (0..w.nrows()).all(|i| (0..w.ncols()).all(|j| i == j || w[(i, j)] == 0.0))
    }
}

/// Separable reference cost `C_x(r) = Σ_t stage_t(r_t)` over `t = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCost {
    pub stages: Vec<StageCost>,
}

impl ReferenceCost {
    /// `Σ_{t<N} ‖r_t − goal‖²_{w_stage} + ‖r_N − goal‖²_{w_terminal}`.
    pub fn goal_reaching(
        goal: &Vector,
        horizon: usize,
        stage_weight: Matrix,
        terminal_weight: Matrix,
    ) -> Self {
        let mut stages = vec![StageCost::new(stage_weight, goal.clone()); horizon];
        stages.push(StageCost::new(terminal_weight, goal.clone()));
        Self { stages }
    }

    /// `Σ_t ‖r_t − s_t‖²_{w}` with a shared weight.
    pub fn tracking(targets: &[Vector], weight: Matrix) -> Self {
        Self {
            stages: targets
                .iter()
                .map(|s| StageCost::new(weight.clone(), s.clone()))
                .collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.stages.len().saturating_sub(1)
    }

    pub fn dim(&self) -> usize {
        self.stages.first().map_or(0, |s| s.target.len())
    }

    pub fn eval(&self, r: &[Vector]) -> f64 {
        self.stages.iter().zip(r).map(|(s, r)| s.eval(r)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.dim();
        for (t, s) in self.stages.iter().enumerate() {
            if s.weight.shape() != (q, q) || s.target.len() != q {
                return Err(Error::invalid(format!("stage {t} has inconsistent dimensions")));
            }
            if s.linear.as_ref().is_some_and(|c| c.len() != q) {
                return Err(Error::invalid(format!("stage {t} linear term has wrong length")));
            }
            if (&s.weight - s.weight.transpose()).amax() > 1e-12 * (1.0 + s.weight.amax()) {
                return Err(Error::invalid(format!("stage {t} weight is not symmetric")));
            }
            let min = nalgebra::SymmetricEigen::new(s.weight.clone()).eigenvalues.min();
            if min < -1e-12 {
                return Err(Error::invalid(format!("stage {t} weight is not PSD")));
            }
        }
        Ok(())
    }
}

/// Coordinatewise bounds; `None` leaves a side open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

impl BoxBounds {
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![None; dim],
            upper: vec![None; dim],
        }
    }

    /// `lo ≤ r_i ≤ hi` on one coordinate, others free.
    pub fn on_coordinate(dim: usize, index: usize, lo: f64, hi: f64) -> Self {
        let mut b = Self::unbounded(dim);
        b.lower[index] = Some(lo);
        b.upper[index] = Some(hi);
        b
    }

    fn lo(&self, i: usize) -> f64 {
        self.lower[i].unwrap_or(f64::NEG_INFINITY)
    }

    fn hi(&self, i: usize) -> f64 {
        self.upper[i].unwrap_or(f64::INFINITY)
    }

    pub fn contains(&self, r: &Vector) -> bool {
        (0..r.len()).all(|i| r[i] >= self.lo(i) && r[i] <= self.hi(i))
    }

    pub fn clip(&self, r: &Vector) -> Vector {
        Vector::from_fn(r.len(), |i, _| r[i].max(self.lo(i)).min(self.hi(i)))
    }
}

/// Axis-aligned rectangle to be avoided on two coordinates of the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleRect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    /// Reference coordinates playing the roles of `x` and `y`.
    pub axes: (usize, usize),
}

impl ObstacleRect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::invalid("obstacle corners must satisfy min < max"));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
            axes: (0, 1),
        })
    }

    /// True when `r` lies strictly inside the rectangle.
    pub fn contains_strictly(&self, r: &Vector) -> bool {
        let (x, y) = (r[self.axes.0], r[self.axes.1]);
        x > self.x_min && x < self.x_max && y > self.y_min && y < self.y_max
    }

    /// The four half-spaces left, right, bottom, top, as one-sided boxes.
    fn half_spaces(&self, dim: usize) -> [BoxBounds; 4] {
        let (ix, iy) = self.axes;
        let mut left = BoxBounds::unbounded(dim);
        left.upper[ix] = Some(self.x_min);
        let mut right = BoxBounds::unbounded(dim);
        right.lower[ix] = Some(self.x_max);
        let mut bottom = BoxBounds::unbounded(dim);
        bottom.upper[iy] = Some(self.y_min);
        let mut top = BoxBounds::unbounded(dim);
        top.lower[iy] = Some(self.y_max);
        [left, right, bottom, top]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateConstraint {
    Unconstrained,
    Box(BoxBounds),
    Obstacle(ObstacleRect),
}

impl StateConstraint {
    pub fn is_satisfied(&self, r: &Vector) -> bool {
        match self {
            StateConstraint::Unconstrained => true,
            StateConstraint::Box(b) => b.contains(r),
            StateConstraint::Obstacle(o) => !o.contains_strictly(r),
        }
    }

    fn validate(&self, t: usize, dim: usize) -> Result<()> {
        match self {
            StateConstraint::Unconstrained => Ok(()),
            StateConstraint::Box(b) => {
                if b.lower.len() != dim || b.upper.len() != dim {
                    return Err(Error::invalid(format!("box at step {t} has wrong dimension")));
                }
                if let Some(i) = (0..dim).find(|&i| b.lo(i) > b.hi(i)) {
                    return Err(Error::Infeasible {
                        step: t,
                        reason: format!("empty box on coordinate {i}"),
                    });
                }
                Ok(())
            }
            StateConstraint::Obstacle(o) => {
                if o.axes.0 >= dim || o.axes.1 >= dim || o.axes.0 == o.axes.1 {
                    return Err(Error::invalid(format!("obstacle axes invalid at step {t}")));
                }
                if !(o.x_min < o.x_max && o.y_min < o.y_max) {
                    return Err(Error::invalid(format!("degenerate obstacle at step {t}")));
                }
                Ok(())
            }
        }
    }
}

/// Coordinatewise bounds on the redundant action variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub bounds: BoxBounds,
}

impl InputBox {
    /// `|a_i| ≤ b` on every coordinate.
    pub fn symmetric(dim: usize, bound: f64) -> Result<Self> {
        Self::symmetric_on(dim, &(0..dim).collect::<Vec<_>>(), bound)
    }

    /// `|a_i| ≤ b` on the listed coordinates only.
    pub fn symmetric_on(dim: usize, coords: &[usize], bound: f64) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(Error::invalid(format!("input bound must be positive, got {bound}")));
        }
        let mut bounds = BoxBounds::unbounded(dim);
        for &i in coords {
            if i >= dim {
                return Err(Error::invalid(format!("input coordinate {i} out of range")));
            }
            bounds.lower[i] = Some(-bound);
            bounds.upper[i] = Some(bound);
        }
        Ok(Self { bounds })
    }
}

/// Strictly convex box QP `min rᵀMr − 2hᵀr` s.t. `bounds`.
struct BoxQp<'a> {
    m: &'a Matrix,
    h: &'a Vector,
    /// Unconstrained minimizer when the weight is diagonal.
    diagonal: Option<Vector>,
}

impl BoxQp<'_> {
    fn gradient(&self, r: &Vector) -> Vector {
        (self.m * r - self.h) * 2.0
    }


    /// Primal active-set method. `M` must be positive definite.
    fn solve_active_set(&self, bounds: &BoxBounds) -> Result<Vector> {
        let dim = self.h.len();
        let unconstrained = Cholesky::new(self.m.clone())
            .ok_or_else(|| Error::numerical("reference-layer Hessian not positive definite"))?
            .solve(self.h);
        let mut r = bounds.clip(&unconstrained);
        // +1 upper, -1 lower, 0 free; start from the clipped coordinates
        let mut active: Vec<i8> = (0..dim)
            .map(|i| match r[i] {
                v if v == unconstrained[i] => 0,
                v if v == bounds.hi(i) => 1,
                _ => -1,
            })
            .collect();

        for _ in 0..(10 * dim + 50) {
            let free: Vec<usize> = (0..dim).filter(|&i| active[i] == 0).collect();
            let mut target = r.clone();
            if !free.is_empty() {
                let k = free.len();
                let mff = Matrix::from_fn(k, k, |a, b| self.m[(free[a], free[b])]);
                let rhs = Vector::from_fn(k, |a, _| {
                    let i = free[a];
                    let mut v = self.h[i];
                    for j in 0..dim {
                        if active[j] != 0 {
                            v -= self.m[(i, j)] * r[j];
                        }
                    }
                    v
                });
                let sol = Cholesky::new(mff)
                    .ok_or_else(|| Error::numerical("singular reduced Hessian"))?
                    .solve(&rhs);
                for (a, &i) in free.iter().enumerate() {
                    target[i] = sol[a];
                }
            }
            let step = &target - &r;
            if step.amax() <= 1e-14 * (1.0 + r.amax()) {
                let g = self.gradient(&r);
                // multiplier sign: at an upper bound we need g ≤ 0, lower g ≥ 0
                let worst = (0..dim)
                    .filter(|&i| active[i] != 0)
                    .map(|i| (i, f64::from(active[i]) * g[i]))
                    .filter(|&(_, v)| v > 1e-12)
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                match worst {
                    Some((i, _)) => active[i] = 0,
                    None => return Ok(r),
                }
                continue;
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for &i in &free {
                let (lo, hi) = (bounds.lo(i), bounds.hi(i));
                if step[i] > 0.0 && target[i] > hi {
                    let a = (hi - r[i]) / step[i];
                    if a < alpha {
                        alpha = a;
                        blocking = Some((i, 1));
                    }
                } else if step[i] < 0.0 && target[i] < lo {
                    let a = (lo - r[i]) / step[i];
                    if a < alpha {
                        alpha = a;
                        blocking = Some((i, -1));
                    }
                }
            }
            r += step * alpha;
            if let Some((i, side)) = blocking {
                r[i] = if side > 0 { bounds.hi(i) } else { bounds.lo(i) };
                active[i] = side;
            }
        }
        Err(Error::numerical("box QP active-set iteration limit"))
    }

    fn solve(&self, bounds: &BoxBounds) -> Result<Vector> {
        match &self.diagonal {
            Some(r) => Ok(bounds.clip(r)),
            None => self.solve_active_set(bounds),
        }
    }
}

/// `(M, h)` with `M = Q + (ρ/2)I`, `h = Q s − c/2 + (ρ/2) anchor`.
fn stage_qp(cost: &StageCost, anchor: &Vector, rho: f64) -> (Matrix, Vector) {
    let q = anchor.len();
    let m = &cost.weight + Matrix::identity(q, q) * (0.5 * rho);
    let mut h = &cost.weight * &cost.target + anchor * (0.5 * rho);
    if let Some(c) = &cost.linear {
        h -= c * 0.5;
    }
    (m, h)
}

/// Unconstrained minimizer for diagonal weights, written as the anchor plus a
/// correction so that `Q = 0` returns the anchor exactly.
fn diagonal_minimizer(cost: &StageCost, anchor: &Vector, rho: f64) -> Option<Vector> {
    if !cost.is_diagonal() {
        return None;
    }
    Some(Vector::from_fn(anchor.len(), |i, _| {
        let w = cost.weight[(i, i)];
        let c = cost.linear.as_ref().map_or(0.0, |c| c[i]);
        anchor[i] + (w * (cost.target[i] - anchor[i]) - 0.5 * c) / (w + 0.5 * rho)
    }))
}

/// Per-timestep objective including the proximal term.
pub fn stage_objective(cost: &StageCost, anchor: &Vector, rho: f64, r: &Vector) -> f64 {
    cost.eval(r) + 0.5 * rho * (anchor - r).norm_squared()
}

/// Exact minimizer of one stage under a box (or no) constraint.
pub fn prox_box(
    cost: &StageCost,
    anchor: &Vector,
    rho: f64,
    bounds: Option<&BoxBounds>,
) -> Result<Vector> {
    let (m, h) = stage_qp(cost, anchor, rho);
    let qp = BoxQp {
        m: &m,
        h: &h,
        diagonal: diagonal_minimizer(cost, anchor, rho),
    };
    match (bounds, &qp.diagonal) {
        (Some(b), _) => qp.solve(b),
        (None, Some(r)) => Ok(r.clone()),
        (None, None) => Cholesky::new(m.clone())
            .map(|c| c.solve(&h))
            .ok_or_else(|| Error::numerical("reference-layer Hessian not positive definite")),
    }
}

/// Global minimizer of one stage outside the open rectangle.
///
/// Candidates are tried in the order left, right, bottom, top; a later one
/// only wins with a strictly smaller objective.
pub fn prox_obstacle(
    cost: &StageCost,
    anchor: &Vector,
    rho: f64,
    rect: &ObstacleRect,
) -> Result<Vector> {
    let (m, h) = stage_qp(cost, anchor, rho);
    let qp = BoxQp {
        m: &m,
        h: &h,
        diagonal: diagonal_minimizer(cost, anchor, rho),
    };
    let mut best: Option<(f64, Vector)> = None;
    for half in rect.half_spaces(anchor.len()) {
        let r = qp.solve(&half)?;
        let val = stage_objective(cost, anchor, rho, &r);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, r));
        }
    }
    Ok(best.expect("four candidates").1)
}

/// Reference update for the whole horizon.
pub fn prox_reference(
    cost: &ReferenceCost,
    anchor: &[Vector],
    rho: f64,
    constraints: &[StateConstraint],
) -> Result<Vec<Vector>> {
    if !(rho > 0.0) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    let len = cost.stages.len();
    if anchor.len() != len || constraints.len() != len {
        return Err(Error::invalid(format!(
            "cost has {len} stages, anchor {} and constraints {}",
            anchor.len(),
            constraints.len()
        )));
    }
    let dim = cost.dim();
    cost.stages
        .iter()
        .zip(anchor)
        .zip(constraints)
        .enumerate()
        .map(|(t, ((stage, a), cons))| {
            if a.len() != dim {
                return Err(Error::invalid(format!("anchor {t} has wrong dimension")));
            }
            cons.validate(t, dim)?;
            match cons {
                StateConstraint::Unconstrained => prox_box(stage, a, rho, None),
                StateConstraint::Box(b) => prox_box(stage, a, rho, Some(b)),
                StateConstraint::Obstacle(o) => prox_obstacle(stage, a, rho, o),
            }
        })
        .collect()
}

/// Action update: projection of `u_t + v_{a,t}` onto the input box.
pub fn prox_input(u_plus_dual: &[Vector], bounds: &InputBox) -> Vec<Vector> {
    u_plus_dual.iter().map(|w| bounds.bounds.clip(w)).collect()
}

/// KKT stationarity residual of a box-constrained stage solution.
pub fn box_kkt_residual(
    cost: &StageCost,
    anchor: &Vector,
    rho: f64,
    bounds: &BoxBounds,
    r: &Vector,
) -> f64 {
    let (m, h) = stage_qp(cost, anchor, rho);
    let g = (&m * r - &h) * 2.0;
    (0..r.len())
        .map(|i| {
            let at_hi = r[i] >= bounds.hi(i);
            let at_lo = r[i] <= bounds.lo(i);
            if at_hi && at_lo {
                0.0
            } else if at_hi {
                g[i].max(0.0)
            } else if at_lo {
                (-g[i]).max(0.0)
            } else {
                g[i].abs()
            }
        })
        .fold(0.0, f64::max)
}
