//! Dense stacked-KKT reference solver for equality-constrained quadratic
//! programs over whole trajectories.
//!
//! Used to cross-check the recursive solvers: it never touches Riccati
//! recursions or ADMM, only the full `(x, u)` stacking with dynamics as
//! equality constraints.

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// `min wᵀHw + 2gᵀw + c  s.t.  E w = f`.
#[derive(Debug, Clone)]
pub struct EqualityQp {
    pub hessian: Matrix,
    pub linear: Vector,
    pub constant: f64,
    pub constraints: Matrix,
    pub rhs: Vector,
}

impl EqualityQp {
    pub fn objective(&self, w: &Vector) -> f64 {
        (w.transpose() * &self.hessian * w)[0] + 2.0 * self.linear.dot(w) + self.constant
    }

    /// Solve the KKT system `[2H Eᵀ; E 0][w; λ] = [−2g; f]`.
    pub fn solve(&self) -> Result<Vector> {
        let nv = self.hessian.nrows();
        let nc = self.constraints.nrows();
        let mut kkt = Matrix::zeros(nv + nc, nv + nc);
        kkt.view_mut((0, 0), (nv, nv)).copy_from(&(&self.hessian * 2.0));
        kkt.view_mut((0, nv), (nv, nc))
            .copy_from(&self.constraints.transpose());
        kkt.view_mut((nv, 0), (nc, nv)).copy_from(&self.constraints);
        let mut rhs = Vector::zeros(nv + nc);
        rhs.rows_mut(0, nv).copy_from(&(&self.linear * -2.0));
        rhs.rows_mut(nv, nc).copy_from(&self.rhs);
        let sol = kkt
            .full_piv_lu()
            .solve(&rhs)
            .ok_or_else(|| Error::numerical("singular KKT system"))?;
        Ok(sol.rows(0, nv).into_owned())
    }
}

/// Solution of a stacked trajectory QP.
#[derive(Debug, Clone)]
pub struct StackedSolution {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub objective: f64,
}

/// Trajectory QP with linear dynamics, built term by term.
///
/// Variables are stacked `(x_0, …, x_N, u_0, …, u_{N-1})`.
#[derive(Debug, Clone)]
pub struct TrajectoryQp {
    n: usize,
    m: usize,
    horizon: usize,
    qp: EqualityQp,
}

impl TrajectoryQp {
    pub fn new(a: &[Matrix], b: &[Matrix], x0: &Vector) -> Result<Self> {
        let horizon = a.len();
        if b.len() != horizon {
            return Err(Error::invalid("A and B sequences differ in length"));
        }
        let n = x0.len();
        let m = b.first().map_or(0, |b| b.ncols());
        let nv = n * (horizon + 1) + m * horizon;
        let nc = n * (horizon + 1);
        let mut e = Matrix::zeros(nc, nv);
        let mut f = Vector::zeros(nc);
        e.view_mut((0, 0), (n, n)).fill_with_identity();
        f.rows_mut(0, n).copy_from(x0);
        for t in 0..horizon {
            let row = n * (t + 1);
            e.view_mut((row, n * (t + 1)), (n, n)).fill_with_identity();
            e.view_mut((row, n * t), (n, n)).copy_from(&(-&a[t]));
            let ucol = n * (horizon + 1) + m * t;
            e.view_mut((row, ucol), (n, m)).copy_from(&(-&b[t]));
        }
        Ok(Self {
            n,
            m,
            horizon,
            qp: EqualityQp {
                hessian: Matrix::zeros(nv, nv),
                linear: Vector::zeros(nv),
                constant: 0.0,
                constraints: e,
                rhs: f,
            },
        })
    }

    fn x_offset(&self, t: usize) -> usize {
        self.n * t
    }

    fn u_offset(&self, t: usize) -> usize {
        self.n * (self.horizon + 1) + self.m * t
    }

    /// Adds `(M x_t − y)ᵀ W (M x_t − y)`.
    pub fn add_state_term(&mut self, t: usize, map: &Matrix, target: &Vector, weight: &Matrix) {
        let off = self.x_offset(t);
        let n = self.n;
        let h = map.transpose() * weight * map;
        let g = -(map.transpose() * weight * target);
        let mut hv = self.qp.hessian.view_mut((off, off), (n, n));
        hv += h;
        let mut gv = self.qp.linear.rows_mut(off, n);
        gv += g;
        self.qp.constant += (target.transpose() * weight * target)[0];
    }

    /// Adds `cᵀ M x_t`.
    pub fn add_state_linear(&mut self, t: usize, map: &Matrix, c: &Vector) {
        let off = self.x_offset(t);
        let mut gv = self.qp.linear.rows_mut(off, self.n);
        gv += map.transpose() * c * 0.5;
    }

    /// Adds `(u_t − y)ᵀ W (u_t − y)`.
    pub fn add_input_term(&mut self, t: usize, target: &Vector, weight: &Matrix) {
        let off = self.u_offset(t);
        let m = self.m;
        let mut hv = self.qp.hessian.view_mut((off, off), (m, m));
        hv += weight;
        let mut gv = self.qp.linear.rows_mut(off, m);
        gv -= weight * target;
        self.qp.constant += (target.transpose() * weight * target)[0];
    }

    pub fn qp(&self) -> &EqualityQp {
        &self.qp
    }

    pub fn solve(&self) -> Result<StackedSolution> {
        let w = self.qp.solve()?;
        let states = (0..=self.horizon)
            .map(|t| w.rows(self.x_offset(t), self.n).into_owned())
            .collect();
        let inputs = (0..self.horizon)
            .map(|t| w.rows(self.u_offset(t), self.m).into_owned())
            .collect();
        Ok(StackedSolution {
            states,
            inputs,
            objective: self.qp.objective(&w),
        })
    }
}

/// Dense solve of the linear tracking subproblem.
pub fn tracking_oracle(prob: &crate::tracking_lqr::TrackingProblem) -> Result<StackedSolution> {
    prob.validate()?;
    let mut qp = TrajectoryQp::new(&prob.a, &prob.b, &prob.initial_state)?;
    let c = prob.output_matrix();
    let q = prob.output_dim();
    let m = prob.input_dim();
    let w = Matrix::identity(q, q) * (0.5 * prob.rho);
    for t in 0..=prob.horizon() {
        let target = &prob.reference[t] - &prob.dual[t];
        qp.add_state_term(t, &c, &target, &w);
    }
    for t in 0..prob.horizon() {
        qp.add_input_term(t, &Vector::zeros(m), &prob.input_weights[t]);
        if let Some(prox) = &prob.input_prox {
            let target = &prox.actions[t] - &prox.duals[t];
            qp.add_input_term(t, &target, &(Matrix::identity(m, m) * (0.5 * prob.rho)));
        }
    }
    qp.solve()
}
