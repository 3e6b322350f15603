//! Exact solution of the linear feedback-control layer.
//!
//! The tracking problem
//!
//! ```text
//! min  Σ_{t=0}^{N} (ρ/2)‖C x_t − r_t + v_t‖² + Σ_{t=0}^{N-1} u_tᵀ R_t u_t [+ (ρ/2)‖u_t − a_t + v_{a,t}‖²]
//! s.t. x_{t+1} = A_t x_t + B_t u_t,  x_0 = ξ
//! ```
//!
//! is lifted onto the augmented state `z_t = (e_t, μ_t)` where
//! `e_t = x_t − L r_t` (`L` a right inverse of `C`) and `μ_t` is the
//! reference tail `(r_t, …, r_N, 0, …, 0)`. The lifted problem is a plain LQR
//! with affine terms, solved by a backward Riccati recursion. The resulting law
//! `u_t = −K_t z_t − ν_t` splits into a feedback gain on `e_t`, a feedforward
//! gain on `μ_t` and the dual-driven offset `ν_t`.
//!
//! Value functions carry the constant terms of the squared norms, so
//! `V_0(z_0)` is the objective above, not merely a shifted version of it.

use nalgebra::{Cholesky, SymmetricEigen};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Stage-input proximal data `(a_t, v_{a,t})` from the redundant action variable.
#[derive(Debug, Clone)]
pub struct InputProx {
    pub actions: Vec<Vector>,
    pub duals: Vec<Vector>,
}

#[derive(Debug, Clone)]
pub struct TrackingProblem {
    pub a: Vec<Matrix>,
    pub b: Vec<Matrix>,
    pub input_weights: Vec<Matrix>,
    /// `r_0..r_N`.
    pub reference: Vec<Vector>,
    /// Scaled duals `v_0..v_N`.
    pub dual: Vec<Vector>,
    pub rho: f64,
    pub initial_state: Vector,
    /// Output selector `C` (`q × n`). `None` means `C = I`.
    pub output: Option<Matrix>,
    pub input_prox: Option<InputProx>,
}

impl TrackingProblem {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn state_dim(&self) -> usize {
        self.initial_state.len()
    }

    pub fn input_dim(&self) -> usize {
        self.b.first().map_or(0, |b| b.ncols())
    }

    pub fn output_dim(&self) -> usize {
        self.output.as_ref().map_or(self.state_dim(), |c| c.nrows())
    }

    pub fn output_matrix(&self) -> Matrix {
        self.output
            .clone()
            .unwrap_or_else(|| Matrix::identity(self.state_dim(), self.state_dim()))
    }

    pub fn validate(&self) -> Result<()> {
        let horizon = self.horizon();
        let n = self.state_dim();
        let m = self.input_dim();
        let q = self.output_dim();
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if self.b.len() != horizon || self.input_weights.len() != horizon {
            return Err(Error::invalid("A, B and R sequences must have length N"));
        }
        for t in 0..horizon {
            if self.a[t].shape() != (n, n) || self.b[t].shape() != (n, m) {
                return Err(Error::invalid(format!("A_{t}/B_{t} have wrong shape")));
            }
            check_positive_definite(&self.input_weights[t], m)
                .map_err(|e| Error::invalid(format!("R_{t}: {e}")))?;
        }
        if self.reference.len() != horizon + 1 || self.dual.len() != horizon + 1 {
            return Err(Error::invalid("reference and dual must have length N + 1"));
        }
        if self
            .reference
            .iter()
            .chain(&self.dual)
            .any(|v| v.len() != q)
        {
            return Err(Error::invalid(format!(
                "reference and dual entries must have dimension {q}"
            )));
        }
        if let Some(c) = &self.output {
            if c.ncols() != n || c.nrows() > n {
                return Err(Error::invalid(format!(
                    "output selector is {:?}, expected q × {n} with q ≤ {n}",
                    c.shape()
                )));
            }
        }
        if let Some(prox) = &self.input_prox {
            if prox.actions.len() != horizon || prox.duals.len() != horizon {
                return Err(Error::invalid("input prox data must have length N"));
            }
            if prox.actions.iter().chain(&prox.duals).any(|v| v.len() != m) {
                return Err(Error::invalid("input prox entries must have input dimension"));
            }
        }
        Ok(())
    }
}

fn check_positive_definite(m: &Matrix, dim: usize) -> std::result::Result<(), String> {
    if m.shape() != (dim, dim) {
        return Err(format!("shape {:?}, expected ({dim}, {dim})", m.shape()));
    }
    if (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
        return Err("not symmetric".into());
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    if eig.iter().any(|&l| l <= 0.0) {
        return Err(format!("not positive definite (min eigenvalue {})", eig.min()));
    }
    Ok(())
}

/// Right inverse `L = Cᵀ(CCᵀ)⁻¹`, so that `C L = I`.
fn right_inverse(c: &Matrix) -> Result<Matrix> {
    let cct = c * c.transpose();
    let chol = Cholesky::new(cct)
        .ok_or_else(|| Error::invalid("output selector must have full row rank"))?;
    Ok(c.transpose() * chol.inverse())
}

/// LQR data on the lifted state `z_t = (e_t, μ_t)`.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    pub state_dim: usize,
    pub output_dim: usize,
    pub a_bar: Vec<Matrix>,
    pub b_bar: Vec<Matrix>,
    /// `Q̄ = (ρ/2) Fᵀ CᵀC F`, shared by every stage.
    pub q_bar: Matrix,
    /// `q_t = (ρ/2) Fᵀ Cᵀ v_t` for `t = 0..=N`.
    pub q_lin: Vec<Vector>,
    /// Stage-constant terms so values equal the un-expanded squared norms.
    pub q_const: Vec<f64>,
    /// Effective input weights `R_t` (plus `(ρ/2)I` with input prox).
    pub input_weights: Vec<Matrix>,
    /// Linear input terms `s_t`, cost `2 s_tᵀ u_t`.
    pub input_lin: Vec<Vector>,
    /// Selects `e` from `z`.
    pub f: Matrix,
    /// Selects `μ` from `z`.
    pub g: Matrix,
    /// Maps a reference point into state space (`C L = I`).
    pub lift: Matrix,
    pub z0: Vector,
}

impl AugmentedSystem {
    pub fn dim(&self) -> usize {
        self.f.ncols()
    }

    pub fn horizon(&self) -> usize {
        self.a_bar.len()
    }

    /// `z_t` for a state `x_t` against the reference sequence.
    pub fn lift_state(&self, t: usize, x: &Vector, reference: &[Vector]) -> Vector {
        let n = self.state_dim;
        let q = self.output_dim;
        let mut z = Vector::zeros(self.dim());
        let e = x - &self.lift * &reference[t];
        z.rows_mut(0, n).copy_from(&e);
        for (i, r) in reference[t..].iter().enumerate() {
            z.rows_mut(n + i * q, q).copy_from(r);
        }
        z
    }
}

pub fn build_augmented(prob: &TrackingProblem) -> Result<AugmentedSystem> {
    prob.validate()?;
    let horizon = prob.horizon();
    let n = prob.state_dim();
    let m = prob.input_dim();
    let q = prob.output_dim();
    let mu_dim = q * (horizon + 1);
    let dim = n + mu_dim;
    let c = prob.output_matrix();
    let lift = match &prob.output {
        Some(c) => right_inverse(c)?,
        None => Matrix::identity(n, n),
    };

    let mut f = Matrix::zeros(n, dim);
    f.view_mut((0, 0), (n, n)).fill_with_identity();
    let mut g = Matrix::zeros(mu_dim, dim);
    g.view_mut((0, n), (mu_dim, mu_dim)).fill_with_identity();

    // μ_{t+1} = μ_t shifted left by one block, zero filled.
    let mut shift = Matrix::zeros(mu_dim, mu_dim);
    if horizon > 0 {
        shift
            .view_mut((0, q), (mu_dim - q, mu_dim - q))
            .fill_with_identity();
    }

    let mut a_bar = Vec::with_capacity(horizon);
    let mut b_bar = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let at = &prob.a[t];
        let mut abar = Matrix::zeros(dim, dim);
        abar.view_mut((0, 0), (n, n)).copy_from(at);
        // e_{t+1} picks up A_t L r_t − L r_{t+1}
        abar.view_mut((0, n), (n, q)).copy_from(&(at * &lift));
        abar.view_mut((0, n + q), (n, q)).copy_from(&(-&lift));
        abar.view_mut((n, n), (mu_dim, mu_dim)).copy_from(&shift);
        a_bar.push(abar);

        let mut bbar = Matrix::zeros(dim, m);
        bbar.view_mut((0, 0), (n, m)).copy_from(&prob.b[t]);
        b_bar.push(bbar);
    }

    let half_rho = 0.5 * prob.rho;
    let cf = &c * &f;
    let q_bar = cf.transpose() * &cf * half_rho;
    let q_lin = prob
        .dual
        .iter()
        .map(|v| cf.transpose() * v * half_rho)
        .collect();
    let mut q_const: Vec<f64> = prob
        .dual
        .iter()
        .map(|v| half_rho * v.norm_squared())
        .collect();

    let mut input_weights = prob.input_weights.clone();
    let mut input_lin = vec![Vector::zeros(m); horizon];
    if let Some(prox) = &prob.input_prox {
        for t in 0..horizon {
            let shift = &prox.duals[t] - &prox.actions[t];
            input_weights[t] += Matrix::identity(m, m) * half_rho;
            input_lin[t] = &shift * half_rho;
            q_const[t] += half_rho * shift.norm_squared();
        }
    }

    let mut aug = AugmentedSystem {
        state_dim: n,
        output_dim: q,
        a_bar,
        b_bar,
        q_bar,
        q_lin,
        q_const,
        input_weights,
        input_lin,
        f,
        g,
        lift,
        z0: Vector::zeros(dim),
    };
    aug.z0 = aug.lift_state(0, &prob.initial_state, &prob.reference);
    Ok(aug)
}

/// Value functions `V_t(z) = zᵀP_t z + 2p_tᵀz + c_t` and the optimal law
/// `u_t = −K_t z_t − ν_t`.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p_mat: Vec<Matrix>,
    pub p_vec: Vec<Vector>,
    pub c: Vec<f64>,
    pub gains: Vec<Matrix>,
    pub offsets: Vec<Vector>,
    /// `K^fb_t = K_t Fᵀ`, acting on `e_t`.
    pub feedback_gains: Vec<Matrix>,
    /// `K^ff_t = K_t Gᵀ`, acting on `μ_t`.
    pub feedforward_gains: Vec<Matrix>,
}

impl RiccatiSolution {
    pub fn value(&self, t: usize, z: &Vector) -> f64 {
        (z.transpose() * &self.p_mat[t] * z)[0] + 2.0 * self.p_vec[t].dot(z) + self.c[t]
    }

    pub fn control(&self, t: usize, z: &Vector) -> Vector {
        -(&self.gains[t] * z) - &self.offsets[t]
    }

    /// Same law evaluated through the feedback/feedforward split.
    pub fn control_decomposed(&self, t: usize, e: &Vector, mu: &Vector) -> Vector {
        -(&self.feedback_gains[t] * e) - &self.feedforward_gains[t] * mu - &self.offsets[t]
    }
}

pub fn solve_riccati(aug: &AugmentedSystem) -> Result<RiccatiSolution> {
    let horizon = aug.horizon();
    let mut p_mat = vec![Matrix::zeros(0, 0); horizon + 1];
    let mut p_vec = vec![Vector::zeros(0); horizon + 1];
    let mut c = vec![0.0; horizon + 1];
    let mut gains = vec![Matrix::zeros(0, 0); horizon];
    let mut offsets = vec![Vector::zeros(0); horizon];

    p_mat[horizon] = aug.q_bar.clone();
    p_vec[horizon] = aug.q_lin[horizon].clone();
    c[horizon] = aug.q_const[horizon];

    for t in (0..horizon).rev() {
        let a = &aug.a_bar[t];
        let b = &aug.b_bar[t];
        let p_next = &p_mat[t + 1];
        let pb = p_next * b;
        let h = &aug.input_weights[t] + b.transpose() * &pb;
        let chol = Cholesky::new(h).ok_or_else(|| {
            Error::numerical(format!("R + BᵀPB is not positive definite at step {t}"))
        })?;
        let btpa = pb.transpose() * a;
        let g = b.transpose() * &p_vec[t + 1] + &aug.input_lin[t];
        let k = chol.solve(&btpa);
        let nu = chol.solve(&g);

        let mut p = &aug.q_bar + a.transpose() * p_next * a - btpa.transpose() * &k;
        p = (&p + p.transpose()) * 0.5;
        let closed = a - b * &k;
        let pv = &aug.q_lin[t] + closed.transpose() * &p_vec[t + 1] - k.transpose() * &aug.input_lin[t];

        p_mat[t] = p;
        p_vec[t] = pv;
        c[t] = aug.q_const[t] + c[t + 1] - g.dot(&nu);
        gains[t] = k;
        offsets[t] = nu;
    }

    let (feedback_gains, feedforward_gains) = decompose_gains(&gains, &aug.f, &aug.g)?;
    Ok(RiccatiSolution {
        p_mat,
        p_vec,
        c,
        gains,
        offsets,
        feedback_gains,
        feedforward_gains,
    })
}

/// `K^fb_t = K_t Fᵀ`, `K^ff_t = K_t Gᵀ`.
pub fn decompose_gains(
    gains: &[Matrix],
    f: &Matrix,
    g: &Matrix,
) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    let mut fb = Vec::with_capacity(gains.len());
    let mut ff = Vec::with_capacity(gains.len());
    for (t, k) in gains.iter().enumerate() {
        if k.ncols() != f.ncols() || k.ncols() != g.ncols() {
            return Err(Error::invalid(format!(
                "gain {t} has {} columns, selectors have {} and {}",
                k.ncols(),
                f.ncols(),
                g.ncols()
            )));
        }
        fb.push(k * f.transpose());
        ff.push(k * g.transpose());
    }
    Ok((fb, ff))
}

#[derive(Debug, Clone)]
pub struct TrackingSolution {
    pub trajectory: crate::dynamics::Trajectory,
    pub riccati: RiccatiSolution,
    pub augmented: AugmentedSystem,
}

impl TrackingSolution {
    /// `V_0(z_0)`, the optimal objective predicted by the recursion.
    pub fn predicted_objective(&self) -> f64 {
        self.riccati.value(0, &self.augmented.z0)
    }
}

/// Solve the tracking problem exactly and simulate the optimal closed loop.
pub fn solve_tracking(prob: &TrackingProblem) -> Result<TrackingSolution> {
    let aug = build_augmented(prob)?;
    let riccati = solve_riccati(&aug)?;
    let horizon = prob.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    states.push(prob.initial_state.clone());
    for t in 0..horizon {
        let z = aug.lift_state(t, &states[t], &prob.reference);
        let u = riccati.control(t, &z);
        let next = &prob.a[t] * &states[t] + &prob.b[t] * &u;
        if crate::dynamics::diverged(&next) {
            return Err(Error::Divergence { step: t + 1 });
        }
        inputs.push(u);
        states.push(next);
    }
    Ok(TrackingSolution {
        trajectory: crate::dynamics::Trajectory { states, inputs },
        riccati,
        augmented: aug,
    })
}

/// Realized tracking objective of a trajectory.
pub fn tracking_objective(prob: &TrackingProblem, traj: &crate::dynamics::Trajectory) -> f64 {
    let c = prob.output_matrix();
    let half_rho = 0.5 * prob.rho;
    let mut total = 0.0;
    for (t, x) in traj.states.iter().enumerate() {
        total += half_rho * (&c * x - &prob.reference[t] + &prob.dual[t]).norm_squared();
    }
    for (t, u) in traj.inputs.iter().enumerate() {
        total += (u.transpose() * &prob.input_weights[t] * u)[0];
        if let Some(prox) = &prob.input_prox {
            total += half_rho * (u - &prox.actions[t] + &prox.duals[t]).norm_squared();
        }
    }
    total
}

/// Finite-horizon LQR gains for stage/terminal state weight `C_x` and input
/// weight `R`: `K_t = (R + BᵀP_{t+1}B)⁻¹BᵀP_{t+1}A` with `P_N = C_x`.
pub fn lqr_gain(
    a: &[Matrix],
    b: &[Matrix],
    state_weight: &Matrix,
    input_weight: &Matrix,
) -> Result<Vec<Matrix>> {
    let horizon = a.len();
    if b.len() != horizon {
        return Err(Error::invalid("A and B sequences differ in length"));
    }
    let n = state_weight.nrows();
    if state_weight.shape() != (n, n) {
        return Err(Error::invalid("state weight must be square"));
    }
    let sym = (state_weight + state_weight.transpose()) * 0.5;
    let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
    if min_eig < -1e-12 {
        return Err(Error::invalid(format!(
            "state weight is indefinite (min eigenvalue {min_eig})"
        )));
    }
    let m = b.first().map_or(input_weight.nrows(), |b| b.ncols());
    check_positive_definite(input_weight, m).map_err(Error::InvalidArgument)?;

    let mut p = state_weight.clone();
    let mut gains = vec![Matrix::zeros(m, n); horizon];
    for t in (0..horizon).rev() {
        let pb = &p * &b[t];
        let h = input_weight + b[t].transpose() * &pb;
        let chol = Cholesky::new(h)
            .ok_or_else(|| Error::numerical(format!("R + BᵀPB singular at step {t}")))?;
        let btpa = pb.transpose() * &a[t];
        let k = chol.solve(&btpa);
        let next = state_weight + a[t].transpose() * &p * &a[t] - btpa.transpose() * &k;
        p = (&next + next.transpose()) * 0.5;
        gains[t] = k;
    }
    Ok(gains)
}
