use nalgebra::dmatrix;

use super::{Dynamics, ModelKind};
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// `x_{t+1} = A_t x_t + B_t u_t`. A single pair is treated as time-invariant.
#[derive(Debug, Clone)]
pub struct LinearModel {
    a: Vec<Matrix>,
    b: Vec<Matrix>,
}

impl LinearModel {
    pub fn time_invariant(a: Matrix, b: Matrix) -> Result<Self> {
        Self::time_varying(vec![a], vec![b])
    }

    pub fn time_varying(a: Vec<Matrix>, b: Vec<Matrix>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::invalid(format!(
                "need matching non-empty A/B sequences, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        let n = a[0].nrows();
        let m = b[0].ncols();
        for (t, (at, bt)) in a.iter().zip(&b).enumerate() {
            if at.shape() != (n, n) || bt.shape() != (n, m) {
                return Err(Error::invalid(format!(
                    "A_{t} is {:?} and B_{t} is {:?}, expected ({n}, {n}) and ({n}, {m})",
                    at.shape(),
                    bt.shape()
                )));
            }
        }
        Ok(Self { a, b })
    }

    /// The planar system `x⁺ = [[1,1],[0,1]] x + u` used by the linear benchmarks.
    pub fn double_integrator_2d() -> Self {
        Self {
            a: vec![dmatrix![1.0, 1.0; 0.0, 1.0]],
            b: vec![Matrix::identity(2, 2)],
        }
    }

    pub fn a(&self, t: usize) -> &Matrix {
        &self.a[t.min(self.a.len() - 1)]
    }

    pub fn b(&self, t: usize) -> &Matrix {
        &self.b[t.min(self.b.len() - 1)]
    }

    /// `(A_0..A_{N-1}, B_0..B_{N-1})`.
    pub fn sequences(&self, horizon: usize) -> (Vec<Matrix>, Vec<Matrix>) {
        (0..horizon)
            .map(|t| (self.a(t).clone(), self.b(t).clone()))
            .unzip()
    }
}

impl Dynamics for LinearModel {
    fn state_dim(&self) -> usize {
        self.a[0].nrows()
    }

    fn input_dim(&self) -> usize {
        self.b[0].ncols()
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Linear
    }

    fn transition(&self, t: usize, x: &Vector, u: &Vector) -> Vector {
        self.a(t) * x + self.b(t) * u
    }

    fn jacobians(&self, t: usize, _x: &Vector, _u: &Vector) -> (Matrix, Matrix) {
        (self.a(t).clone(), self.b(t).clone())
    }

    fn linear_parts(&self, t: usize) -> Option<(&Matrix, &Matrix)> {
        Some((self.a(t), self.b(t)))
    }
}
