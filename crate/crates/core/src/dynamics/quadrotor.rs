use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{ContinuousDynamics, ModelKind};
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorParams {
    pub mass: f64,
    /// Diagonal of the body inertia tensor.
    pub inertia: [f64; 3],
    pub gravity: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            inertia: [0.01, 0.01, 0.02],
            gravity: 9.81,
        }
    }
}

/// 12-state rigid-body quadrotor.
///
/// State `(p, ṗ, φ, θ, ψ, ω)`: world position and velocity, ZYX Euler angles
/// and angular rates. Inputs are collective thrust and three body torques.
/// Euler-angle rates are taken equal to `ω`, which keeps the model
/// control-affine.
#[derive(Debug, Clone, Default)]
pub struct Quadrotor {
    pub params: QuadrotorParams,
}

impl Quadrotor {
    pub fn new(params: QuadrotorParams) -> Self {
        Self { params }
    }

    pub fn hover_thrust(&self) -> f64 {
        self.params.mass * self.params.gravity
    }
}

impl ContinuousDynamics for Quadrotor {
    fn state_dim(&self) -> usize {
        12
    }

    fn input_dim(&self) -> usize {
        4
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Quadrotor
    }

    fn rhs(&self, x: &Vector, u: &Vector) -> Vector {
        let QuadrotorParams {
            mass,
            inertia,
            gravity,
        } = self.params;
        let (sphi, cphi) = x[6].sin_cos();
        let (sth, cth) = x[7].sin_cos();
        let (spsi, cpsi) = x[8].sin_cos();
        // third column of Rz(ψ) Ry(θ) Rx(φ)
        let thrust_dir = Vector3::new(
            cphi * sth * cpsi + sphi * spsi,
            cphi * sth * spsi - sphi * cpsi,
            cphi * cth,
        );
        let accel = thrust_dir * (u[0] / mass) - Vector3::new(0.0, 0.0, gravity);

        let w = Vector3::new(x[9], x[10], x[11]);
        let j = Vector3::from(inertia);
        let gyro = w.cross(&j.component_mul(&w));
        let tau = Vector3::new(u[1], u[2], u[3]);
        let wdot = (tau - gyro).component_div(&j);

        let mut out = Vector::zeros(12);
        out.fixed_rows_mut::<3>(0).copy_from(&x.fixed_rows::<3>(3));
        out.fixed_rows_mut::<3>(3).copy_from(&accel);
        out.fixed_rows_mut::<3>(6).copy_from(&w);
        out.fixed_rows_mut::<3>(9).copy_from(&wdot);
        out
    }
}
