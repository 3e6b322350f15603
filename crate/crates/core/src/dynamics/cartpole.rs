use serde::{Deserialize, Serialize};

use super::{ContinuousDynamics, ModelKind};
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartpoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_length: f64,
    pub gravity: f64,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 1.0,
            gravity: 9.81,
        }
    }
}

/// Cart with a pendulum, state `(x, θ, ẋ, θ̇)`, input the horizontal cart force.
///
/// Manipulator form `H(q) q̈ + C(q, q̇) q̇ + G(q) = (F, 0)`, with `θ = π` the
/// upright equilibrium.
#[derive(Debug, Clone, Default)]
pub struct Cartpole {
    pub params: CartpoleParams,
}

impl Cartpole {
    pub fn new(params: CartpoleParams) -> Self {
        Self { params }
    }

    /// Kinetic plus potential energy.
    pub fn energy(&self, x: &Vector) -> f64 {
        let CartpoleParams {
            cart_mass: mc,
            pole_mass: mp,
            pole_length: l,
            gravity: g,
        } = self.params;
        let (th, xd, thd) = (x[1], x[2], x[3]);
        let kinetic = 0.5 * (mc + mp) * xd * xd
            + mp * l * th.cos() * xd * thd
            + 0.5 * mp * l * l * thd * thd;
        kinetic - mp * g * l * th.cos()
    }
}

impl ContinuousDynamics for Cartpole {
    fn state_dim(&self) -> usize {
        4
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Cartpole
    }

    fn rhs(&self, x: &Vector, u: &Vector) -> Vector {
        let CartpoleParams {
            cart_mass: mc,
            pole_mass: mp,
            pole_length: l,
            gravity: g,
        } = self.params;
        let (th, xd, thd) = (x[1], x[2], x[3]);
        let (s, c) = th.sin_cos();

        // H(q)
        let h11 = mc + mp;
        let h12 = mp * l * c;
        let h22 = mp * l * l;
        // (F, 0) - C q̇ - G
        let f1 = u[0] + mp * l * thd * thd * s;
        let f2 = -mp * g * l * s;

        let det = h11 * h22 - h12 * h12;
        let xdd = (h22 * f1 - h12 * f2) / det;
        let thdd = (h11 * f2 - h12 * f1) / det;
        Vector::from_column_slice(&[xd, thd, xdd, thdd])
    }
}
