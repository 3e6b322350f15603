use nalgebra::dmatrix;

use super::{ContinuousDynamics, ModelKind};
use crate::{Matrix, Vector};

/// Kinematic unicycle: state `(x₁, x₂, θ)`, input `(v, ω)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unicycle;

impl ContinuousDynamics for Unicycle {
    fn state_dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Unicycle
    }

    fn rhs(&self, x: &Vector, u: &Vector) -> Vector {
        let (s, c) = x[2].sin_cos();
        Vector::from_column_slice(&[u[0] * c, u[0] * s, u[1]])
    }

    fn rhs_jacobians(&self, x: &Vector, u: &Vector) -> Option<(Matrix, Matrix)> {
        let (s, c) = x[2].sin_cos();
        let v = u[0];
        let a = dmatrix![
            0.0, 0.0, -v * s;
            0.0, 0.0, v * c;
            0.0, 0.0, 0.0
        ];
        let b = dmatrix![
            c, 0.0;
            s, 0.0;
            0.0, 1.0
        ];
        Some((a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Dynamics, Euler};
    use nalgebra::dvector;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn straight_line_step() {
        let model = Euler::new(Unicycle, 0.1).unwrap();
        let x = model.step(0, &dvector![0.0, 0.0, 0.0], &dvector![1.0, 0.0]).unwrap();
        assert_eq!(x, dvector![0.1, 0.0, 0.0]);
    }

    #[test]
    fn heading_quarter_turn_moves_along_second_axis() {
        let model = Euler::new(Unicycle, 0.1).unwrap();
        let x = model
            .step(0, &dvector![0.0, 0.0, FRAC_PI_2], &dvector![1.0, 0.0])
            .unwrap();
        assert!(x[0].abs() < 1e-16);
        assert!((x[1] - 0.1).abs() < 1e-16);
        assert_eq!(x[2], FRAC_PI_2);
    }

    #[test]
    fn heading_derivative_vanishes_at_zero_heading() {
        let model = Euler::new(Unicycle, 0.1).unwrap();
        let (a, _) = model.jacobians(0, &dvector![0.0, 0.0, 0.0], &dvector![1.0, 0.0]);
        assert_eq!(a[(0, 2)], 0.0);
        assert!((a[(1, 2)] - 0.1).abs() < 1e-15);
    }
}
