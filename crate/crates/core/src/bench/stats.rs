use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vector;

/// Radius of the success ball around the goal.
pub const SUCCESS_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    /// `U[0, 1)` per coordinate.
    Uniform,
    /// `N(0, 1)` per coordinate.
    Normal,
}

pub fn sample_initial_conditions(dist: Distribution, n: usize, dim: usize, seed: u64) -> Result<Vec<Vector>> {
    if n == 0 {
        return Err(Error::invalid("need at least one initial condition"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| match dist {
            Distribution::Uniform => Vector::from_fn(dim, |_, _| rng.random::<f64>()),
            Distribution::Normal => Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal)),
        })
        .collect())
}

/// Strict ball test: a distance of exactly 0.5 is a failure.
pub fn is_success(distance: f64) -> bool {
    distance < SUCCESS_RADIUS
}

/// Percentage of distances inside the success ball. `None` marks a failed run.
pub fn success_rate(distances: &[Option<f64>]) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::invalid("success rate of an empty record set"));
    }
    let hits = distances.iter().filter(|d| d.is_some_and(is_success)).count();
    Ok(100.0 * hits as f64 / distances.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
