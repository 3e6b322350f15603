use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Additive process noise `H_t w_t` with `w_t ~ N(0, I)` i.i.d.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    h: Vec<Matrix>,
}

impl NoiseModel {
    pub fn time_invariant(h: Matrix) -> Self {
        Self { h: vec![h] }
    }

    pub fn time_varying(h: Vec<Matrix>) -> Result<Self> {
        let Some(first) = h.first() else {
            return Err(Error::invalid("empty noise matrix sequence"));
        };
        if h.iter().any(|m| m.shape() != first.shape()) {
            return Err(Error::invalid("noise matrices must share a shape"));
        }
        Ok(Self { h })
    }

    /// `σ·I` on an `n`-dimensional state.
    pub fn isotropic(n: usize, sigma: f64) -> Self {
        Self::time_invariant(Matrix::identity(n, n) * sigma)
    }

    pub fn h(&self, t: usize) -> &Matrix {
        &self.h[t.min(self.h.len() - 1)]
    }

    pub fn state_dim(&self) -> usize {
        self.h[0].nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.h[0].ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.h.iter().all(|m| m.iter().all(|v| *v == 0.0))
    }

    /// Deterministic stream of `H_t w_t` draws for one rollout.
    pub fn sampler(&self, seed: u64) -> NoiseSampler<'_> {
        NoiseSampler {
            model: self,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

pub struct NoiseSampler<'a> {
    model: &'a NoiseModel,
    rng: ChaCha8Rng,
}

impl NoiseSampler<'_> {
    /// A standard normal `w` (one draw per call).
    pub fn standard(&mut self) -> Vector {
        let k = self.model.noise_dim();
        Vector::from_iterator(k, (0..k).map(|_| StandardNormal.sample(&mut self.rng)))
    }

    pub fn sample(&mut self, t: usize) -> Vector {
        let w = self.standard();
        self.model.h(t) * w
    }
}
