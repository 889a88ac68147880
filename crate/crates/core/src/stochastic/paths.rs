
use super::rng::{normal, substream, Domain};
use crate::{Error, Result};

/// One discretised `m`-dimensional Brownian path on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    horizon: f64,
    steps: usize,
    w_dim: usize,
    seed: u64,
    path_index: u64,
    /// Row-major `steps × w_dim`.
    increments: Vec<f64>,
}

impl PathGrid {
    /// Path `path_index` of the family keyed by `seed`.
    pub fn generate(horizon: f64, w_dim: usize, steps: usize, seed: u64, path_index: u64) -> Result<Self> {
        validate(horizon, w_dim, steps)?;
        let mut rng = substream(seed, Domain::Paths, path_index);
        let sd = (horizon / steps as f64).sqrt();
        let increments = (0..steps * w_dim)
            .map(|_| sd * normal(&mut rng))
            .collect();
        Ok(Self { horizon, steps, w_dim, seed, path_index, increments })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn w_dim(&self) -> usize {
        self.w_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn increment(&self, step: usize) -> &[f64] {
        &self.increments[step * self.w_dim..(step + 1) * self.w_dim]
    }

    /// `W_{t_0}, …, W_{t_N}` row-major, `(steps + 1) × w_dim`, with `W_0 = 0`.
    pub fn positions(&self) -> Vec<f64> {
        let m = self.w_dim;
        let mut out = vec![0.0; (self.steps + 1) * m];
        for i in 0..self.steps {
            for j in 0..m {
                out[(i + 1) * m + j] = out[i * m + j] + self.increments[i * m + j];
            }
        }
        out
    }

    pub fn terminal(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.w_dim];
        for step in 0..self.steps {
            for (wj, dj) in w.iter_mut().zip(self.increment(step)) {
                *wj += dj;
            }
        }
        w
    }
}

fn validate(horizon: f64, w_dim: usize, steps: usize) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid("horizon", format!("must be finite and > 0, got {horizon}")));
    }
    if w_dim == 0 {
        return Err(Error::invalid("w_dim", "must be at least 1"));
    }
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    Ok(())
}

/// Lazily yields paths `0..paths` of the family keyed by `seed`.
pub fn simulate_paths(
    horizon: f64,
    w_dim: usize,
    steps: usize,
    paths: u64,
    seed: u64,
) -> Result<impl Iterator<Item = PathGrid>> {
    validate(horizon, w_dim, steps)?;
    if paths == 0 {
        return Err(Error::invalid("paths", "must be at least 1"));
    }
    Ok((0..paths).map(move |i| PathGrid::generate(horizon, w_dim, steps, seed, i).expect("validated")))
}
