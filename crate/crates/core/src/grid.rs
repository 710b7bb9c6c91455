//! Uniform time grid `t_i = i·T/n`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::GridMismatch(format!(
                "horizon {horizon} must be positive"
            )));
        }
        if n_steps == 0 {
            return Err(Error::GridMismatch("grid needs at least one step".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.horizon
        } else {
            self.horizon * i as f64 / self.n_steps as f64
        }
    }

    /// All `n + 1` grid points.
    pub fn points(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.time(i)).collect()
    }

    /// Index of the grid point equal to `t` up to `1e-9·dt`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let i = x.round();
        if i < 0.0 || i > self.n_steps as f64 || (x - i).abs() > 1e-9 {
            return None;
        }
        Some(i as usize)
    }

    /// Nearest grid index, ties resolved downward.
    pub fn nearest_index(&self, t: f64) -> usize {
        let x = (t / self.dt()).clamp(0.0, self.n_steps as f64);
        let lower = x.floor();
        let i = if x - lower > 0.5 { lower + 1.0 } else { lower };
        i as usize
    }

    /// Same horizon with each step halved.
    pub fn refined(&self) -> Self {
        Self {
            horizon: self.horizon,
            n_steps: 2 * self.n_steps,
        }
    }
}
