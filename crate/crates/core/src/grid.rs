//! Uniform time discretization shared by simulators and solvers.

use crate::error::{Error, Result};

/// Uniform grid t_i = t0 + i*dt for i = 0..=steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidSpec(format!("time step must be positive, got {dt}")));
        }
        if steps == 0 {
            return Err(Error::InvalidSpec("grid needs at least one step".into()));
        }
        Ok(TimeGrid { t0, dt, steps })
    }

    /// Grid covering [0, horizon] with the closest step count to horizon/dt.
    pub fn from_horizon(horizon: f64, dt: f64) -> Result<Self> {
        let steps = (horizon / dt).round().max(1.0) as usize;
        TimeGrid::new(0.0, dt, steps)
    }

    pub fn tf(&self) -> f64 {
        self.t0 + self.dt * self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.dt * i as f64
    }

    /// All steps+1 node times.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }
}
