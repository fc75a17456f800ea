use serde::{Deserialize, Serialize};

use super::SimError;

/// Uniform 1D1V phase-space grid. Rows of a snapshot index space (periodic),
/// columns index velocity (truncated). Values live at cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    pub nx: usize,
    pub nv: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl PhaseSpaceGrid {
    pub fn new(
        nx: usize,
        nv: usize,
        (x_min, x_max): (f64, f64),
        (v_min, v_max): (f64, f64),
    ) -> Result<Self, SimError> {
        let grid = Self {
            nx,
            nv,
            x_min,
            x_max,
            v_min,
            v_max,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// `x ∈ [0, 4π)`, `v ∈ [−2π, 2π]`.
    pub fn standard(nx: usize, nv: usize) -> Self {
        use std::f64::consts::PI;
        Self::new(nx, nv, (0.0, 4.0 * PI), (-2.0 * PI, 2.0 * PI)).expect("standard grid is valid")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.nx >= 2
            && self.nv >= 2
            && [self.x_min, self.x_max, self.v_min, self.v_max]
                .iter()
                .all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.v_max > self.v_min;
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidGrid(format!("{self:?}")))
        }
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dv(&self) -> f64 {
        (self.v_max - self.v_min) / self.nv as f64
    }

    pub fn length_x(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn v(&self, j: usize) -> f64 {
        self.v_min + (j as f64 + 0.5) * self.dv()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn vs(&self) -> Vec<f64> {
        (0..self.nv).map(|j| self.v(j)).collect()
    }
}
