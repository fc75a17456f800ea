//! 1D1V Vlasov–Poisson data generation.

mod grid;
mod init;
mod poisson;
mod series_io;
mod solver;

pub use grid::PhaseSpaceGrid;
pub use init::{init_landau_strong, init_random_smooth, init_two_stream, InitialCondition};
pub use poisson::{charge_density, field_of, poisson_solve, FieldState};
pub use series_io::{read_series, write_series, SeriesFormatError, VPTS_MAGIC, VPTS_VERSION};
pub use solver::{advect_v, advect_x, run, step, total_mass};

use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown initial condition `{0}`; expected one of landau-strong, two-stream, random-smooth")]
    UnknownInitialCondition(String),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("{axis}-advection displacement {displacement} exceeds half the domain ({limit})")]
    DisplacementTooLarge {
        axis: &'static str,
        displacement: f64,
        limit: f64,
    },
    #[error("distribution became non-finite")]
    NonFinite,
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Ordered snapshots of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub grid: PhaseSpaceGrid,
    /// Time between consecutive frames.
    pub dt: f64,
    pub frames: Vec<Matrix>,
    pub ic_name: String,
    /// `½∫E² dx` of each frame.
    pub field_energy: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.grid.nx, self.grid.nv)
    }

    pub fn time(&self, frame: usize) -> f64 {
        frame as f64 * self.dt
    }
}
