//! Evaluation protocol: normalized losses, train/validation/test splits,
//! least-squares error decomposition, rank sweeps, histograms, timing and
//! CSV/manifest output.

mod csv_io;
mod decomposition;
mod experiment;
mod manifest;
mod split;
mod sweep;
mod timing;

pub use csv_io::{
    read_histogram, read_records, write_histogram, write_rank_averages, write_records, HISTOGRAM_HEADER,
    RECORD_HEADER,
};
pub use decomposition::{calculated_sigma, calculated_u, calculated_v, Calculated};
pub use experiment::{extrapolation_experiment, split_experiment, SplitExperiment};
pub use manifest::Manifest;
pub use split::{make_split, Split, SplitMode, SplitSpec, MIN_FRAMES};
pub use sweep::{evaluate_frame, loss_histogram, rank_averages, rank_sweep, Histogram, RankAverage};
pub use timing::{time_median, time_medians, timing_benchmark, Timing, TimingConfig, TimingRecord};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::convmf::ConvMfError;
use crate::linalg::{matmul, LinalgError, Matrix};

/// Relative residual tolerance used for every truncated-SVD evaluation.
pub const SVD_FASTER_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("degenerate input: ‖X‖_F = 0")]
    ZeroNorm,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("empty selection: {0}")]
    EmptySelection(String),
    #[error("no checkpoint for rank {rank}; available ranks: {available:?}")]
    MissingCheckpoint { rank: usize, available: Vec<usize> },
    #[error("invalid timing config: {0}")]
    InvalidTiming(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    ConvMf(#[from] ConvMfError),
}

/// `‖X − UV‖²_F / ‖X‖²_F`.
pub fn normalized_loss(x: &Matrix, u: &Matrix, v: &Matrix) -> Result<f64, EvalError> {
    if u.rows() != x.rows() || v.cols() != x.cols() || u.cols() != v.rows() {
        return Err(EvalError::ShapeMismatch(format!(
            "X {:?}, U {:?}, V {:?}",
            x.shape(),
            u.shape(),
            v.shape()
        )));
    }
    let norm = x.frobenius_norm_sq();
    if norm == 0.0 {
        return Err(EvalError::ZeroNorm);
    }
    Ok(x.distance_sq(&matmul(u, v)?)? / norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Convmf,
    SvdBasic,
    SvdFaster,
    CalcU,
    CalcV,
    CalcSigma,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Self::Convmf,
        Self::SvdBasic,
        Self::SvdFaster,
        Self::CalcU,
        Self::CalcV,
        Self::CalcSigma,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Convmf => "convmf",
            Self::SvdBasic => "svd_basic",
            Self::SvdFaster => "svd_faster",
            Self::CalcU => "calc_u",
            Self::CalcV => "calc_v",
            Self::CalcSigma => "calc_sigma",
        }
    }

    /// Methods that need a trained network.
    pub fn needs_model(self) -> bool {
        !matches!(self, Self::SvdBasic | Self::SvdFaster)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| EvalError::Csv(format!("unknown method `{s}`")))
    }
}

/// One (frame, rank, method) measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub frame_index: usize,
    pub rank: usize,
    pub method: Method,
    pub scaled_loss: f64,
    pub wall_time_ns: u64,
    /// The least-squares repair hit a rank-deficient fixed factor and
    /// returned the minimum-norm solution. Not serialized.
    pub rank_deficient: bool,
}

impl EvalRecord {
    pub fn new(frame_index: usize, rank: usize, method: Method, scaled_loss: f64, wall_time_ns: u64) -> Self {
        Self {
            frame_index,
            rank,
            method,
            scaled_loss,
            wall_time_ns,
            rank_deficient: false,
        }
    }

    pub(crate) fn sort_key(&self) -> (usize, usize, Method) {
        (self.frame_index, self.rank, self.method)
    }
}
