//! ConvMF: a convolutional network mapping one `m × n` snapshot to a rank-`r`
//! factor pair `(U, V)`.
//!
//! ```text
//! X ─ conv ─ act ─ conv ─ act ─ flatten ─ linear ─ act ─ linear ─ act ─┬─ fork_u ─ U (m×r)
//!                                                                     └─ fork_v ─ V (r×n)
//! ```
//!
//! Each fork is `linear ─ act ─ linear ─ act ─ linear` with no activation on
//! the output layer. Forward and backward passes are written out by hand and
//! operate on whole minibatches.

mod checkpoint;
mod layers;
mod model;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CMF1_MAGIC, CMF1_VERSION};
pub use layers::{conv2d_forward, conv_output_extent, Activation, ConvLayer, Linear, Tensor3};
pub use model::{
    build_convmf, parameter_count, probe_gradients, reconstruction_loss, ConvMfModel, FactorGrad, ForwardCache,
    GradientCheck, GradientProbe, Gradients,
};
pub use optim::{adam_step, AdamConfig, OptimizerState};
pub use train::{augmentation_frames, train, train_frames, TrainReport, AUGMENT_FRACTION, AUGMENT_SEED_BASE};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum ConvMfError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("invalid layer chain: {0}")]
    InvalidArchitecture(String),
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("non-finite gradient in tensor `{tensor}`")]
    NonFiniteGradient { tensor: String },
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("too few frames: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
    Adagrad,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [Self::Adam, Self::Sgd, Self::Adagrad];
}

/// One convolutional layer of the stem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub out_channels: usize,
}

/// Architecture and training settings. The explored grid per axis is exposed
/// through the `*_GRID` constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub conv_layers: Vec<ConvSpec>,
    pub stem_dims: Vec<usize>,
    /// Hidden widths of each fork; the output layer is appended.
    pub fork_dims: Vec<usize>,
    pub rank: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Hyperparameters {
    pub const LEARNING_RATE_GRID: [f64; 3] = [1e-3, 5e-4, 1e-4];
    pub const KERNEL_GRID: [usize; 3] = [3, 5, 6];
    pub const STRIDE_GRID: [usize; 3] = [1, 2, 3];
    pub const PADDING_GRID: [usize; 4] = [0, 1, 2, 3];
    pub const DEPTH_GRID: [usize; 6] = [1, 2, 3, 4, 5, 6];
    pub const WIDTH_GRID: [usize; 5] = [100, 200, 500, 1000, 2000];

    pub fn with_rank(rank: usize) -> Self {
        Self {
            rank,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConvMfError> {
        let bad = |msg: String| Err(ConvMfError::InvalidHyperparameters(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.rank == 0 {
            return bad("rank must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        for (i, c) in self.conv_layers.iter().enumerate() {
            if c.kernel == 0 || c.stride == 0 || c.dilation == 0 || c.out_channels == 0 {
                return bad(format!("conv layer {i}: kernel, stride, dilation and channels must be positive"));
            }
        }
        if self.stem_dims.contains(&0) || self.fork_dims.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        Ok(())
    }
}

impl Default for Hyperparameters {
    /// Tanh, Adam at 1e-4, two conv layers (5/pad 3 then 3/pad 0), stem
    /// 500 → 200, forks 300 → 200 → output, rank 12, 200 epochs of batch 16.
    fn default() -> Self {
        Self {
            activation: Activation::Tanh,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-4,
            conv_layers: vec![
                ConvSpec {
                    kernel: 5,
                    stride: 1,
                    padding: 3,
                    dilation: 1,
                    out_channels: 8,
                },
                ConvSpec {
                    kernel: 3,
                    stride: 1,
                    padding: 0,
                    dilation: 1,
                    out_channels: 1,
                },
            ],
            stem_dims: vec![500, 200],
            fork_dims: vec![300, 200],
            rank: 12,
            epochs: 200,
            batch_size: 16,
            seed: 0,
        }
    }
}
