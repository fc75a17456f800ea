use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{reconstruction_loss_grad, ConvMfModel};
use super::optim::OptimizerState;
use super::ConvMfError;
use crate::eval::{make_split, normalized_loss, SplitSpec};
use crate::linalg::Matrix;
use crate::vlasov::{init_random_smooth, TimeSeries};

/// Seeds of the random-IC augmentation frames start here.
pub const AUGMENT_SEED_BASE: u64 = 1000;
/// Augmentation frames per training frame.
pub const AUGMENT_FRACTION: f64 = 0.2;
const AUGMENT_SMOOTH_SCALE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean unscaled `‖X − UV‖²_F` over training frames, one per epoch.
    pub train_loss: Vec<f64>,
    /// Mean normalized validation loss; entry 0 precedes any update.
    pub val_loss: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    /// Index into `val_loss` of the checkpoint the model was restored to.
    pub best_epoch: usize,
}

impl TrainReport {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch]
    }

    /// Whether the first `k` epoch training losses strictly decrease.
    pub fn decreasing_prefix(&self, k: usize) -> bool {
        self.train_loss.iter().take(k).collect::<Vec<_>>().windows(2).all(|w| w[1] < w[0])
    }
}

/// Mean normalized loss over `frames`, evaluated in minibatches.
pub(crate) fn mean_normalized_loss(
    model: &ConvMfModel,
    frames: &[&Matrix],
    batch: usize,
) -> Result<f64, ConvMfError> {
    let mut total = 0.0;
    for chunk in frames.chunks(batch.max(1)) {
        let (pairs, _) = model.forward_cached(chunk)?;
        for (x, p) in chunk.iter().zip(&pairs) {
            total += normalized_loss(x, &p.u, &p.v).map_err(|e| ConvMfError::InsufficientData(e.to_string()))?;
        }
    }
    Ok(total / frames.len() as f64)
}

/// Minimizes the summed unscaled reconstruction error over `train_set` with
/// shuffled minibatches, tracks validation loss each epoch and restores the
/// parameters of the best validation epoch.
pub fn train_frames(
    model: &mut ConvMfModel,
    train_set: &[&Matrix],
    validation: &[&Matrix],
) -> Result<TrainReport, ConvMfError> {
    if train_set.is_empty() || validation.is_empty() {
        return Err(ConvMfError::InsufficientData(format!(
            "{} training and {} validation frames",
            train_set.len(),
            validation.len()
        )));
    }
    let hyper = model.hyper.clone();
    hyper.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    // Initialization draws from stream 0 of the same seed.
    rng.set_stream(1);
    let mut opt = OptimizerState::new(hyper.optimizer, model);

    let mut report = TrainReport {
        train_loss: Vec::with_capacity(hyper.epochs),
        val_loss: vec![mean_normalized_loss(model, validation, hyper.batch_size)?],
        epoch_seconds: Vec::with_capacity(hyper.epochs),
        best_epoch: 0,
    };
    let mut best = model.clone();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=hyper.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(hyper.batch_size) {
            let batch: Vec<&Matrix> = idx.iter().map(|&i| train_set[i]).collect();
            let (pairs, cache) = model.forward_cached(&batch)?;
            let mut upstream = Vec::with_capacity(batch.len());
            for (x, p) in batch.iter().zip(&pairs) {
                let (loss, g) = reconstruction_loss_grad(x, p);
                epoch_loss += loss;
                upstream.push(g);
            }
            if !epoch_loss.is_finite() {
                return Err(ConvMfError::Diverged {
                    epoch,
                    loss: epoch_loss,
                });
            }
            let grads = model.backward(&cache, &upstream)?;
            opt.step(model, &grads, hyper.learning_rate).map_err(|e| match e {
                ConvMfError::NonFiniteGradient { .. } => ConvMfError::Diverged {
                    epoch,
                    loss: f64::NAN,
                },
                other => other,
            })?;
        }
        let val = mean_normalized_loss(model, validation, hyper.batch_size)?;
        if !val.is_finite() {
            return Err(ConvMfError::Diverged { epoch, loss: val });
        }
        report.train_loss.push(epoch_loss / train_set.len() as f64);
        report.val_loss.push(val);
        report.epoch_seconds.push(start.elapsed().as_secs_f64());
        if val < report.best_val_loss() {
            report.best_epoch = epoch;
            best.clone_from(model);
        }
    }
    *model = best;
    Ok(report)
}

/// Trains on the frames selected by `split`, optionally adding random-IC
/// frames (seeds 1000, 1001, …) to the training set only.
pub fn train(model: &mut ConvMfModel, series: &TimeSeries, split: &SplitSpec) -> Result<TrainReport, ConvMfError> {
    let parts = make_split(series.len(), split).map_err(|e| ConvMfError::InsufficientData(e.to_string()))?;
    let mut train_set: Vec<&Matrix> = parts.train.iter().map(|&i| &series.frames[i]).collect();
    let augment = if split.augment_random_ic {
        augmentation_frames(series, parts.train.len())?
    } else {
        Vec::new()
    };
    train_set.extend(augment.iter());
    let validation: Vec<&Matrix> = parts.validation.iter().map(|&i| &series.frames[i]).collect();
    train_frames(model, &train_set, &validation)
}

/// `⌈0.2·n_train⌉` smoothed-noise frames on the series grid.
pub fn augmentation_frames(series: &TimeSeries, n_train: usize) -> Result<Vec<Matrix>, ConvMfError> {
    let count = (AUGMENT_FRACTION * n_train as f64 - 1e-9).ceil() as usize;
    (0..count as u64)
        .map(|i| {
            init_random_smooth(&series.grid, AUGMENT_SEED_BASE + i, AUGMENT_SMOOTH_SCALE)
                .map_err(|e| ConvMfError::InsufficientData(format!("augmentation frame: {e}")))
        })
        .collect()
}
