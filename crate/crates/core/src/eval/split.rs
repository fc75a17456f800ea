use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

pub const MIN_FRAMES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Seeded shuffle: interpolation protocol.
    Random,
    /// Leading frames train, trailing frames held out: extrapolation
    /// protocol.
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub train_fraction: f64,
    pub seed: u64,
    pub augment_random_ic: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            mode: SplitMode::Random,
            train_fraction: 0.7,
            seed: 0,
            augment_random_ic: false,
        }
    }
}

impl SplitSpec {
    pub fn random(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn sequential() -> Self {
        Self {
            mode: SplitMode::Sequential,
            ..Self::default()
        }
    }

    /// Number of training frames out of `t`: `⌈fraction·t⌉`.
    pub fn train_count(&self, t: usize) -> usize {
        // The epsilon keeps products like 0.7·10 from rounding up to 8.
        (self.train_fraction * t as f64 - 1e-9).ceil() as usize
    }
}

/// Frame indices of each partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partitions `0..t`. The holdout is divided validation first, with the
/// validation set taking the smaller half when the holdout is odd.
pub fn make_split(t: usize, spec: &SplitSpec) -> Result<Split, EvalError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(EvalError::InvalidSplit(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    if t < MIN_FRAMES {
        return Err(EvalError::InvalidSplit(format!("need at least {MIN_FRAMES} frames, got {t}")));
    }
    let n_train = spec.train_count(t);
    let holdout = t.saturating_sub(n_train);
    let n_val = holdout / 2;
    if n_train == 0 || n_val == 0 || holdout - n_val == 0 {
        return Err(EvalError::InvalidSplit(format!(
            "{t} frames at fraction {} leave an empty partition",
            spec.train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..t).collect();
    if spec.mode == SplitMode::Random {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    }
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Ok(Split {
        train: sorted(&order[..n_train]),
        validation: sorted(&order[n_train..n_train + n_val]),
        test: sorted(&order[n_train + n_val..]),
    })
}
