use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use lrmf_core::convmf::{build_convmf, save_checkpoint, train, Activation, Hyperparameters, OptimizerKind, TrainReport};
use lrmf_core::eval::SplitSpec;
use lrmf_core::vlasov::read_series;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{create_dir, manifest, merge_options, nonempty, require, Outputs};

/// Train/validation/test protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum SplitName {
    /// Seeded shuffle, 70 % train (interpolation).
    #[value(name = "random70")]
    #[serde(rename = "random70")]
    Random70,
    /// First 70 % of frames train (extrapolation).
    #[value(name = "sequential70")]
    #[serde(rename = "sequential70")]
    Sequential70,
}

impl SplitName {
    pub fn spec(self, seed: u64, augment_random_ic: bool) -> SplitSpec {
        let base = match self {
            Self::Random70 => SplitSpec::random(seed),
            Self::Sequential70 => SplitSpec { seed, ..SplitSpec::sequential() },
        };
        SplitSpec { augment_random_ic, ..base }
    }
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// Input VPTS time series.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Ranks to train, one network each [default: 12].
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// Split protocol [default: random70].
    #[arg(long, value_enum)]
    pub split: Option<SplitName>,
    /// Seed for initialization, shuffling and the split [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Append random-IC frames (20 % of the training set) to training only.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub augment_random_ic: Option<bool>,
    /// Directory for checkpoints and reports [default: checkpoints].
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Training epochs [default: 200].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate [default: 1e-4].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Minibatch size [default: 16].
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationName>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerName>,
    /// Remaining hyperparameters (layer stacks etc.), config file only.
    #[arg(skip)]
    pub hyperparameters: Option<toml::Table>,
}

merge_options!(TrainArgs {
    data,
    ranks,
    split,
    seed,
    augment_random_ic,
    out_dir,
    epochs,
    learning_rate,
    batch_size,
    activation,
    optimizer,
    hyperparameters,
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationName {
    Tanh,
    Relu,
    LeakyRelu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Adam,
    Sgd,
    Adagrad,
}

#[derive(Debug, Serialize)]
struct Settings {
    data: PathBuf,
    ranks: Vec<usize>,
    split: SplitName,
    seed: u64,
    augment_random_ic: bool,
    out_dir: PathBuf,
    hyperparameters: Hyperparameters,
}

/// Defaults, then the config-file table, then individual flags.
pub fn resolve_hyperparameters(
    table: Option<toml::Table>,
    overrides: impl FnOnce(&mut Hyperparameters),
) -> anyhow::Result<Hyperparameters> {
    let mut hyper = Hyperparameters::default();
    if let Some(table) = table {
        let mut merged = toml::Table::try_from(&hyper)?;
        merged.extend(table);
        hyper = merged.try_into().context("invalid [train.hyperparameters]")?;
    }
    overrides(&mut hyper);
    hyper.validate()?;
    Ok(hyper)
}

fn resolve(a: TrainArgs) -> anyhow::Result<Settings> {
    let seed = a.seed.unwrap_or(0);
    let hyperparameters = resolve_hyperparameters(a.hyperparameters, |h| {
        h.seed = seed;
        if let Some(v) = a.epochs {
            h.epochs = v;
        }
        if let Some(v) = a.learning_rate {
            h.learning_rate = v;
        }
        if let Some(v) = a.batch_size {
            h.batch_size = v;
        }
        if let Some(v) = a.activation {
            h.activation = match v {
                ActivationName::Tanh => Activation::Tanh,
                ActivationName::Relu => Activation::Relu,
                ActivationName::LeakyRelu => Activation::LeakyRelu,
                ActivationName::Sigmoid => Activation::Sigmoid,
            };
        }
        if let Some(v) = a.optimizer {
            h.optimizer = match v {
                OptimizerName::Adam => OptimizerKind::Adam,
                OptimizerName::Sgd => OptimizerKind::Sgd,
                OptimizerName::Adagrad => OptimizerKind::Adagrad,
            };
        }
    })?;
    Ok(Settings {
        data: require(a.data, "data")?,
        ranks: nonempty(a.ranks.unwrap_or_else(|| vec![12]), "ranks")?,
        split: a.split.unwrap_or(SplitName::Random70),
        seed,
        augment_random_ic: a.augment_random_ic.unwrap_or(false),
        out_dir: a.out_dir.unwrap_or_else(|| "checkpoints".into()),
        hyperparameters,
    })
}

pub fn checkpoint_name(rank: usize) -> String {
    format!("convmf_rank{rank}.cmf")
}

fn write_report(path: &Path, report: &TrainReport) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["epoch", "train_loss", "val_loss", "epoch_seconds"])?;
    for (epoch, val) in report.val_loss.iter().enumerate() {
        let (train, secs) = match epoch {
            0 => (String::new(), String::new()),
            e => (
                format!("{:.16e}", report.train_loss[e - 1]),
                format!("{:.6}", report.epoch_seconds[e - 1]),
            ),
        };
        w.write_record([epoch.to_string(), train, format!("{val:.16e}"), secs])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: TrainArgs) -> anyhow::Result<()> {
    let s = resolve(args)?;
    let series = read_series(&s.data).with_context(|| format!("reading {}", s.data.display()))?;
    let (m, n) = series.shape();
    let split = s.split.spec(s.seed, s.augment_random_ic);
    let pool = crate::config::worker_pool()?;
    let results: Vec<_> = pool.install(|| {
        s.ranks
            .par_iter()
            .map(|&rank| {
                let hyper = Hyperparameters { rank, ..s.hyperparameters.clone() };
                let mut model = build_convmf(m, n, &hyper)?;
                let report = train(&mut model, &series, &split)?;
                Ok::<_, lrmf_core::convmf::ConvMfError>((rank, model, report))
            })
            .collect()
    });

    create_dir(&s.out_dir)?;
    let mut outputs = Outputs::default();
    let mut best = Vec::new();
    for (i, result) in results.into_iter().enumerate() {
        let (rank, model, report) = result.map_err(|e| anyhow!("training rank {}: {e}", s.ranks[i]))?;
        let ckpt = outputs.claim(s.out_dir.join(checkpoint_name(rank)));
        save_checkpoint(&ckpt, &model).with_context(|| format!("writing {}", ckpt.display()))?;
        let rpath = outputs.claim(s.out_dir.join(format!("train_report_rank{rank}.csv")));
        write_report(&rpath, &report)?;
        println!(
            "rank {rank}: best epoch {} validation loss {:.6e}",
            report.best_epoch,
            report.best_val_loss()
        );
        best.push((rank, report.best_epoch, report.best_val_loss()));
    }
    let mpath = outputs.claim(s.out_dir.join("train.manifest.toml"));
    let mut man = manifest("train", &s)?;
    man.seeds.insert("init".into(), s.seed);
    man.seeds.insert("shuffle".into(), s.seed);
    man.seeds.insert("split".into(), s.seed);
    man.outputs = outputs.names();
    man.outputs.pop();
    for (rank, epoch, loss) in best {
        man.notes.insert(format!("rank{rank}_best"), format!("epoch {epoch}, validation loss {loss:.6e}"));
    }
    man.write(&mpath)?;
    outputs.commit();
    Ok(())
}
