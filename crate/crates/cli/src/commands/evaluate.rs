use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use lrmf_core::convmf::{load_checkpoint, ConvMfModel};
use lrmf_core::eval::{
    evaluate_frame, loss_histogram, make_split, rank_averages, write_histogram, write_rank_averages, write_records,
    EvalRecord, Method,
};
use lrmf_core::vlasov::read_series;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::SplitName;
use crate::config::{create_dir, default_ranks, manifest, merge_options, nonempty, require, Outputs};

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    /// Input VPTS time series.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory holding `convmf_rank<r>.cmf` checkpoints.
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    /// Ranks to evaluate [default: 5,10,15,20,25,30].
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// Methods: convmf, svd_basic, svd_faster, calc_u, calc_v, calc_sigma
    /// [default: all six with --checkpoints, else the two SVDs].
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Evaluate only the test partition of this split (with --seed).
    #[arg(long, value_enum)]
    pub split: Option<SplitName>,
    /// Split seed used with --split [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Histogram bins [default: 50].
    #[arg(long)]
    pub bins: Option<usize>,
    /// Output directory [default: eval].
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

merge_options!(EvaluateArgs { data, checkpoints, ranks, methods, split, seed, bins, out_dir });

#[derive(Debug, Serialize)]
struct Settings {
    data: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoints: Option<PathBuf>,
    ranks: Vec<usize>,
    methods: Vec<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<SplitName>,
    seed: u64,
    bins: usize,
    out_dir: PathBuf,
}

fn resolve(a: EvaluateArgs) -> anyhow::Result<Settings> {
    let methods = a.methods.unwrap_or_else(|| match a.checkpoints {
        Some(_) => Method::ALL.to_vec(),
        None => vec![Method::SvdBasic, Method::SvdFaster],
    });
    let mut methods = nonempty(methods, "methods")?;
    methods.sort();
    methods.dedup();
    let mut ranks = nonempty(a.ranks.unwrap_or_else(default_ranks), "ranks")?;
    ranks.sort();
    ranks.dedup();
    let bins = a.bins.unwrap_or(50);
    if bins == 0 {
        bail!("bins must be at least 1");
    }
    Ok(Settings {
        data: require(a.data, "data")?,
        checkpoints: a.checkpoints,
        ranks,
        methods,
        split: a.split,
        seed: a.seed.unwrap_or(0),
        bins,
        out_dir: a.out_dir.unwrap_or_else(|| "eval".into()),
    })
}

/// Every `convmf_rank<r>.cmf` in `dir`, keyed by rank.
pub fn scan_checkpoints(dir: &Path) -> anyhow::Result<BTreeMap<usize, PathBuf>> {
    let mut found = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        if let Some(rank) = name
            .strip_prefix("convmf_rank")
            .and_then(|r| r.strip_suffix(".cmf"))
            .and_then(|r| r.parse::<usize>().ok())
        {
            found.insert(rank, path);
        }
    }
    Ok(found)
}

/// Loads the checkpoints for `ranks`; a missing rank is an error naming the
/// ranks that are available.
pub fn load_models(dir: Option<&Path>, ranks: &[usize]) -> anyhow::Result<BTreeMap<usize, ConvMfModel>> {
    let available = match dir {
        Some(d) => scan_checkpoints(d)?,
        None => BTreeMap::new(),
    };
    let mut models = BTreeMap::new();
    for &r in ranks {
        let Some(path) = available.get(&r) else {
            bail!(
                "no checkpoint for rank {r}; available ranks: {:?}",
                available.keys().collect::<Vec<_>>()
            );
        };
        let model = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
        models.insert(r, model);
    }
    Ok(models)
}

fn write_csv(outputs: &mut Outputs, path: PathBuf, write: impl FnOnce(File) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let path = outputs.claim(path);
    write(File::create(&path).with_context(|| format!("creating {}", path.display()))?)
}

pub fn run(args: EvaluateArgs) -> anyhow::Result<()> {
    let s = resolve(args)?;
    let series = read_series(&s.data).with_context(|| format!("reading {}", s.data.display()))?;
    let models = if s.methods.iter().any(|m| m.needs_model()) {
        let Some(dir) = &s.checkpoints else {
            bail!("methods {:?} need trained networks; pass --checkpoints", s.methods);
        };
        load_models(Some(dir), &s.ranks)?
    } else {
        BTreeMap::new()
    };
    for (r, model) in &models {
        if model.input_shape != series.shape() {
            bail!("rank {r} checkpoint expects {:?} frames, series has {:?}", model.input_shape, series.shape());
        }
    }
    let frames: Vec<usize> = match s.split {
        Some(name) => make_split(series.len(), &name.spec(s.seed, false))?.test,
        None => (0..series.len()).collect(),
    };

    let pool = crate::config::worker_pool()?;
    let per_frame: Vec<_> = pool.install(|| {
        frames
            .par_iter()
            .map(|&i| evaluate_frame(&series.frames[i], i, &s.ranks, &s.methods, &models))
            .collect()
    });
    let mut records: Vec<EvalRecord> = Vec::new();
    for r in per_frame {
        records.extend(r?);
    }
    records.sort_by_key(|r| (r.frame_index, r.rank, r.method));

    create_dir(&s.out_dir)?;
    let mut outputs = Outputs::default();
    write_csv(&mut outputs, s.out_dir.join("records.csv"), |f| Ok(write_records(f, &records)?))?;
    let averages = rank_averages(&records);
    write_csv(&mut outputs, s.out_dir.join("rank_averages.csv"), |f| Ok(write_rank_averages(f, &averages)?))?;
    let decomposition: Vec<EvalRecord> = records
        .iter()
        .filter(|r| matches!(r.method, Method::Convmf | Method::CalcU | Method::CalcV | Method::CalcSigma))
        .cloned()
        .collect();
    if !decomposition.is_empty() {
        write_csv(&mut outputs, s.out_dir.join("decomposition.csv"), |f| Ok(write_records(f, &decomposition)?))?;
    }
    for &rank in &s.ranks {
        for &method in &s.methods {
            let hist = loss_histogram(&records, rank, Some(method), s.bins)?;
            let path = s.out_dir.join(format!("histogram_rank{rank}_{method}.csv"));
            write_csv(&mut outputs, path, |f| Ok(write_histogram(f, &hist)?))?;
        }
    }
    let deficient = records.iter().filter(|r| r.rank_deficient).count();

    let mpath = outputs.claim(s.out_dir.join("evaluate.manifest.toml"));
    let mut man = manifest("evaluate", &s)?;
    if s.split.is_some() {
        man.seeds.insert("split".into(), s.seed);
    }
    man.outputs = outputs.names();
    man.outputs.pop();
    man.notes.insert("scaled_loss".into(), "squared Frobenius ratio |X - UV|^2 / |X|^2".into());
    man.notes.insert("frames".into(), frames.len().to_string());
    man.notes.insert("rank_deficient_repairs".into(), deficient.to_string());
    man.write(&mpath)?;
    outputs.commit();

    println!("{:>5} {:>11} {:>14} {:>6}", "rank", "method", "mean loss", "count");
    for a in &averages {
        println!("{:>5} {:>11} {:>14.6e} {:>6}", a.rank, a.method, a.mean_loss, a.count);
    }
    if deficient > 0 {
        eprintln!("note: {deficient} least-squares repairs were rank deficient (minimum-norm solution used)");
    }
    Ok(())
}
