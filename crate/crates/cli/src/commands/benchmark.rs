use std::collections::BTreeMap;
use std::fs::File;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use lrmf_core::convmf::{load_checkpoint, ConvMfModel};
use lrmf_core::eval::{timing_benchmark, Method, TimingConfig, TimingRecord};
use lrmf_core::vlasov::read_series;
use serde::{Deserialize, Serialize};

use super::evaluate::scan_checkpoints;
use crate::config::{default_ranks, manifest, manifest_path, merge_options, nonempty, require, Outputs};

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkArgs {
    /// VPTS inputs; each distinct frame size becomes its own section.
    #[arg(long, num_args = 1..)]
    pub data: Option<Vec<PathBuf>>,
    /// Checkpoint directories searched for networks matching each size.
    #[arg(long, num_args = 1..)]
    pub checkpoints: Option<Vec<PathBuf>>,
    /// Ranks to time [default: 5,10,15,20,25,30].
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// Subset of convmf, svd_basic, svd_faster [default: all three with
    /// --checkpoints, else the two SVDs].
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Frame index timed in each series [default: middle frame].
    #[arg(long)]
    pub frame: Option<usize>,
    /// Untimed warmup runs [default: 3].
    #[arg(long)]
    pub warmup_runs: Option<usize>,
    /// Timed runs, median reported [default: 11].
    #[arg(long)]
    pub measured_runs: Option<usize>,
    /// Output CSV [default: timing.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

merge_options!(BenchmarkArgs { data, checkpoints, ranks, methods, frame, warmup_runs, measured_runs, out });

#[derive(Debug, Serialize)]
struct Settings {
    data: Vec<PathBuf>,
    checkpoints: Vec<PathBuf>,
    ranks: Vec<usize>,
    methods: Vec<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    frame: Option<usize>,
    warmup_runs: usize,
    measured_runs: usize,
    out: PathBuf,
}

fn resolve(a: BenchmarkArgs) -> anyhow::Result<Settings> {
    let checkpoints = a.checkpoints.unwrap_or_default();
    let methods = a.methods.unwrap_or_else(|| {
        let mut m = vec![Method::SvdBasic, Method::SvdFaster];
        if !checkpoints.is_empty() {
            m.insert(0, Method::Convmf);
        }
        m
    });
    let mut methods = nonempty(methods, "methods")?;
    methods.sort();
    methods.dedup();
    if let Some(m) = methods.iter().find(|m| !matches!(m, Method::Convmf | Method::SvdBasic | Method::SvdFaster)) {
        bail!("method {m} is not timed; choose from convmf, svd_basic, svd_faster");
    }
    let defaults = TimingConfig::default();
    Ok(Settings {
        data: nonempty(require(a.data, "data")?, "data")?,
        checkpoints,
        ranks: nonempty(a.ranks.unwrap_or_else(default_ranks), "ranks")?,
        methods,
        frame: a.frame,
        warmup_runs: a.warmup_runs.unwrap_or(defaults.warmup_runs),
        measured_runs: a.measured_runs.unwrap_or(defaults.measured_runs),
        out: a.out.unwrap_or_else(|| "timing.csv".into()),
    })
}

/// Networks of every rank in `dirs` whose input size is `shape`.
fn models_for_shape(dirs: &[PathBuf], shape: (usize, usize)) -> anyhow::Result<BTreeMap<usize, ConvMfModel>> {
    let mut out = BTreeMap::new();
    for dir in dirs {
        for (rank, path) in scan_checkpoints(dir)? {
            let model = load_checkpoint(&path).with_context(|| format!("loading {}", path.display()))?;
            if model.input_shape == shape {
                out.insert(rank, model);
            }
        }
    }
    Ok(out)
}

fn write_timings(path: &PathBuf, rows: &[(String, TimingRecord)]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["source", "m", "n", "rank", "method", "median_ns", "inner_iterations", "scaled_loss"])?;
    for (source, r) in rows {
        w.write_record([
            source.clone(),
            r.shape.0.to_string(),
            r.shape.1.to_string(),
            r.rank.to_string(),
            r.method.to_string(),
            format!("{:.1}", r.timing.median_ns),
            r.timing.inner_iterations.to_string(),
            format!("{:.16e}", r.scaled_loss),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs on the calling thread only; no worker pool is created.
pub fn run(args: BenchmarkArgs) -> anyhow::Result<()> {
    let s = resolve(args)?;
    let cfg = TimingConfig {
        warmup_runs: s.warmup_runs,
        measured_runs: s.measured_runs,
    };
    cfg.validate()?;
    eprintln!("note: timings assume an otherwise idle machine");
    let mut rows = Vec::new();
    for data in &s.data {
        let series = read_series(data).with_context(|| format!("reading {}", data.display()))?;
        let idx = s.frame.unwrap_or(series.len() / 2);
        let Some(x) = series.frames.get(idx) else {
            bail!("{} has {} frames; frame {idx} requested", data.display(), series.len());
        };
        let models = if s.methods.contains(&Method::Convmf) {
            models_for_shape(&s.checkpoints, series.shape())?
        } else {
            BTreeMap::new()
        };
        let records = timing_benchmark(x, &s.ranks, &s.methods, &models, &cfg)
            .with_context(|| format!("benchmarking {}", data.display()))?;
        let (m, n) = series.shape();
        println!("== {m}x{n} ({}, frame {idx}) ==", data.display());
        println!("{:>5} {:>11} {:>14} {:>6}", "rank", "method", "median ns", "inner");
        for r in &records {
            println!("{:>5} {:>11} {:>14.0} {:>6}", r.rank, r.method, r.timing.median_ns, r.timing.inner_iterations);
            if r.timing.inner_iterations > 1 {
                eprintln!(
                    "note: {m}x{n} rank {} {}: below timer resolution, each sample batches {} calls",
                    r.rank, r.method, r.timing.inner_iterations
                );
            }
        }
        rows.extend(records.into_iter().map(|r| (data.display().to_string(), r)));
    }

    let mut outputs = Outputs::default();
    if let Some(dir) = s.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        crate::config::create_dir(dir)?;
    }
    let out = outputs.claim(&s.out);
    write_timings(&out, &rows)?;
    let mpath = outputs.claim(manifest_path(&out));
    let mut man = manifest("benchmark", &s)?;
    man.outputs = vec![out.display().to_string()];
    man.notes.insert("threads".into(), "1".into());
    man.write(&mpath)?;
    outputs.commit();
    Ok(())
}
