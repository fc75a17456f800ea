use std::fs::File;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use lrmf_core::convmf::load_checkpoint;
use lrmf_core::linalg::Matrix;
use lrmf_core::vlasov::read_series;
use serde::{Deserialize, Serialize};

use crate::config::{create_dir, manifest, merge_options, require, Outputs};

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportArgs {
    /// Input VPTS time series.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Frame indices to write [default: every frame].
    #[arg(long, value_delimiter = ',')]
    pub frames: Option<Vec<usize>>,
    /// Also write the network factors U and V of each exported frame.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory [default: export].
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

merge_options!(ExportArgs { data, frames, checkpoint, out_dir });

#[derive(Debug, Serialize)]
struct Settings {
    data: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    frames: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<PathBuf>,
    out_dir: PathBuf,
}

/// Row-per-line matrix CSV without a header.
fn write_matrix(path: &PathBuf, m: &Matrix) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(File::create(path)?);
    for i in 0..m.rows() {
        w.write_record((0..m.cols()).map(|j| format!("{:.16e}", m[(i, j)])))?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: ExportArgs) -> anyhow::Result<()> {
    let s = Settings {
        data: require(args.data, "data")?,
        frames: args.frames,
        checkpoint: args.checkpoint,
        out_dir: args.out_dir.unwrap_or_else(|| "export".into()),
    };
    let series = read_series(&s.data).with_context(|| format!("reading {}", s.data.display()))?;
    let frames = s.frames.clone().unwrap_or_else(|| (0..series.len()).collect());
    if let Some(&bad) = frames.iter().find(|&&i| i >= series.len()) {
        bail!("frame {bad} out of range; series has {} frames", series.len());
    }
    let model = match &s.checkpoint {
        Some(p) => Some(load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    if let Some(model) = &model {
        if model.input_shape != series.shape() {
            bail!("checkpoint expects {:?} frames, series has {:?}", model.input_shape, series.shape());
        }
    }

    create_dir(&s.out_dir)?;
    let mut outputs = Outputs::default();
    let energy = outputs.claim(s.out_dir.join("field_energy.csv"));
    let mut w = csv::Writer::from_writer(File::create(&energy)?);
    w.write_record(["frame_index", "time", "field_energy"])?;
    for (i, e) in series.field_energy.iter().enumerate() {
        w.write_record([i.to_string(), format!("{:.16e}", series.time(i)), format!("{e:.16e}")])?;
    }
    w.flush()?;
    drop(w);
    for &i in &frames {
        let path = outputs.claim(s.out_dir.join(format!("frame_{i:05}.csv")));
        write_matrix(&path, &series.frames[i])?;
        if let Some(model) = &model {
            let pair = model.forward(&series.frames[i])?;
            let path = outputs.claim(s.out_dir.join(format!("u_{i:05}.csv")));
            write_matrix(&path, &pair.u)?;
            let path = outputs.claim(s.out_dir.join(format!("v_{i:05}.csv")));
            write_matrix(&path, &pair.v)?;
        }
    }
    let mpath = outputs.claim(s.out_dir.join("export.manifest.toml"));
    let mut man = manifest("export", &s)?;
    man.outputs = outputs.names();
    man.outputs.pop();
    man.write(&mpath)?;
    outputs.commit();
    println!("wrote {} frames to {}", frames.len(), s.out_dir.display());
    Ok(())
}
