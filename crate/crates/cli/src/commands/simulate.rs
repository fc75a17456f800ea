use std::f64::consts::PI;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use lrmf_core::vlasov::{run as run_solver, total_mass, write_series, InitialCondition, PhaseSpaceGrid};
use serde::{Deserialize, Serialize};

use crate::config::{manifest, manifest_path, merge_options, require, Outputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcName {
    LandauStrong,
    TwoStream,
    RandomSmooth,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Initial condition family.
    #[arg(long, value_enum)]
    pub ic: Option<IcName>,
    /// Spatial cells [default: 64].
    #[arg(long)]
    pub nx: Option<usize>,
    /// Velocity cells [default: 128].
    #[arg(long)]
    pub nv: Option<usize>,
    /// Time step [default: 0.05].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Number of solver steps [default: 100].
    #[arg(long)]
    pub steps: Option<usize>,
    /// Keep every n-th state [default: 1].
    #[arg(long)]
    pub record_every: Option<usize>,
    /// Perturbation amplitude (landau-strong 0.5, two-stream 0.05).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Perturbation wavenumber [default: 0.5].
    #[arg(long)]
    pub k: Option<f64>,
    /// Beam speed for two-stream [default: 2.4].
    #[arg(long)]
    pub v0: Option<f64>,
    /// Noise seed for random-smooth [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Smoothing width in cells for random-smooth [default: 4].
    #[arg(long)]
    pub smooth_scale: Option<f64>,
    /// Output VPTS file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

merge_options!(SimulateArgs { ic, nx, nv, dt, steps, record_every, alpha, k, v0, seed, smooth_scale, out });

#[derive(Debug, Serialize)]
struct Settings {
    ic: InitialCondition,
    nx: usize,
    nv: usize,
    dt: f64,
    steps: usize,
    record_every: usize,
    out: PathBuf,
}

fn resolve(a: SimulateArgs) -> anyhow::Result<Settings> {
    let name = require(a.ic, "ic")?;
    let family = name.to_possible_value().expect("no skipped variants");
    let ic = match InitialCondition::from_name(family.get_name())? {
        InitialCondition::LandauStrong { alpha, k } => InitialCondition::LandauStrong {
            alpha: a.alpha.unwrap_or(alpha),
            k: a.k.unwrap_or(k),
        },
        InitialCondition::TwoStream { alpha, k, v0 } => InitialCondition::TwoStream {
            alpha: a.alpha.unwrap_or(alpha),
            k: a.k.unwrap_or(k),
            v0: a.v0.unwrap_or(v0),
        },
        InitialCondition::RandomSmooth { seed, smooth_scale } => InitialCondition::RandomSmooth {
            seed: a.seed.unwrap_or(seed),
            smooth_scale: a.smooth_scale.unwrap_or(smooth_scale),
        },
    };
    Ok(Settings {
        ic,
        nx: a.nx.unwrap_or(64),
        nv: a.nv.unwrap_or(128),
        dt: a.dt.unwrap_or(0.05),
        steps: a.steps.unwrap_or(100),
        record_every: a.record_every.unwrap_or(1),
        out: require(a.out, "out")?,
    })
}

pub fn run(args: SimulateArgs) -> anyhow::Result<()> {
    let s = resolve(args)?;
    let grid = PhaseSpaceGrid::new(s.nx, s.nv, (0.0, 4.0 * PI), (-2.0 * PI, 2.0 * PI))?;
    let f0 = s.ic.sample(&grid).context("initial condition")?;
    let series = run_solver(&f0, &grid, s.dt, s.steps, s.record_every, s.ic.name()).context("solver failed")?;

    let mut outputs = Outputs::default();
    if let Some(dir) = s.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        crate::config::create_dir(dir)?;
    }
    let out = outputs.claim(&s.out);
    write_series(&out, &series).with_context(|| format!("writing {}", out.display()))?;
    let mpath = outputs.claim(manifest_path(&out));

    let m0 = total_mass(&series.frames[0], &grid);
    let drift = series
        .frames
        .iter()
        .map(|f| ((total_mass(f, &grid) - m0) / m0).abs())
        .fold(0.0, f64::max);
    let final_energy = *series.field_energy.last().unwrap();

    let mut m = manifest("simulate", &s)?;
    if let InitialCondition::RandomSmooth { seed, .. } = s.ic {
        m.seeds.insert("ic".into(), seed);
    }
    m.outputs = vec![out.display().to_string()];
    m.notes.insert("ic_name".into(), s.ic.name().into());
    m.notes.insert("frames".into(), series.len().to_string());
    m.write(&mpath)?;
    outputs.commit();

    println!("frames: {}", series.len());
    println!("max relative mass drift: {drift:.3e}");
    println!("final field energy: {final_energy:.6e}");
    println!("wrote {}", out.display());
    Ok(())
}
