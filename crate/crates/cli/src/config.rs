use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lrmf_core::eval::Manifest;
use serde::{Deserialize, Serialize};

use crate::commands::{benchmark, evaluate, export, simulate, train};

/// Top-level config file. Every section is optional and mirrors the flags of
/// its subcommand.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub simulate: Option<simulate::SimulateArgs>,
    pub train: Option<train::TrainArgs>,
    pub evaluate: Option<evaluate::EvaluateArgs>,
    pub benchmark: Option<benchmark::BenchmarkArgs>,
    pub export: Option<export::ExportArgs>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Field-wise `flag.or(file)` for argument structs whose fields are all
/// `Option`s.
macro_rules! merge_options {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $ty {
            pub fn merged(self, file: Option<Self>) -> Self {
                let file = file.unwrap_or_default();
                Self { $($field: self.$field.or(file.$field)),* }
            }
        }
    };
}
pub(crate) use merge_options;

/// Serializes the resolved settings of a command for its manifest.
pub fn config_table<T: Serialize>(settings: &T) -> anyhow::Result<toml::Table> {
    toml::Table::try_from(settings).context("serializing effective config")
}

pub fn manifest(command: &str, settings: &impl Serialize) -> anyhow::Result<Manifest> {
    Ok(Manifest::new(crate::VERSION, command, config_table(settings)?))
}

/// `path` with `.manifest.toml` appended to its file name.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.toml");
    path.with_file_name(name)
}

/// Files written by one invocation. Unless [`Outputs::commit`] is called,
/// dropping the tracker deletes them so a failed run leaves no partial
/// artifacts.
#[derive(Debug, Default)]
pub struct Outputs {
    paths: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn claim(&mut self, path: impl Into<PathBuf>) -> PathBuf {
        let path = path.into();
        self.paths.push(path.clone());
        path
    }

    pub fn names(&self) -> Vec<String> {
        self.paths.iter().map(|p| p.display().to_string()).collect()
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.paths {
                let _ = fs::remove_file(p);
            }
        }
    }
}

pub fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Worker pool sized by `LRMF_THREADS` (all cores when unset).
pub fn worker_pool() -> anyhow::Result<rayon::ThreadPool> {
    let threads = match std::env::var("LRMF_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => bail!("LRMF_THREADS must be a positive integer, got `{v}`"),
        },
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")
}

pub fn require<T>(value: Option<T>, flag: &str) -> anyhow::Result<T> {
    value.with_context(|| format!("missing required setting `{flag}` (flag or config file)"))
}

pub fn nonempty<T>(values: Vec<T>, what: &str) -> anyhow::Result<Vec<T>> {
    if values.is_empty() {
        bail!("{what} must not be empty");
    }
    Ok(values)
}

/// `5..30` style default rank sweep.
pub fn default_ranks() -> Vec<usize> {
    (5..=30).step_by(5).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_outputs_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        let keep = dir.path().join("keep.csv");
        let lose = dir.path().join("lose.csv");
        {
            let mut out = Outputs::default();
            fs::write(out.claim(&lose), "x").unwrap();
        }
        assert!(!lose.exists());
        let mut out = Outputs::default();
        fs::write(out.claim(&keep), "x").unwrap();
        out.commit();
        assert!(keep.exists());
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(manifest_path(Path::new("a/run.vpts")), Path::new("a/run.vpts.manifest.toml"));
    }

    #[test]
    fn config_sections_reject_unknown_keys() {
        assert!(toml::from_str::<ConfigFile>("[simulate]\nnxx = 3\n").is_err());
        assert!(toml::from_str::<ConfigFile>("[plot]\n").is_err());
        let cfg: ConfigFile = toml::from_str("[train]\nranks = [5, 12]\n[evaluate]\nmethods = [\"calc_v\"]\n").unwrap();
        assert_eq!(cfg.train.unwrap().ranks, Some(vec![5, 12]));
    }
}
