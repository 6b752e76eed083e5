//! Run configuration: a TOML file with `[data]`, `[train]`, `[deform]` and
//! `[output]` sections. Command-line flags override file values.

use std::path::{Path, PathBuf};

use deepmlp::mnist_io::{canonical_paths, data_dir_from_env, Split};
use deepmlp::{DeformParams, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory with the canonical MNIST file names.
    pub dir: Option<PathBuf>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Verbosity {
    Quiet,
    #[default]
    Normal,
    Verbose,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub verbosity: Verbosity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
    /// Overrides `train.deform` when present.
    pub deform: Option<DeformParams>,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, String> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| format!("{}: {e}", origin.display()))?;
        if let Some(d) = cfg.deform.take() {
            cfg.train.deform = d;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text, path)
    }
}

impl DataConfig {
    /// Flags win over file values; the directory falls back to the
    /// environment variable.
    pub fn merged(&self, flags: &DataConfig) -> DataConfig {
        DataConfig {
            dir: flags.dir.clone().or_else(|| self.dir.clone()).or_else(data_dir_from_env),
            train_images: flags.train_images.clone().or_else(|| self.train_images.clone()),
            train_labels: flags.train_labels.clone().or_else(|| self.train_labels.clone()),
            test_images: flags.test_images.clone().or_else(|| self.test_images.clone()),
            test_labels: flags.test_labels.clone().or_else(|| self.test_labels.clone()),
        }
    }

    /// Resolved (images, labels) paths for a split.
    pub fn paths(&self, split: Split) -> Result<(PathBuf, PathBuf), String> {
        let (img, lbl) = match split {
            Split::Train => (&self.train_images, &self.train_labels),
            Split::Test => (&self.test_images, &self.test_labels),
        };
        let canonical = self.dir.as_ref().map(|d| canonical_paths(d, split));
        let pick = |explicit: &Option<PathBuf>, which: usize, what: &str| {
            explicit
                .clone()
                .or_else(|| canonical.as_ref().map(|c| if which == 0 { c.0.clone() } else { c.1.clone() }))
                .ok_or_else(|| {
                    format!(
                        "no {what} path: pass --data-dir, set {} or give the file explicitly",
                        deepmlp::mnist_io::DATA_DIR_ENV
                    )
                })
        };
        let name = match split {
            Split::Train => "training",
            Split::Test => "test",
        };
        Ok((pick(img, 0, &format!("{name} images"))?, pick(lbl, 1, &format!("{name} labels"))?))
    }
}
