//! Where every artifact lives under the output directory, plus small
//! persistence helpers shared by the commands.

use std::fs;
use std::path::{Path, PathBuf};

use forecastad::data::format::{write_atomic, MANIFEST_FILE};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn raw(&self) -> PathBuf {
        self.root.join("data/raw")
    }

    pub fn labelled(&self) -> PathBuf {
        self.root.join("data/labelled")
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("data/split")
    }

    pub fn label_report(&self) -> PathBuf {
        self.labelled().join("label_report.json")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.models().join(format!("seed-{seed}"))
    }

    pub fn pretrained(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("pretrain.fckp")
    }

    pub fn forecaster(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("forecast.fckp")
    }

    pub fn ablation_checkpoint(&self, seed: u64, sweep: &str, variant: &str) -> PathBuf {
        self.seed_dir(seed).join("ablate").join(format!("{sweep}-{variant}.fckp"))
    }

    pub fn scores(&self) -> PathBuf {
        self.root.join("scores")
    }

    pub fn score_csv(&self, detector: &str, seed: u64) -> PathBuf {
        self.scores().join(detector).join(format!("seed-{seed}.csv"))
    }

    pub fn maps(&self, seed: u64) -> PathBuf {
        self.scores().join("maps").join(format!("seed-{seed}"))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn ablation(&self, sweep: &str) -> PathBuf {
        self.root.join("ablation").join(sweep)
    }

    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }

    pub fn cleaning(&self) -> PathBuf {
        self.root.join("cleaning")
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    write_atomic(path, bytes)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

/// Writes the resolved config into `dir` and, as the default for later
/// commands, into the output root.
pub fn record_config(cfg: &ExperimentConfig, dir: &Path) -> CliResult<()> {
    let text = cfg.to_json();
    write_bytes(&dir.join(CONFIG_FILE), text.as_bytes())?;
    write_bytes(&cfg.out_dir.join(CONFIG_FILE), text.as_bytes())
}

/// Fails with the name of the command that produces `path` when it is absent.
pub fn require(path: &Path, what: &'static str, producer: &'static str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing { what, path: path.to_path_buf(), producer })
    }
}

pub fn require_dataset(dir: &Path, what: &'static str, producer: &'static str) -> CliResult<()> {
    require(&dir.join(MANIFEST_FILE), what, producer)
}
