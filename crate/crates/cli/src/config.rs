//! Experiment configuration: profiles, JSON files and dotted-key overrides.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use forecastad::data::{CoreConfig, SetupTag};
use forecastad::label::LabelConfig;
use forecastad::model::{ModelSpec, TrainConfig};
use forecastad::simulate::SimConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "FORECASTAD_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Paper,
    /// Seconds-scale runs for tests and smoke checks.
    Tiny,
}

impl FromStr for Profile {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            "tiny" => Ok(Profile::Tiny),
            other => Err(CliError::config(format!("unknown profile `{other}` (desk, paper, tiny)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
            Profile::Tiny => "tiny",
        })
    }
}

/// Which labels the split and the metrics use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// Simulator ground truth carried in the day files.
    Truth,
    /// Output of the labelling rules.
    Rules,
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelSource::Truth => "truth",
            LabelSource::Rules => "rules",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub setup: SetupTag,
    /// Share of the all-normal days used for training; the rest is divided
    /// evenly between validation and test.
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { setup: SetupTag::Tr2, train_fraction: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub labels: LabelSource,
    /// One trained model per seed.
    pub seeds: Vec<u64>,
    /// Anomalous test samples rendered as anomaly-map panels per seed.
    pub map_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { labels: LabelSource::Truth, seeds: (0..5).collect(), map_samples: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblateConfig {
    /// Subset of `full, no_tau, no_delta, no_time, no_pretrain`.
    pub time_variants: Vec<String>,
    pub k_values: Vec<usize>,
    pub lstm_layers: Vec<usize>,
    pub latent_dims: Vec<usize>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            time_variants: ["full", "no_tau", "no_delta", "no_time", "no_pretrain"].map(String::from).to_vec(),
            k_values: vec![1, 5, 10, 20, 30, 40, 50, 60],
            lstm_layers: vec![1, 2, 4],
            latent_dims: vec![16, 32, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    /// Fixed distance threshold; `null` uses the leave-one-out percentile.
    pub threshold: Option<f64>,
    pub percentile: f64,
    /// Dataset directory holding the deployment days; `null` uses the test set.
    pub deployment_dir: Option<PathBuf>,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self { threshold: None, percentile: 99.0, deployment_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub profile: Profile,
    /// Root of every artifact; excluded from the config hash.
    pub out_dir: PathBuf,
    pub days: usize,
    pub sim: SimConfig,
    pub label: LabelConfig,
    pub split: SplitConfig,
    pub core: CoreConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablate: AblateConfig,
    pub cleaning: CleaningConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::profile(Profile::Desk)
    }
}

impl ExperimentConfig {
    pub fn profile(profile: Profile) -> Self {
        let base = Self {
            profile,
            out_dir: PathBuf::from("runs/desk"),
            days: 30,
            sim: SimConfig { clean_day_fraction: 0.5, cluster_persistence: 0.5, ..SimConfig::default() },
            label: LabelConfig::default(),
            split: SplitConfig::default(),
            core: CoreConfig::default(),
            model: ModelSpec::desk(),
            train: TrainConfig { batch_size: 32, pretrain_epochs: 10, train_epochs: 20, ..TrainConfig::default() },
            eval: EvalConfig::default(),
            ablate: AblateConfig::default(),
            cleaning: CleaningConfig::default(),
        };
        match profile {
            Profile::Desk => base,
            Profile::Paper => Self {
                out_dir: PathBuf::from("runs/paper"),
                model: ModelSpec::paper(),
                train: TrainConfig::default(),
                ..base
            },
            Profile::Tiny => Self {
                out_dir: PathBuf::from("runs/tiny"),
                days: 8,
                sim: SimConfig { height: 16, width: 16, day_length: 5400.0, ..base.sim },
                label: LabelConfig { min_day_samples: 10, ..base.label },
                core: CoreConfig { k: 4, ..base.core },
                model: ModelSpec::tiny(),
                train: TrainConfig { batch_size: 16, pretrain_epochs: 2, train_epochs: 2, ..base.train },
                eval: EvalConfig { seeds: vec![0], map_samples: 2, ..base.eval },
                ablate: AblateConfig {
                    k_values: vec![1, 4],
                    lstm_layers: vec![1, 2],
                    latent_dims: vec![8],
                    ..base.ablate
                },
                ..base
            },
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.days == 0 {
            return Err(CliError::config("days must be at least 1"));
        }
        if self.eval.seeds.is_empty() {
            return Err(CliError::config("eval.seeds must list at least one seed"));
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(CliError::config("split.train_fraction must lie in (0, 1)"));
        }
        self.sim.validate()?;
        self.label.validate()?;
        self.core.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON of everything except `out_dir`.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serialises");
        if let Value::Object(map) = &mut value {
            map.remove("out_dir");
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    /// Applies `key = value` pairs whose keys address existing fields by
    /// dotted path. Values are parsed as JSON when possible and taken as
    /// strings otherwise.
    pub fn with_overrides(self, overrides: &[(String, String)]) -> CliResult<Self> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut root = serde_json::to_value(&self).expect("config serialises");
        for (key, raw) in overrides {
            let slot = key.split('.').try_fold(&mut root, |node, part| match node {
                Value::Object(map) => map.get_mut(part),
                _ => None,
            });
            let slot = slot.ok_or_else(|| CliError::config(format!("unknown config key `{key}`")))?;
            *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        }
        serde_json::from_value(root).map_err(|e| CliError::config(format!("after overrides: {e}")))
    }

    /// Rebases the model seeds on `base`, keeping their count.
    pub fn with_seed(mut self, base: u64) -> Self {
        let n = self.eval.seeds.len() as u64;
        self.eval.seeds = (base..base + n).collect();
        self.train.seed = base;
        self
    }
}

/// Inputs to [`resolve`], mirroring the global command-line options.
#[derive(Debug, Clone, Default)]
pub struct ConfigSources {
    pub profile: Option<Profile>,
    pub config_file: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
    pub seed_env: Option<String>,
}

/// Layers profile defaults, a config file (explicit, or the one left in the
/// output directory by an earlier command), overrides and the seed variable.
pub fn resolve(sources: &ConfigSources) -> CliResult<ExperimentConfig> {
    let mut cfg = match &sources.config_file {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => {
            let profile = sources.profile.unwrap_or(Profile::Desk);
            let default_out = ExperimentConfig::profile(profile).out_dir;
            let previous = sources.out_dir.as_deref().unwrap_or(&default_out).join(crate::layout::CONFIG_FILE);
            match (previous.exists(), sources.profile) {
                (true, None) => ExperimentConfig::from_file(&previous)?,
                (true, Some(p)) => {
                    let prev = ExperimentConfig::from_file(&previous)?;
                    if prev.profile == p {
                        prev
                    } else {
                        ExperimentConfig::profile(p)
                    }
                }
                (false, _) => ExperimentConfig::profile(profile),
            }
        }
    };
    if let Some(out) = &sources.out_dir {
        cfg.out_dir = out.clone();
    }
    cfg = cfg.with_overrides(&sources.overrides)?;
    if let Some(raw) = &sources.seed_env {
        let base = raw
            .trim()
            .parse::<u64>()
            .map_err(|_| CliError::config(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
        cfg = cfg.with_seed(base);
    }
    cfg.validate()?;
    Ok(cfg)
}
