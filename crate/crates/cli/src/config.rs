//! Benchmark configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trb_core::metrics::HistogramSpec;
use trb_core::synth::GenConfig;
use trb_core::{ModelConfig, Perturbation, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cv,
    Recurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub kind: ModelKind,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ModelSpec {
    pub fn cv() -> Self {
        Self {
            name: "cv".into(),
            kind: ModelKind::Cv,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn recurrent(name: &str, env_aware: bool) -> Self {
        Self {
            name: name.into(),
            kind: ModelKind::Recurrent,
            model: ModelConfig {
                layers: 1,
                ..ModelConfig::desk(env_aware)
            },
            train: TrainConfig {
                epochs: 30,
                learning_rate: 3e-3,
                lr_decay: 0.92,
                ..TrainConfig::default()
            },
        }
    }

    pub fn trainable(&self) -> bool {
        self.kind == ModelKind::Recurrent
    }
}

/// Where train and test scenes come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum DataSource {
    /// Seeds inside the generator configs are replaced by seeds derived from the run seed.
    Generate { train: GenConfig, test: GenConfig },
    Files { train: PathBuf, test: PathBuf },
}

/// Which scene targets are scored and trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetFilter {
    #[default]
    All,
    Vehicles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Retrain every trainable model on each augmented dataset.
    pub retrain: bool,
    /// Start augmented training from the original-trained weights instead of from scratch.
    #[serde(default)]
    pub fine_tune: bool,
    #[serde(default)]
    pub target_filter: TargetFilter,
    #[serde(default = "default_horizon_steps")]
    pub horizon_steps: usize,
    #[serde(default)]
    pub histogram: HistogramSpec,
    pub perturbations: Vec<Perturbation>,
    pub data: DataSource,
    pub models: Vec<ModelSpec>,
}

fn default_horizon_steps() -> usize {
    80
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("bench-out"),
            retrain: true,
            fine_tune: false,
            target_filter: TargetFilter::All,
            horizon_steps: default_horizon_steps(),
            histogram: HistogramSpec::default(),
            perturbations: vec![
                Perturbation::RemoveRoad,
                Perturbation::late_detection(),
                Perturbation::heading_offset(),
            ],
            data: DataSource::Generate {
                train: GenConfig {
                    scenes: 2000,
                    id_prefix: "train-".into(),
                    ..GenConfig::default()
                },
                test: GenConfig {
                    scenes: 400,
                    id_prefix: "test-".into(),
                    ..GenConfig::default()
                },
            },
            models: vec![
                ModelSpec::cv(),
                ModelSpec::recurrent("recurrent", false),
                ModelSpec::recurrent("recurrent_env", true),
            ],
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.models.is_empty() {
            return Err(CliError::Config("model roster is empty".into()));
        }
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("model names must be unique".into()));
        }
        if self.horizon_steps == 0 {
            return Err(CliError::Config("horizon_steps must be positive".into()));
        }
        for m in &self.models {
            if m.name.is_empty() || m.name.contains(['/', '\\']) {
                return Err(CliError::Config(format!("bad model name {:?}", m.name)));
            }
            if m.trainable() {
                m.model.validate().map_err(|e| CliError::Config(format!("model {}: {e}", m.name)))?;
                m.train.validate().map_err(|e| CliError::Config(format!("model {}: {e}", m.name)))?;
                if m.model.future_len < self.horizon_steps {
                    return Err(CliError::Config(format!(
                        "model {} decodes {} steps but {} horizons are scored",
                        m.name, m.model.future_len, self.horizon_steps
                    )));
                }
            }
        }
        match &self.data {
            DataSource::Generate { train, test } => {
                train.validate().map_err(|e| CliError::Config(format!("train data: {e}")))?;
                test.validate().map_err(|e| CliError::Config(format!("test data: {e}")))?;
            }
            DataSource::Files { train, test } => {
                for p in [train, test] {
                    if !p.exists() {
                        return Err(CliError::Config(format!("scene file {} does not exist", p.display())));
                    }
                }
            }
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint of everything that affects results; the output directory does not.
    pub fn fingerprint(&self) -> String {
        let keyed = Self {
            out_dir: PathBuf::new(),
            ..self.clone()
        };
        let json = serde_json::to_vec(&keyed).expect("config is always serializable");
        format!("{:016x}", trb_core::rng::derive_seed(0, &[&json]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = BenchConfig::default();
        let back = BenchConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let text = r#"
seed = 3
out_dir = "x"
retrain = false
perturbations = [{ kind = "remove_road" }, { kind = "heading_offset" }]

[data]
source = "generate"
train = { scenes = 5 }
test = { scenes = 2 }

[[models]]
name = "cv"
kind = "cv"
"#;
        let cfg = BenchConfig::from_toml(text).unwrap();
        assert_eq!(cfg.perturbations[1], Perturbation::heading_offset());
        assert_eq!(cfg.horizon_steps, 80);
        match cfg.data {
            DataSource::Generate { train, .. } => assert_eq!(train.scenes, 5),
            _ => panic!(),
        }
    }

    #[test]
    fn empty_roster_is_a_config_error() {
        let cfg = BenchConfig {
            models: vec![],
            ..BenchConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}
