use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetConfig, InputDistribution};
use crate::error::{Error, Result};
use crate::flow::FlowArchitecture;
use crate::train::TrainConfig;

/// Everything one experiment needs, as read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Overrides the dataset, training and initialisation seeds when set.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub model: FlowArchitecture,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub excitability: Option<ExcitabilityConfig>,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

/// Evenly spaced values `start, start + step, ...` up to `stop` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub horizons: Grid,
    /// Fresh trajectories per estimate.
    pub n_traj: usize,
    /// Second input distribution for the input-distribution study.
    pub alt_input: InputDistribution,
    /// Horizon of the paired truth / prediction traces; the training
    /// horizon when unset.
    pub prediction_horizon: Option<f64>,
    /// Trajectories in a `predict` run.
    pub n_predict: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            horizons: Grid {
                start: 15.0,
                stop: 100.0,
                step: 5.0,
            },
            n_traj: 100,
            alt_input: InputDistribution::sine(),
            prediction_horizon: None,
            n_predict: 2,
        }
    }
}

/// Staircase input and spike detection settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitabilityConfig {
    /// Successive input levels, each held for `hold` control periods.
    pub amplitudes: Vec<f64>,
    #[serde(default = "default_hold")]
    pub hold: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
    pub x0: Vec<f64>,
}

fn default_hold() -> usize {
    40
}
fn default_threshold() -> f64 {
    0.8
}
fn default_min_separation() -> f64 {
    0.3
}

impl ExperimentConfig {
    /// Van der Pol experiment with the reference data, model and training settings.
    pub fn vdp() -> Self {
        Self {
            seed: None,
            out_dir: PathBuf::from("runs/vdp"),
            dataset: DatasetConfig::vdp_default(),
            model: FlowArchitecture::vdp_default(),
            train: TrainConfig::default(),
            study: StudyConfig::default(),
            excitability: None,
        }
    }

    /// FitzHugh-Nagumo experiment, including the excitability staircase.
    pub fn fhn() -> Self {
        Self {
            seed: None,
            out_dir: PathBuf::from("runs/fhn"),
            dataset: DatasetConfig::fhn_default(),
            model: FlowArchitecture::fhn_default(),
            train: TrainConfig {
                initial_lr: 2e-2,
                ..TrainConfig::default()
            },
            study: StudyConfig {
                prediction_horizon: Some(40.0),
                ..StudyConfig::default()
            },
            excitability: Some(ExcitabilityConfig {
                // the band at these parameters is roughly 0.195 < u < 0.235
                amplitudes: vec![0.3, 0.22, 0.21, 0.15, 0.1],
                hold: 80,
                threshold: default_threshold(),
                min_separation: default_min_separation(),
                x0: vec![0.647, 0.676],
            }),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Seed used for dataset generation.
    pub fn data_seed(&self) -> u64 {
        self.seed.unwrap_or(self.dataset.seed)
    }

    /// Seed used for initialisation, shuffling and fresh evaluation draws.
    pub fn train_seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    /// The dataset configuration with the effective seed applied.
    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            seed: self.data_seed(),
            ..self.dataset.clone()
        }
    }

    /// The training configuration with the effective seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.train_seed(),
            ..self.train.clone()
        }
    }

    pub fn prediction_horizon(&self) -> f64 {
        self.study.prediction_horizon.unwrap_or(self.dataset.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.dataset.system.build()?;
        self.train.validate()?;
        self.study.alt_input.validate()?;
        self.model.encoder_spec()?;
        self.model.lstm_spec()?;
        self.model.decoder_spec()?;
        if ((self.model.delta - self.dataset.delta) / self.dataset.delta).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "model delta {} differs from dataset delta {}",
                self.model.delta, self.dataset.delta
            )));
        }
        let g = &self.study.horizons;
        if !(g.start > 0.0 && g.step > 0.0 && g.stop >= g.start) {
            return Err(Error::Config(format!("invalid horizon grid {g:?}")));
        }
        if self.study.n_traj == 0 || self.prediction_horizon() <= 0.0 {
            return Err(Error::Config("study needs n_traj >= 1 and a positive horizon".into()));
        }
        if let Some(ex) = &self.excitability {
            if ex.amplitudes.is_empty() || ex.hold == 0 || !(ex.min_separation >= 0.0) {
                return Err(Error::Config("excitability needs amplitudes, hold >= 1 and min_separation >= 0".into()));
            }
            if ex.x0.len() != self.model.state_dim {
                return Err(Error::shape("excitability x0", self.model.state_dim, ex.x0.len()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points_include_stop() {
        let g = StudyConfig::default().horizons.points();
        assert_eq!(g.len(), 18);
        assert_eq!(g[0], 15.0);
        assert_eq!(*g.last().unwrap(), 100.0);
    }

    #[test]
    fn presets_round_trip_through_toml() {
        for cfg in [ExperimentConfig::vdp(), ExperimentConfig::fhn()] {
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn shipped_configs_match_presets() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
        assert_eq!(ExperimentConfig::load(&dir.join("vdp.toml")).unwrap(), ExperimentConfig::vdp());
        assert_eq!(ExperimentConfig::load(&dir.join("fhn.toml")).unwrap(), ExperimentConfig::fhn());
    }

    #[test]
    fn unknown_system_and_keys_are_config_errors() {
        let mut cfg = ExperimentConfig::vdp();
        cfg.dataset.system.name = "lorenz".into();
        let text = cfg.to_toml().unwrap();
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))));

        let text = format!("{}\nbogus = 1\n", ExperimentConfig::vdp().to_toml().unwrap());
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn seed_override() {
        let mut cfg = ExperimentConfig::vdp();
        assert_eq!(cfg.data_seed(), 0);
        cfg.seed = Some(42);
        assert_eq!(cfg.dataset_config().seed, 42);
        assert_eq!(cfg.train_config().seed, 42);
    }
}
