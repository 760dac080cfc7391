//! JSON checkpoints: architecture, parameter layout, values and the
//! optimiser state needed to resume training.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{FlowArchitecture, FlowModel};
use crate::error::{Error, Result};
use crate::nn::{LstmSpec, MlpSpec, ParamVector, Segment};
use crate::train::TrainState;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpecs {
    pub architecture: FlowArchitecture,
    pub encoder: MlpSpec,
    pub lstm: LstmSpec,
    pub decoder: MlpSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub system: Option<String>,
    pub dataset_seed: Option<u64>,
    pub train_seed: Option<u64>,
    /// Test-split loss of the freshly initialised model.
    pub initial_test_loss: Option<f64>,
    pub state: Option<TrainState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub specs: ModelSpecs,
    pub segments: Vec<Segment>,
    pub values: Vec<f64>,
    pub rng_seed: u64,
    pub training_meta: TrainingMeta,
}

impl Checkpoint {
    pub fn from_model(model: &FlowModel, rng_seed: u64, training_meta: TrainingMeta) -> Self {
        Self {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            specs: ModelSpecs {
                architecture: model.arch().clone(),
                encoder: model.encoder_spec().clone(),
                lstm: *model.lstm_spec(),
                decoder: model.decoder_spec().clone(),
            },
            segments: model.params().layout().to_vec(),
            values: model.params().values().to_vec(),
            rng_seed,
            training_meta,
        }
    }

    pub fn to_model(&self) -> Result<FlowModel> {
        if self.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "checkpoint schema {} is not supported (expected {CHECKPOINT_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let arch = self.specs.architecture.clone();
        if arch.encoder_spec()? != self.specs.encoder
            || arch.lstm_spec()? != self.specs.lstm
            || arch.decoder_spec()? != self.specs.decoder
        {
            return Err(Error::Format("checkpoint layer specs disagree with its architecture".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("checkpoint contains non-finite parameters".into()));
        }
        let params = ParamVector::from_parts(self.values.clone(), self.segments.clone())?;
        FlowModel::from_params(arch, params)
    }

    /// Checks that the model was built for data with these dimensions and period.
    pub fn check_compatible(&self, state_dim: usize, input_dim: usize, delta: f64) -> Result<()> {
        let a = &self.specs.architecture;
        if a.state_dim != state_dim || a.input_dim != input_dim {
            return Err(Error::Config(format!(
                "checkpoint is for state/input dims {}/{} but data has {state_dim}/{input_dim}",
                a.state_dim, a.input_dim
            )));
        }
        if ((a.delta - delta) / delta).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "checkpoint delta {} differs from data delta {delta}",
                a.delta
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FlowArchitecture {
        FlowArchitecture {
            state_dim: 2,
            input_dim: 1,
            delta: 0.2,
            lstm_hidden: 3,
            encoder_hidden: vec![4],
            decoder_hidden: vec![5],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let model = FlowModel::init(small(), 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        Checkpoint::from_model(&model, 11, TrainingMeta::default()).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap().to_model().unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_tampering() {
        let model = FlowModel::init(small(), 3).unwrap();
        let mut c = Checkpoint::from_model(&model, 3, TrainingMeta::default());
        c.values.pop();
        assert!(matches!(c.to_model(), Err(Error::Format(_))));

        let mut c = Checkpoint::from_model(&model, 3, TrainingMeta::default());
        c.schema_version = 7;
        assert!(matches!(c.to_model(), Err(Error::Format(_))));

        let mut c = Checkpoint::from_model(&model, 3, TrainingMeta::default());
        c.specs.architecture.lstm_hidden = 4;
        assert!(c.to_model().is_err());
    }

    #[test]
    fn compatibility() {
        let c = Checkpoint::from_model(&FlowModel::zeros(small()).unwrap(), 0, TrainingMeta::default());
        assert!(c.check_compatible(2, 1, 0.2).is_ok());
        assert!(matches!(c.check_compatible(2, 1, 0.1), Err(Error::Config(_))));
        assert!(matches!(c.check_compatible(3, 1, 0.2), Err(Error::Config(_))));
    }

    #[test]
    fn garbage_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"schema_version\": 1").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Format(_))));
    }
}
