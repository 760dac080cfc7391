//! The flow-function approximator.
//!
//! A query `(s, x, u)` is turned into a token sequence `(u_k, tau_k)` by
//! [`discretize_time`]. The encoder maps `x` to the initial LSTM state, the
//! LSTM consumes the tokens, the last two hidden states are blended by
//! `tau`, and the decoder maps the blend back to state space.

mod checkpoint;
mod discretize;
mod model;

pub use checkpoint::{Checkpoint, ModelSpecs, TrainingMeta, CHECKPOINT_SCHEMA_VERSION};
pub use discretize::{discretize_time, split_time, DiscretizedQuery, Token};
pub use model::{interpolate_g, FlowArchitecture, FlowModel};

use crate::error::Result;
use crate::ode::{integrate, PwcSignal, SolverConfig, SystemDef};

/// Anything that predicts states along a trajectory: a trained model or
/// the simulator itself.
pub trait FlowPredictor {
    fn state_dim(&self) -> usize;

    /// States at each of `times` (sorted) from `x0` under `signal`.
    fn predict(&self, times: &[f64], x0: &[f64], signal: &PwcSignal) -> Result<Vec<Vec<f64>>>;
}

impl FlowPredictor for FlowModel {
    fn state_dim(&self) -> usize {
        self.arch().state_dim
    }

    fn predict(&self, times: &[f64], x0: &[f64], signal: &PwcSignal) -> Result<Vec<Vec<f64>>> {
        self.rollout(times, x0, signal)
    }
}

/// The true flow, evaluated by numerical integration.
#[derive(Clone, Debug)]
pub struct SimulatedFlow {
    pub system: SystemDef,
    pub solver: SolverConfig,
}

impl FlowPredictor for SimulatedFlow {
    fn state_dim(&self) -> usize {
        self.system.state_dim
    }

    fn predict(&self, times: &[f64], x0: &[f64], signal: &PwcSignal) -> Result<Vec<Vec<f64>>> {
        Ok(integrate(&self.system, x0, signal, times, &self.solver)?.states)
    }
}
