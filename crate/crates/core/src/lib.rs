//! Learning the flow function of continuous-time control systems from
//! sampled trajectories.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`]: parameter vectors, a reverse-mode tape, tanh MLPs, an LSTM cell
//!   and Adam.
//! * [`ode`]: piecewise-constant inputs, the Van der Pol and FitzHugh-Nagumo
//!   systems and a Dormand-Prince integrator that restarts at every control
//!   boundary.
//! * [`data`]: initial-state, input and sample-time distributions; dataset
//!   generation and the on-disk dataset layout.
//! * [`flow`]: the encoder / LSTM / decoder flow approximator and its
//!   checkpoint format.
//! * [`train`]: empirical loss, Adam training with plateau learning-rate
//!   reduction and early stopping, and horizon loss estimates.
//! * [`experiments`]: configuration, experiment drivers and spike analysis
//!   used by the `flowlearn` binary.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod nn;
pub mod ode;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
