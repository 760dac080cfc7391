//! Ground-truth simulation of controlled ODE systems.

mod dopri;
mod signal;
mod systems;

pub use dopri::{integrate, DenseTrajectory, SolverConfig};
pub use signal::PwcSignal;
pub use systems::{fhn_rhs, vdp_rhs, FhnParams, SystemConfig, SystemDef, SystemKind};
