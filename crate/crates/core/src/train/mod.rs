//! Loss functions, the training loop and evaluation studies.

mod eval;
mod loss;
mod schedule;
mod trainer;

pub use eval::{
    estimate_loss_curve, quadrature_grid, time_averaged_loss, HorizonEstimate, LossEstimate, StudySetup,
};
pub use loss::{empirical_loss, trajectory_loss};
pub use schedule::{EarlyStopping, PlateauScheduler};
pub use trainer::{
    fit, resume, train, EpochRecord, FlowObjective, Objective, StopReason, TrainConfig, TrainHistory, TrainOutcome,
    TrainState,
};
