//! Experiment drivers behind the command-line interface.

mod commands;
mod config;
mod spikes;

pub use commands::{
    checkpoint_path, cmd_eval, cmd_excitability, cmd_generate, cmd_horizon_study, cmd_input_dist_study, cmd_predict,
    cmd_train, dataset_dir, eval_with, excitability_with, history_path, load_model, spike_report, staircase, trace,
    truth, EvalOptions, EvalReport, ExcitabilityReport, InputDistReport, PredictOptions, StudyOptions, Trace,
    TrainOptions, TrainReport, TrainSummary,
};
pub use config::{ExcitabilityConfig, ExperimentConfig, Grid, StudyConfig};
pub use spikes::{activity_runs, agreement, classify_windows, detect_spikes, Activity, SpikeReport, Window};
