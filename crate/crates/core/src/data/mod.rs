//! Trajectory datasets: sampling distributions, generation and storage.

mod dataset;
pub(crate) mod io;
mod sampling;

pub use dataset::{generate_dataset, Dataset, DatasetConfig, Split, TrajectoryRecord};
pub use io::{load_dataset, save_dataset, DATASET_SCHEMA_VERSION};
pub use sampling::{latin_hypercube_times, sample_initial, sample_input, signal_len, InputDistribution};
