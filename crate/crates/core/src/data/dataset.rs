use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::sampling::{latin_hypercube_times, sample_initial, sample_input, InputDistribution};
use crate::error::{Error, Result};
use crate::ode::{integrate, PwcSignal, SolverConfig, SystemConfig};
use crate::rng;

/// Redraws allowed per trajectory when integration fails.
const MAX_REDRAWS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub system: SystemConfig,
    pub n_trajectories: usize,
    pub samples_per_trajectory: usize,
    pub horizon: f64,
    pub delta: f64,
    pub noise_std: f64,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    pub input: InputDistribution,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_split() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

impl DatasetConfig {
    /// Van der Pol protocol: 30 trajectories of 200 samples on `[0, 15]`.
    pub fn vdp_default() -> Self {
        Self {
            system: SystemConfig::named("vdp"),
            n_trajectories: 30,
            samples_per_trajectory: 200,
            horizon: 15.0,
            delta: 0.2,
            noise_std: 0.1,
            split: default_split(),
            input: InputDistribution::vdp_square(),
            seed: 0,
            solver: SolverConfig::default(),
        }
    }

    /// FitzHugh-Nagumo protocol: 300 trajectories of 300 samples on `[0, 20]`.
    pub fn fhn_default() -> Self {
        Self {
            system: SystemConfig::named("fhn"),
            n_trajectories: 300,
            samples_per_trajectory: 300,
            horizon: 20.0,
            delta: 0.1,
            noise_std: 0.05,
            split: default_split(),
            input: InputDistribution::fhn_steps(),
            seed: 0,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trajectories == 0 || self.samples_per_trajectory == 0 {
            return Err(Error::Config("dataset needs at least one trajectory and one sample".into()));
        }
        if !(self.delta > 0.0) || !(self.horizon > self.delta) {
            return Err(Error::Config(format!(
                "need horizon > delta > 0, got horizon {} delta {}",
                self.horizon, self.delta
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if self.split.iter().any(|f| !(*f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must be >= 0 and sum to 1: {:?}", self.split)));
        }
        self.input.validate()?;
        self.solver.validate()?;
        self.system.build().map(|_| ())
    }

    /// Trajectory counts per split; rounding remainder goes to the test split.
    pub fn split_counts(&self) -> [usize; 3] {
        let n = self.n_trajectories;
        let train = ((self.split[0] * n as f64).round() as usize).min(n);
        let val = ((self.split[1] * n as f64).round() as usize).min(n - train);
        [train, val, n - train - val]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split `{other}`"))),
        }
    }
}

/// One noisy sampled trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub id: usize,
    pub x0: Vec<f64>,
    pub signal: PwcSignal,
    pub times: Vec<f64>,
    pub measurements: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub state_dim: usize,
    pub input_dim: usize,
    pub trajectories: Vec<TrajectoryRecord>,
    /// Split of each trajectory, indexed by trajectory id.
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn split(&self, which: Split) -> Vec<&TrajectoryRecord> {
        self.trajectories
            .iter()
            .filter(|t| self.splits[t.id] == which)
            .collect()
    }

    pub fn count(&self, which: Split) -> usize {
        self.splits.iter().filter(|&&s| s == which).count()
    }
}

/// Draws, integrates, perturbs and splits `cfg.n_trajectories` trajectories.
///
/// Trajectory `i` uses its own random stream, so the result is independent
/// of generation order.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    cfg.validate()?;
    let system = cfg.system.build()?;
    let noise = if cfg.noise_std > 0.0 {
        Some(Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };

    let mut trajectories = Vec::with_capacity(cfg.n_trajectories);
    for id in 0..cfg.n_trajectories {
        let mut r = rng::stream(cfg.seed, id as u64);
        let mut attempt = 0;
        let record = loop {
            let x0 = sample_initial(&mut r, system.state_dim);
            let signal = sample_input(&cfg.input, cfg.delta, cfg.horizon, &mut r)?;
            let times = latin_hypercube_times(cfg.samples_per_trajectory, cfg.horizon, &mut r);
            match integrate(&system, &x0, &signal, &times, &cfg.solver) {
                Ok(traj) => {
                    let measurements = traj
                        .states
                        .into_iter()
                        .map(|mut s| {
                            if let Some(n) = &noise {
                                s.iter_mut().for_each(|v| *v += n.sample(&mut r));
                            }
                            s
                        })
                        .collect();
                    break TrajectoryRecord {
                        id,
                        x0,
                        signal,
                        times,
                        measurements,
                    };
                }
                Err(e @ Error::Integration { .. }) => {
                    attempt += 1;
                    if attempt > MAX_REDRAWS {
                        return Err(e);
                    }
                    eprintln!("trajectory {id}: {e}; redrawing ({attempt}/{MAX_REDRAWS})");
                }
                Err(e) => return Err(e),
            }
        };
        trajectories.push(record);
    }

    let mut ids: Vec<usize> = (0..cfg.n_trajectories).collect();
    ids.shuffle(&mut rng::stream(cfg.seed, rng::SPLIT_STREAM));
    let [n_train, n_val, _] = cfg.split_counts();
    let mut splits = vec![Split::Test; cfg.n_trajectories];
    for (rank, &id) in ids.iter().enumerate() {
        splits[id] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }

    Ok(Dataset {
        config: cfg.clone(),
        state_dim: system.state_dim,
        input_dim: system.input_dim,
        trajectories,
        splits,
    })
}
