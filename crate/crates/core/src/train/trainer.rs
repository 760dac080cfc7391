//! Minibatch Adam with plateau learning-rate reduction, early stopping and
//! best-validation model selection.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::empirical_loss;
use super::schedule::{EarlyStopping, PlateauScheduler};
use crate::data::{io::fmt_f64, Dataset, Split, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::nn::{AdamConfig, AdamState, Tape};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of (trajectory, time) samples per Adam step.
    pub batch_size: usize,
    pub initial_lr: f64,
    /// Multiplier applied to the learning rate on a plateau.
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub early_stop_tol: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Print a progress line to stderr every this many epochs; 0 is silent.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1024,
            initial_lr: 1e-2,
            lr_factor: 0.2,
            lr_patience: 5,
            early_stop_tol: 5e-4,
            early_stop_patience: 30,
            max_epochs: 1000,
            seed: 0,
            adam: AdamConfig::default(),
            log_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size >= 1
            && self.initial_lr > 0.0
            && self.lr_factor > 0.0
            && self.lr_factor < 1.0
            && self.lr_patience >= 1
            && self.early_stop_tol >= 0.0
            && self.early_stop_patience >= 1
            && self.max_epochs >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: Option<StopReason>,
    /// Index into `epochs` of the best validation loss.
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.best_epoch.map(|i| self.epochs[i].val_loss)
    }

    /// `epoch,train_loss,val_loss,lr`; wall-clock is left out so that reruns
    /// are byte-identical.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,lr\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch,
                fmt_f64(e.train_loss),
                fmt_f64(e.val_loss),
                fmt_f64(e.lr)
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Everything needed to continue an interrupted run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epochs_completed: usize,
    pub optimizer: AdamState,
    pub scheduler: PlateauScheduler,
    pub early_stop: EarlyStopping,
    pub best_val_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub stop_reason: Option<StopReason>,
}

impl TrainState {
    pub fn fresh(n_params: usize, cfg: &TrainConfig) -> Result<Self> {
        Ok(Self {
            epochs_completed: 0,
            optimizer: AdamState::new(n_params, cfg.initial_lr, cfg.adam)?,
            scheduler: PlateauScheduler::new(cfg.initial_lr, cfg.lr_factor, cfg.lr_patience),
            early_stop: EarlyStopping::new(cfg.early_stop_tol, cfg.early_stop_patience),
            best_val_loss: None,
            best_epoch: None,
            stop_reason: None,
        })
    }
}

/// A differentiable training problem over a flat parameter vector.
pub trait Objective {
    type Sample: Copy + Ord;

    fn train_samples(&self) -> Vec<Self::Sample>;

    /// Returns `scale * sum(sample losses)` over `batch` and adds its
    /// gradient into `grad`.
    fn batch_loss_grad(&self, params: &[f64], batch: &[Self::Sample], scale: f64, grad: &mut [f64]) -> Result<f64>;

    fn validation_loss(&mut self, params: &[f64]) -> Result<f64>;
}

/// Runs the training loop on `params`, leaving the best-validation
/// parameters in place.
pub fn fit<O: Objective>(
    objective: &mut O,
    params: &mut [f64],
    cfg: &TrainConfig,
    mut state: TrainState,
) -> Result<(TrainHistory, TrainState)> {
    cfg.validate()?;
    let mut samples = objective.train_samples();
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    let n_samples = samples.len();
    let mut history = TrainHistory::default();
    let mut best_params = params.to_vec();
    let mut grad = vec![0.0; params.len()];
    let mut batch_sorted = Vec::with_capacity(cfg.batch_size);

    let mut stop = None;
    for epoch in state.epochs_completed..cfg.max_epochs {
        let started = Instant::now();
        let lr = state.scheduler.lr;
        state.optimizer.lr = lr;
        // sorting first makes the shuffle independent of how samples were listed
        samples.sort_unstable();
        samples.shuffle(&mut rng::stream(cfg.seed.wrapping_add(epoch as u64), rng::SHUFFLE_STREAM));

        let mut train_total = 0.0;
        for batch in samples.chunks(cfg.batch_size) {
            batch_sorted.clear();
            batch_sorted.extend_from_slice(batch);
            batch_sorted.sort_unstable();
            grad.iter_mut().for_each(|g| *g = 0.0);
            let b = batch.len() as f64;
            let loss = objective.batch_loss_grad(params, &batch_sorted, 1.0 / b, &mut grad)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("batch loss {loss} in epoch {}", epoch + 1)));
            }
            state.optimizer.step(params, &grad)?;
            train_total += loss * b;
        }
        let train_loss = train_total / n_samples as f64;
        let val_loss = objective.validation_loss(params)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence(format!("validation loss {val_loss} in epoch {}", epoch + 1)));
        }
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            lr,
            seconds: started.elapsed().as_secs_f64(),
        });
        if cfg.log_every > 0 && (epoch + 1) % cfg.log_every == 0 {
            eprintln!(
                "epoch {:>4}  train {train_loss:.6}  val {val_loss:.6}  lr {lr:.2e}  {:.2}s",
                epoch + 1,
                started.elapsed().as_secs_f64()
            );
        }
        if state.best_val_loss.is_none_or(|b| val_loss < b) {
            state.best_val_loss = Some(val_loss);
            state.best_epoch = Some(epoch + 1);
            best_params.copy_from_slice(params);
        }
        state.epochs_completed = epoch + 1;
        let should_stop = state.early_stop.update(val_loss);
        state.scheduler.step(val_loss);
        if should_stop {
            stop = Some(StopReason::EarlyStopping);
            break;
        }
    }
    let reason = stop.unwrap_or(StopReason::MaxEpochs);
    state.stop_reason = Some(reason);
    history.stop_reason = Some(reason);
    history.best_epoch = state
        .best_epoch
        .and_then(|e| history.epochs.iter().position(|r| r.epoch == e));
    params.copy_from_slice(&best_params);
    Ok((history, state))
}

/// Flow-model training problem over the train/validation splits of a dataset.
pub struct FlowObjective<'d> {
    model: FlowModel,
    train: Vec<&'d TrajectoryRecord>,
    validation: Vec<&'d TrajectoryRecord>,
}

impl<'d> FlowObjective<'d> {
    pub fn new(model: FlowModel, dataset: &'d Dataset) -> Result<Self> {
        let train = dataset.split(Split::Train);
        let validation = dataset.split(Split::Validation);
        if train.is_empty() || validation.is_empty() {
            return Err(Error::Config("training needs non-empty train and validation splits".into()));
        }
        if dataset.state_dim != model.arch().state_dim || dataset.input_dim != model.arch().input_dim {
            return Err(Error::Config("dataset dimensions do not match the model".into()));
        }
        if (dataset.config.delta - model.arch().delta).abs() > 1e-12 * model.arch().delta {
            return Err(Error::Config(format!(
                "dataset period {} does not match the model period {}",
                dataset.config.delta,
                model.arch().delta
            )));
        }
        Ok(Self {
            model,
            train,
            validation,
        })
    }

    pub fn into_model(self) -> FlowModel {
        self.model
    }
}

impl Objective for FlowObjective<'_> {
    /// `(index into the train split, sample index)`.
    type Sample = (usize, usize);

    fn train_samples(&self) -> Vec<(usize, usize)> {
        self.train
            .iter()
            .enumerate()
            .flat_map(|(i, rec)| (0..rec.times.len()).map(move |k| (i, k)))
            .collect()
    }

    fn batch_loss_grad(&self, params: &[f64], batch: &[(usize, usize)], scale: f64, grad: &mut [f64]) -> Result<f64> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(traj, k) in batch {
            groups.entry(traj).or_default().push(k);
        }
        let mut total = 0.0;
        for (traj, ks) in groups {
            let rec = self.train[traj];
            let samples: Vec<(f64, &[f64])> = ks.iter().map(|&k| (rec.times[k], &rec.measurements[k][..])).collect();
            let mut tape = Tape::new(params);
            let loss = self.model.record_loss(&mut tape, &rec.x0, &rec.signal, &samples, scale)?;
            total += tape.value(loss)[0];
            tape.backward_into(loss, 1.0, grad)?;
        }
        Ok(total)
    }

    fn validation_loss(&mut self, params: &[f64]) -> Result<f64> {
        self.model.params_mut().values_mut().copy_from_slice(params);
        empirical_loss(&self.model, &self.validation)
    }
}

/// Result of [`train`]: the best-validation model and the run record.
pub struct TrainOutcome {
    pub model: FlowModel,
    pub history: TrainHistory,
    pub state: TrainState,
}

pub fn train(model: FlowModel, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let state = TrainState::fresh(model.param_count(), cfg)?;
    resume(model, dataset, cfg, state)
}

/// Continues training from `state` (e.g. restored from a checkpoint).
pub fn resume(model: FlowModel, dataset: &Dataset, cfg: &TrainConfig, state: TrainState) -> Result<TrainOutcome> {
    if state.optimizer.m.len() != model.param_count() {
        return Err(Error::shape("optimizer state", model.param_count(), state.optimizer.m.len()));
    }
    let mut params = model.params().values().to_vec();
    let mut objective = FlowObjective::new(model, dataset)?;
    let (history, state) = fit(&mut objective, &mut params, cfg, state)?;
    let mut model = objective.into_model();
    model.params_mut().values_mut().copy_from_slice(&params);
    Ok(TrainOutcome { model, history, state })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `mean_j (w - y_j)^2` with validation equal to the full-data loss.
    struct Quadratic {
        ys: Vec<f64>,
    }

    impl Objective for Quadratic {
        type Sample = usize;
        fn train_samples(&self) -> Vec<usize> {
            (0..self.ys.len()).collect()
        }
        fn batch_loss_grad(&self, p: &[f64], batch: &[usize], scale: f64, grad: &mut [f64]) -> Result<f64> {
            let mut l = 0.0;
            for &j in batch {
                let e = p[0] - self.ys[j];
                l += scale * e * e;
                grad[0] += scale * 2.0 * e;
            }
            Ok(l)
        }
        fn validation_loss(&mut self, p: &[f64]) -> Result<f64> {
            Ok(self.ys.iter().map(|y| (p[0] - y).powi(2)).sum::<f64>() / self.ys.len() as f64)
        }
    }

    /// Zero gradient and a constant validation loss.
    struct Flat;

    impl Objective for Flat {
        type Sample = usize;
        fn train_samples(&self) -> Vec<usize> {
            vec![0, 1, 2]
        }
        fn batch_loss_grad(&self, _: &[f64], _: &[usize], _: f64, _: &mut [f64]) -> Result<f64> {
            Ok(1.0)
        }
        fn validation_loss(&mut self, _: &[f64]) -> Result<f64> {
            Ok(0.25)
        }
    }

    #[test]
    fn quadratic_converges_to_mean() {
        let ys: Vec<f64> = (0..40).map(|i| 1.0 + 0.05 * i as f64).collect();
        let target = ys.iter().sum::<f64>() / ys.len() as f64;
        let cfg = TrainConfig {
            batch_size: 8,
            initial_lr: 0.1,
            max_epochs: 2000,
            ..TrainConfig::default()
        };
        let mut obj = Quadratic { ys };
        let mut w = vec![-3.0];
        let state = TrainState::fresh(1, &cfg).unwrap();
        let (hist, _) = fit(&mut obj, &mut w, &cfg, state).unwrap();
        // the stopping tolerance is on the loss, whose excess is (w - mean)^2
        assert!((w[0] - target).powi(2) < 2e-3, "w = {} target {target}", w[0]);
        assert_eq!(hist.stop_reason, Some(StopReason::EarlyStopping));
    }

    #[test]
    fn constant_validation_stops_after_patience() {
        let cfg = TrainConfig::default();
        let mut w = vec![0.0];
        let (hist, state) = fit(&mut Flat, &mut w, &cfg, TrainState::fresh(1, &cfg).unwrap()).unwrap();
        // first epoch sets the reference, then 30 stagnant epochs
        assert_eq!(hist.epochs.len(), 1 + cfg.early_stop_patience);
        assert_eq!(hist.stop_reason, Some(StopReason::EarlyStopping));
        assert_eq!(state.early_stop.stagnant, 30);
    }

    #[test]
    fn lr_trace_on_plateau() {
        let cfg = TrainConfig::default();
        let mut w = vec![0.0];
        let (hist, _) = fit(&mut Flat, &mut w, &cfg, TrainState::fresh(1, &cfg).unwrap()).unwrap();
        let lrs: Vec<f64> = hist.epochs.iter().map(|e| e.lr).collect();
        assert!(lrs[..6].iter().all(|&lr| lr == 1e-2));
        approx::assert_relative_eq!(lrs[6], 2e-3, max_relative = 1e-12);
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn max_epochs_bound() {
        let cfg = TrainConfig {
            max_epochs: 7,
            ..TrainConfig::default()
        };
        let mut w = vec![0.0];
        let (hist, _) = fit(&mut Flat, &mut w, &cfg, TrainState::fresh(1, &cfg).unwrap()).unwrap();
        assert_eq!(hist.epochs.len(), 7);
        assert_eq!(hist.stop_reason, Some(StopReason::MaxEpochs));
    }

    #[test]
    fn history_csv_layout() {
        let hist = TrainHistory {
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_loss: 0.25,
                lr: 0.01,
                seconds: 3.0,
            }],
            stop_reason: None,
            best_epoch: Some(0),
        };
        assert_eq!(hist.to_csv(), "epoch,train_loss,val_loss,lr\n1,0.5,0.25,0.01\n");
    }
}
