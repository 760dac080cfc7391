use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::spikes::{activity_runs, agreement, classify_windows, detect_spikes, Activity, SpikeReport};
use crate::data::io::fmt_f64;
use crate::data::{generate_dataset, load_dataset, sample_initial, sample_input, save_dataset, Dataset, Split};
use crate::error::{Error, Result};
use crate::flow::{Checkpoint, FlowModel, FlowPredictor, SimulatedFlow, TrainingMeta};
use crate::ode::PwcSignal;
use crate::train::{
    empirical_loss, estimate_loss_curve, resume, train, trajectory_loss, HorizonEstimate,
    LossEstimate, StopReason, StudySetup, TrainHistory, TrainState,
};
use crate::rng;

/// Stream tag for `predict` draws, kept apart from the study streams.
const PREDICT_STREAM: u64 = 0x7072_6564;

pub fn dataset_dir(out: &Path) -> PathBuf {
    out.join("dataset")
}

pub fn checkpoint_path(out: &Path) -> PathBuf {
    out.join("checkpoint.json")
}

pub fn history_path(out: &Path) -> PathBuf {
    out.join("history.csv")
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn truth(cfg: &ExperimentConfig) -> Result<SimulatedFlow> {
    Ok(SimulatedFlow {
        system: cfg.dataset.system.build()?,
        solver: cfg.dataset.solver.clone(),
    })
}

/// Loads a checkpoint and checks it against the experiment's system.
pub fn load_model(cfg: &ExperimentConfig, path: &Path) -> Result<(FlowModel, Checkpoint)> {
    let ckpt = Checkpoint::load(path)?;
    let system = cfg.dataset.system.build()?;
    ckpt.check_compatible(system.state_dim, system.input_dim, cfg.dataset.delta)?;
    Ok((ckpt.to_model()?, ckpt))
}

fn dataset_from(cfg: &ExperimentConfig, out: &Path, dir: Option<&Path>) -> Result<Dataset> {
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| dataset_dir(out));
    let ds = load_dataset(&dir)?;
    if ((ds.config.delta - cfg.model.delta) / cfg.model.delta).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "dataset in {} has delta {} but the model uses {}",
            dir.display(),
            ds.config.delta,
            cfg.model.delta
        )));
    }
    Ok(ds)
}

/// Generates the dataset described by `cfg` into `<out>/dataset`.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<Dataset> {
    cfg.validate()?;
    create_dir(out)?;
    let ds = generate_dataset(&cfg.dataset_config())?;
    save_dataset(&ds, &dataset_dir(out))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    Ok(ds)
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub data_dir: Option<PathBuf>,
    /// Continue from `<out>/checkpoint.json` instead of a fresh model.
    pub resume: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub initial_test_loss: f64,
    pub test_loss: f64,
    pub best_val_loss: Option<f64>,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub stop_reason: Option<StopReason>,
    pub seconds: f64,
}

pub struct TrainReport {
    pub model: FlowModel,
    pub history: TrainHistory,
    pub state: TrainState,
    pub summary: TrainSummary,
}

/// Trains a model on `<out>/dataset` and writes `history.csv`,
/// `checkpoint.json` and `train_summary.json`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path, opts: &TrainOptions) -> Result<TrainReport> {
    cfg.validate()?;
    let ds = dataset_from(cfg, out, opts.data_dir.as_deref())?;
    let tcfg = cfg.train_config();
    let test = ds.split(Split::Test);
    let started = Instant::now();

    let (outcome, initial_test_loss) = if opts.resume {
        let (model, ckpt) = load_model(cfg, &checkpoint_path(out))?;
        let state = ckpt
            .training_meta
            .state
            .ok_or_else(|| Error::Config("checkpoint carries no training state to resume".into()))?;
        if state.stop_reason == Some(StopReason::EarlyStopping) {
            eprintln!("training already stopped early at epoch {}; nothing to resume", state.epochs_completed);
        }
        let initial = ckpt.training_meta.initial_test_loss;
        (resume(model, &ds, &tcfg, state)?, initial)
    } else {
        let model = FlowModel::init(cfg.model.clone(), tcfg.seed)?;
        let initial = if test.is_empty() {
            None
        } else {
            Some(empirical_loss(&model, &test)?)
        };
        (train(model, &ds, &tcfg)?, initial)
    };
    let test_loss = if test.is_empty() {
        f64::NAN
    } else {
        empirical_loss(&outcome.model, &test)?
    };

    create_dir(out)?;
    let history_file = history_path(out);
    if opts.resume && history_file.exists() {
        let mut text = std::fs::read_to_string(&history_file)?;
        text.extend(outcome.history.to_csv().lines().skip(1).map(|l| format!("{l}\n")));
        std::fs::write(&history_file, text)?;
    } else {
        outcome.history.write_csv(&history_file)?;
    }
    let meta = TrainingMeta {
        system: Some(cfg.dataset.system.name.clone()),
        dataset_seed: Some(ds.config.seed),
        train_seed: Some(tcfg.seed),
        initial_test_loss,
        state: Some(outcome.state.clone()),
    };
    Checkpoint::from_model(&outcome.model, tcfg.seed, meta).save(&checkpoint_path(out))?;

    let summary = TrainSummary {
        initial_test_loss: initial_test_loss.unwrap_or(f64::NAN),
        test_loss,
        best_val_loss: outcome.state.best_val_loss,
        epochs: outcome.state.epochs_completed,
        best_epoch: outcome.state.best_epoch,
        stop_reason: outcome.state.stop_reason,
        seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&out.join("train_summary.json"), &summary)?;
    Ok(TrainReport {
        model: outcome.model,
        history: outcome.history,
        state: outcome.state,
        summary,
    })
}

/// Truth and prediction sampled on a common grid.
pub struct Trace {
    pub times: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
    pub truth: Vec<Vec<f64>>,
    pub prediction: Vec<Vec<f64>>,
}

pub fn trace<P: FlowPredictor + ?Sized>(
    model: &P,
    truth: &SimulatedFlow,
    x0: &[f64],
    signal: &PwcSignal,
    times: Vec<f64>,
) -> Result<Trace> {
    let inputs = times
        .iter()
        .map(|&t| signal.eval(t).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    Ok(Trace {
        prediction: model.predict(&times, x0, signal)?,
        truth: truth.predict(&times, x0, signal)?,
        inputs,
        times,
    })
}

/// Uniform grid `j h`, `j = 0..ceil(horizon / h)`, stopping short of `horizon`.
fn trace_grid(horizon: f64, h: f64) -> Vec<f64> {
    let n = (horizon / h - 1e-9).ceil() as usize;
    (0..n).map(|j| j as f64 * h).collect()
}

fn trace_rows(id: usize, tr: &Trace, rows: &mut Vec<Vec<String>>) {
    for i in 0..tr.times.len() {
        let mut row = vec![id.to_string(), fmt_f64(tr.times[i])];
        row.extend(tr.inputs[i].iter().map(|&v| fmt_f64(v)));
        row.extend(tr.truth[i].iter().map(|&v| fmt_f64(v)));
        row.extend(tr.prediction[i].iter().map(|&v| fmt_f64(v)));
        rows.push(row);
    }
}

fn trace_header(input_dim: usize, state_dim: usize) -> Vec<String> {
    let mut h = vec!["traj_id".to_string(), "t".to_string()];
    h.extend(indexed("u", input_dim));
    h.extend(indexed("truth_x", state_dim));
    h.extend(indexed("pred_x", state_dim));
    h
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    pub checkpoint: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    /// Split to score; the test split when unset.
    pub split: Option<Split>,
    /// Also estimate `l_T` on this many fresh trajectories.
    pub fresh: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub split: &'static str,
    pub per_trajectory: Vec<(usize, f64)>,
    pub mean_loss: f64,
    pub fresh: Option<LossEstimate>,
}

/// Scores a checkpoint on a dataset split and writes paired truth and
/// prediction traces for plotting under `<out>/eval`.
pub fn cmd_eval(cfg: &ExperimentConfig, out: &Path, opts: &EvalOptions) -> Result<EvalReport> {
    cfg.validate()?;
    let ckpt = opts.checkpoint.clone().unwrap_or_else(|| checkpoint_path(out));
    let (model, _) = load_model(cfg, &ckpt)?;
    eval_with(cfg, out, &model, opts)
}

/// [`cmd_eval`] for any predictor, e.g. the simulator itself.
pub fn eval_with<P: FlowPredictor + ?Sized>(
    cfg: &ExperimentConfig,
    out: &Path,
    model: &P,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let ds = dataset_from(cfg, out, opts.data_dir.as_deref())?;
    let split = opts.split.unwrap_or(Split::Test);
    let records = ds.split(split);
    if records.is_empty() {
        return Err(Error::InvalidArgument(format!("split {} is empty", split.as_str())));
    }
    let truth = truth(cfg)?;
    let dir = out.join("eval");
    create_dir(&dir)?;

    let mut per_trajectory = Vec::with_capacity(records.len());
    let mut rows = Vec::new();
    for rec in &records {
        per_trajectory.push((rec.id, trajectory_loss(model, rec)?));
        let grid = trace_grid(ds.config.horizon, cfg.dataset.delta / 10.0);
        trace_rows(rec.id, &trace(model, &truth, &rec.x0, &rec.signal, grid)?, &mut rows);
    }
    let mean_loss = per_trajectory.iter().map(|p| p.1).sum::<f64>() / per_trajectory.len() as f64;
    write_csv(
        &dir.join("per_trajectory.csv"),
        &["traj_id".into(), "loss".into()],
        &per_trajectory
            .iter()
            .map(|(id, l)| vec![id.to_string(), fmt_f64(*l)])
            .collect::<Vec<_>>(),
    )?;
    write_csv(
        &dir.join("predictions.csv"),
        &trace_header(ds.input_dim, ds.state_dim),
        &rows,
    )?;

    let fresh = match opts.fresh {
        Some(n) => {
            let setup = StudySetup {
                truth: &truth,
                input: &cfg.dataset.input,
                delta: cfg.dataset.delta,
                n_traj: n,
                seed: cfg.train_seed(),
            };
            let est = estimate_loss_curve(model, &setup, &[cfg.dataset.horizon])?.remove(0).estimate;
            warn_undefined_ci(&est);
            Some(est)
        }
        None => None,
    };
    let report = EvalReport {
        split: split.as_str(),
        per_trajectory,
        mean_loss,
        fresh,
    };
    write_json(&dir.join("metrics.json"), &report)?;
    Ok(report)
}

fn warn_undefined_ci(e: &LossEstimate) {
    if e.n < 2 {
        eprintln!("warning: confidence interval undefined for n = {}", e.n);
    }
}

#[derive(Clone, Debug, Default)]
pub struct PredictOptions {
    pub checkpoint: Option<PathBuf>,
    pub n: Option<usize>,
    pub horizon: Option<f64>,
}

/// Predicts fresh trajectories on `[0, horizon]` and writes
/// `<out>/predict/predictions.csv`.
pub fn cmd_predict(cfg: &ExperimentConfig, out: &Path, opts: &PredictOptions) -> Result<Vec<Trace>> {
    cfg.validate()?;
    let ckpt = opts.checkpoint.clone().unwrap_or_else(|| checkpoint_path(out));
    let (model, _) = load_model(cfg, &ckpt)?;
    let truth = truth(cfg)?;
    let horizon = opts.horizon.unwrap_or_else(|| cfg.prediction_horizon());
    let n = opts.n.unwrap_or(cfg.study.n_predict);
    let seed = rng::derive(cfg.train_seed(), PREDICT_STREAM);
    let mut traces = Vec::with_capacity(n);
    let mut rows = Vec::new();
    for i in 0..n {
        let mut r = rng::stream(seed, i as u64);
        let x0 = sample_initial(&mut r, truth.system.state_dim);
        let signal = sample_input(&cfg.dataset.input, cfg.dataset.delta, horizon, &mut r)?;
        let tr = trace(&model, &truth, &x0, &signal, trace_grid(horizon, cfg.dataset.delta / 10.0))?;
        trace_rows(i, &tr, &mut rows);
        traces.push(tr);
    }
    let dir = out.join("predict");
    create_dir(&dir)?;
    write_csv(
        &dir.join("predictions.csv"),
        &trace_header(truth.system.input_dim, truth.system.state_dim),
        &rows,
    )?;
    Ok(traces)
}

#[derive(Clone, Debug, Default)]
pub struct StudyOptions {
    pub checkpoint: Option<PathBuf>,
    pub n: Option<usize>,
}

fn study_setup<'a>(cfg: &'a ExperimentConfig, truth: &'a SimulatedFlow, n: Option<usize>) -> StudySetup<'a> {
    StudySetup {
        truth,
        input: &cfg.dataset.input,
        delta: cfg.dataset.delta,
        n_traj: n.unwrap_or(cfg.study.n_traj),
        seed: cfg.train_seed(),
    }
}

/// `l_t` over the configured horizon grid, written to `<out>/loss_curve.csv`.
pub fn cmd_horizon_study(cfg: &ExperimentConfig, out: &Path, opts: &StudyOptions) -> Result<Vec<HorizonEstimate>> {
    cfg.validate()?;
    let ckpt = opts.checkpoint.clone().unwrap_or_else(|| checkpoint_path(out));
    let (model, _) = load_model(cfg, &ckpt)?;
    let truth = truth(cfg)?;
    let curve = estimate_loss_curve(&model, &study_setup(cfg, &truth, opts.n), &cfg.study.horizons.points())?;
    if let Some(first) = curve.first() {
        warn_undefined_ci(&first.estimate);
    }
    create_dir(out)?;
    write_csv(
        &out.join("loss_curve.csv"),
        &["t", "mean", "ci_lo", "ci_hi"].map(String::from),
        &curve
            .iter()
            .map(|h| {
                vec![
                    fmt_f64(h.t),
                    fmt_f64(h.estimate.mean),
                    fmt_f64(h.estimate.ci_lo()),
                    fmt_f64(h.estimate.ci_hi()),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    Ok(curve)
}

#[derive(Clone, Debug, Serialize)]
pub struct InputDistReport {
    pub primary: HorizonEstimate,
    pub alternative: HorizonEstimate,
}

/// `l_T` under the training input distribution and under the configured
/// alternative, one row per trajectory in `<out>/loss_dist.csv`.
pub fn cmd_input_dist_study(cfg: &ExperimentConfig, out: &Path, opts: &StudyOptions) -> Result<InputDistReport> {
    cfg.validate()?;
    let ckpt = opts.checkpoint.clone().unwrap_or_else(|| checkpoint_path(out));
    let (model, _) = load_model(cfg, &ckpt)?;
    let truth = truth(cfg)?;
    let t = cfg.dataset.horizon;
    let primary_setup = study_setup(cfg, &truth, opts.n);
    let alt_setup = StudySetup {
        input: &cfg.study.alt_input,
        ..primary_setup.clone()
    };
    let primary = estimate_loss_curve(&model, &primary_setup, &[t])?.remove(0);
    let alternative = estimate_loss_curve(&model, &alt_setup, &[t])?.remove(0);
    let mut rows = Vec::new();
    for (label, est) in [("primary", &primary), ("alternative", &alternative)] {
        for (i, l) in est.per_trajectory.iter().enumerate() {
            rows.push(vec![label.to_string(), i.to_string(), fmt_f64(*l)]);
        }
    }
    create_dir(out)?;
    write_csv(
        &out.join("loss_dist.csv"),
        &["distribution", "traj_id", "loss"].map(String::from),
        &rows,
    )?;
    let report = InputDistReport { primary, alternative };
    write_json(&out.join("loss_dist_summary.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExcitabilityReport {
    pub truth: SpikeReport,
    pub prediction: SpikeReport,
    pub agreement: f64,
    pub truth_pattern: Vec<Activity>,
    pub prediction_pattern: Vec<Activity>,
}

/// `(start, end, amplitude)` of one staircase step.
pub type Step = (f64, f64, f64);

/// The configured staircase as a signal plus its steps.
pub fn staircase(amplitudes: &[f64], hold: usize, delta: f64) -> Result<(PwcSignal, Vec<Step>)> {
    let values: Vec<f64> = amplitudes
        .iter()
        .flat_map(|&a| std::iter::repeat_n(a, hold))
        .collect();
    let period = hold as f64 * delta;
    let windows = amplitudes
        .iter()
        .enumerate()
        .map(|(i, &a)| (i as f64 * period, (i + 1) as f64 * period, a))
        .collect();
    Ok((PwcSignal::scalar(delta, values)?, windows))
}

/// Classifies every window of `windows` from the first state coordinate.
pub fn spike_report(
    times: &[f64],
    states: &[Vec<f64>],
    windows: &[Step],
    threshold: f64,
    min_separation: f64,
) -> Result<SpikeReport> {
    let x1: Vec<f64> = states.iter().map(|x| x[0]).collect();
    let spike_times = detect_spikes(times, &x1, threshold, min_separation)?;
    Ok(SpikeReport {
        threshold,
        min_separation,
        windows: classify_windows(&spike_times, windows),
        spike_times,
    })
}

/// Runs truth and model on the staircase input and compares the
/// resting/spiking class of every amplitude window.
pub fn cmd_excitability(cfg: &ExperimentConfig, out: &Path, opts: &StudyOptions) -> Result<ExcitabilityReport> {
    cfg.validate()?;
    let ckpt = opts.checkpoint.clone().unwrap_or_else(|| checkpoint_path(out));
    let (model, _) = load_model(cfg, &ckpt)?;
    excitability_with(cfg, out, &model)
}

pub fn excitability_with<P: FlowPredictor + ?Sized>(
    cfg: &ExperimentConfig,
    out: &Path,
    model: &P,
) -> Result<ExcitabilityReport> {
    let ex = cfg
        .excitability
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [excitability] section".into()))?;
    let truth = truth(cfg)?;
    let (signal, windows) = staircase(&ex.amplitudes, ex.hold, cfg.dataset.delta)?;
    let tr = trace(model, &truth, &ex.x0, &signal, trace_grid(signal.horizon(), cfg.dataset.delta / 10.0))?;
    let truth_report = spike_report(&tr.times, &tr.truth, &windows, ex.threshold, ex.min_separation)?;
    let pred_report = spike_report(&tr.times, &tr.prediction, &windows, ex.threshold, ex.min_separation)?;

    create_dir(out)?;
    let rows: Vec<Vec<String>> = truth_report
        .windows
        .iter()
        .zip(&pred_report.windows)
        .map(|(a, b)| {
            vec![
                fmt_f64(a.start),
                fmt_f64(a.end),
                fmt_f64(a.amplitude),
                a.class.as_str().to_string(),
                b.class.as_str().to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("spikes.csv"),
        &["window_start", "window_end", "amplitude", "truth_class", "pred_class"].map(String::from),
        &rows,
    )?;
    let mut trace_out = Vec::new();
    trace_rows(0, &tr, &mut trace_out);
    write_csv(
        &out.join("excitability_trace.csv"),
        &trace_header(truth.system.input_dim, truth.system.state_dim),
        &trace_out,
    )?;
    let report = ExcitabilityReport {
        agreement: agreement(&truth_report.windows, &pred_report.windows),
        truth_pattern: activity_runs(&truth_report.windows),
        prediction_pattern: activity_runs(&pred_report.windows),
        truth: truth_report,
        prediction: pred_report,
    };
    write_json(&out.join("excitability.json"), &report)?;
    Ok(report)
}
