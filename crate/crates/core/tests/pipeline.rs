use std::path::Path;

use flowlearn::data::{load_dataset, Split};
use flowlearn::experiments::{
    cmd_eval, cmd_generate, cmd_horizon_study, cmd_input_dist_study, cmd_predict, cmd_train, eval_with,
    excitability_with, history_path, truth, Activity, EvalOptions, ExcitabilityConfig, ExperimentConfig, Grid,
    PredictOptions, StudyOptions, TrainOptions,
};
use flowlearn::flow::{Checkpoint, FlowArchitecture, FlowModel};
use flowlearn::nn::{AdamState, Tape};
use flowlearn::train::{empirical_loss, time_averaged_loss};

fn tiny_vdp() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::vdp();
    cfg.dataset.n_trajectories = 10;
    cfg.dataset.samples_per_trajectory = 30;
    cfg.dataset.horizon = 3.0;
    cfg.model = FlowArchitecture {
        lstm_hidden: 4,
        encoder_hidden: vec![8],
        decoder_hidden: vec![8],
        ..FlowArchitecture::vdp_default()
    };
    cfg.train.batch_size = 64;
    cfg.train.max_epochs = 6;
    cfg.study.horizons = Grid {
        start: 1.0,
        stop: 3.0,
        step: 1.0,
    };
    cfg.study.n_traj = 4;
    cfg
}

fn trained(cfg: &ExperimentConfig, dir: &Path) {
    cmd_generate(cfg, dir).unwrap();
    cmd_train(cfg, dir, &TrainOptions::default()).unwrap();
}

#[test]
fn generate_writes_protocol_split() {
    let dir = tempfile::tempdir().unwrap();
    let ds = cmd_generate(&ExperimentConfig::vdp(), dir.path()).unwrap();
    assert_eq!(ds.trajectories.len(), 30);
    assert_eq!(
        [ds.count(Split::Train), ds.count(Split::Validation), ds.count(Split::Test)],
        [18, 6, 6]
    );
    assert_eq!(load_dataset(&dir.path().join("dataset")).unwrap(), ds);
}

#[test]
fn returned_model_has_the_best_validation_loss() {
    let cfg = tiny_vdp();
    let dir = tempfile::tempdir().unwrap();
    cmd_generate(&cfg, dir.path()).unwrap();
    let report = cmd_train(&cfg, dir.path(), &TrainOptions::default()).unwrap();
    let ds = load_dataset(&dir.path().join("dataset")).unwrap();
    let val = empirical_loss(&report.model, &ds.split(Split::Validation)).unwrap();
    let best = report.history.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(val, best);
    assert_eq!(report.history.best_val_loss(), Some(best));
}

#[test]
fn training_is_deterministic() {
    let cfg = tiny_vdp();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    trained(&cfg, a.path());
    trained(&cfg, b.path());
    assert_eq!(
        std::fs::read(history_path(a.path())).unwrap(),
        std::fs::read(history_path(b.path())).unwrap()
    );
    let ca = Checkpoint::load(&a.path().join("checkpoint.json")).unwrap();
    let cb = Checkpoint::load(&b.path().join("checkpoint.json")).unwrap();
    assert_eq!(ca.values, cb.values);
}

#[test]
fn resume_restores_parameters_and_optimiser() {
    let mut cfg = tiny_vdp();
    cfg.train.max_epochs = 3;
    let dir = tempfile::tempdir().unwrap();
    trained(&cfg, dir.path());
    let before = Checkpoint::load(&dir.path().join("checkpoint.json")).unwrap();
    let state = before.training_meta.state.clone().unwrap();
    assert_eq!(state.epochs_completed, 3);

    cfg.train.max_epochs = 5;
    let r = cmd_train(&cfg, dir.path(), &TrainOptions { data_dir: None, resume: true }).unwrap();
    assert_eq!(r.history.epochs.first().unwrap().epoch, 4);
    assert_eq!(r.state.epochs_completed, 5);
    // the same number of Adam steps in every epoch
    assert_eq!(r.state.optimizer.t, state.optimizer.t / 3 * 5);
    let csv = std::fs::read_to_string(history_path(dir.path())).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5);
}

#[test]
fn eval_aggregate_is_mean_of_rows_and_fresh_matches_horizon_study() {
    let cfg = tiny_vdp();
    let dir = tempfile::tempdir().unwrap();
    trained(&cfg, dir.path());
    let opts = EvalOptions {
        fresh: Some(4),
        ..EvalOptions::default()
    };
    let r = cmd_eval(&cfg, dir.path(), &opts).unwrap();
    let mean = r.per_trajectory.iter().map(|p| p.1).sum::<f64>() / r.per_trajectory.len() as f64;
    assert_eq!(r.mean_loss, mean);
    assert_eq!(r.per_trajectory.len(), 2);

    let rows = std::fs::read_to_string(dir.path().join("eval/per_trajectory.csv")).unwrap();
    assert_eq!(rows.lines().next(), Some("traj_id,loss"));
    assert_eq!(rows.lines().count(), 3);
    let preds = std::fs::read_to_string(dir.path().join("eval/predictions.csv")).unwrap();
    assert_eq!(preds.lines().next(), Some("traj_id,t,u1,truth_x1,truth_x2,pred_x1,pred_x2"));

    // t = T lies on the horizon grid, and draws are keyed by horizon
    let curve = cmd_horizon_study(&cfg, dir.path(), &StudyOptions::default()).unwrap();
    let at_t = curve.iter().find(|h| h.t == cfg.dataset.horizon).unwrap();
    assert_eq!(Some(&at_t.estimate), r.fresh.as_ref());
    let text = std::fs::read_to_string(dir.path().join("loss_curve.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("t,mean,ci_lo,ci_hi"));
    assert_eq!(text.lines().count(), 1 + 3);
}

#[test]
fn perfect_model_has_zero_fresh_loss() {
    let cfg = tiny_vdp();
    let dir = tempfile::tempdir().unwrap();
    cmd_generate(&cfg, dir.path()).unwrap();
    let simulator = truth(&cfg).unwrap();
    let opts = EvalOptions {
        fresh: Some(3),
        ..EvalOptions::default()
    };
    let r = eval_with(&cfg, dir.path(), &simulator, &opts).unwrap();
    assert_eq!(r.fresh.unwrap().mean, 0.0);
    // against noisy measurements the floor is the noise variance per coordinate
    assert!(r.mean_loss > 0.0 && r.mean_loss < 0.1);
}

#[test]
fn single_trajectory_study_has_undefined_interval() {
    let cfg = tiny_vdp();
    let dir = tempfile::tempdir().unwrap();
    trained(&cfg, dir.path());
    let curve = cmd_horizon_study(
        &cfg,
        dir.path(),
        &StudyOptions {
            checkpoint: None,
            n: Some(1),
        },
    )
    .unwrap();
    assert!(curve.iter().all(|h| h.estimate.ci_half_width.is_nan()));
}

#[test]
fn input_distribution_study_layout_and_identity() {
    let mut cfg = tiny_vdp();
    let dir = tempfile::tempdir().unwrap();
    trained(&cfg, dir.path());
    let r = cmd_input_dist_study(&cfg, dir.path(), &StudyOptions::default()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("loss_dist.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("distribution,traj_id,loss"));
    assert_eq!(text.lines().count(), 1 + 2 * cfg.study.n_traj);
    assert_ne!(r.primary.per_trajectory, r.alternative.per_trajectory);

    cfg.study.alt_input = cfg.dataset.input.clone();
    let same = cmd_input_dist_study(&cfg, dir.path(), &StudyOptions::default()).unwrap();
    assert_eq!(same.primary.per_trajectory, same.alternative.per_trajectory);
}

#[test]
fn predict_writes_requested_traces() {
    let cfg = tiny_vdp();
    let dir = tempfile::tempdir().unwrap();
    trained(&cfg, dir.path());
    let traces = cmd_predict(
        &cfg,
        dir.path(),
        &PredictOptions {
            checkpoint: None,
            n: Some(2),
            horizon: Some(5.0),
        },
    )
    .unwrap();
    assert_eq!(traces.len(), 2);
    // spacing delta / 10 on [0, 5)
    assert_eq!(traces[0].times.len(), 250);
    let text = std::fs::read_to_string(dir.path().join("predict/predictions.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 500);
}

#[test]
fn adam_and_gradient_steps_descend() {
    let cfg = tiny_vdp();
    let ds = flowlearn::data::generate_dataset(&cfg.dataset_config()).unwrap();
    let model = FlowModel::init(cfg.model.clone(), 3).unwrap();
    let rec = &ds.trajectories[0];
    let samples: Vec<(f64, &[f64])> = rec.times.iter().zip(&rec.measurements).map(|(t, m)| (*t, &m[..])).collect();
    let scale = 1.0 / samples.len() as f64;
    let loss_at = |p: &[f64]| -> (f64, Vec<f64>) {
        let mut tape = Tape::new(p);
        let l = model.record_loss(&mut tape, &rec.x0, &rec.signal, &samples, scale).unwrap();
        (tape.value(l)[0], tape.backward(l, 1.0).unwrap())
    };
    let p0 = model.params().values().to_vec();
    let (l0, g) = loss_at(&p0);
    let lr = 1e-7;

    let p1: Vec<f64> = p0.iter().zip(&g).map(|(p, g)| p - lr * g).collect();
    let predicted = -lr * g.iter().map(|g| g * g).sum::<f64>();
    approx::assert_relative_eq!(loss_at(&p1).0 - l0, predicted, max_relative = 1e-3);

    let mut p2 = p0.clone();
    let mut adam = AdamState::new(p0.len(), lr, Default::default()).unwrap();
    adam.step(&mut p2, &g).unwrap();
    let predicted: f64 = g.iter().zip(p2.iter().zip(&p0)).map(|(g, (a, b))| g * (a - b)).sum();
    assert!(predicted < 0.0);
    approx::assert_relative_eq!(loss_at(&p2).0 - l0, predicted, max_relative = 1e-2);
}

#[test]
fn quadrature_refinement_changes_loss_little() {
    let cfg = tiny_vdp();
    let ds = flowlearn::data::generate_dataset(&cfg.dataset_config()).unwrap();
    let model = FlowModel::init(cfg.model.clone(), 0).unwrap();
    let sim = truth(&cfg).unwrap();
    for rec in ds.trajectories.iter().take(3) {
        let coarse = time_averaged_loss(&model, &sim, &rec.x0, &rec.signal, 3.0, 0.02).unwrap();
        let fine = time_averaged_loss(&model, &sim, &rec.x0, &rec.signal, 3.0, 0.01).unwrap();
        assert!(((coarse - fine) / fine).abs() < 0.01, "{coarse} vs {fine}");
    }
}

fn fhn_with(amplitudes: Vec<f64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::fhn();
    let ex = cfg.excitability.take().unwrap();
    cfg.excitability = Some(ExcitabilityConfig { amplitudes, ..ex });
    cfg
}

#[test]
fn staircase_truth_traverses_the_band() {
    use Activity::{Resting as R, Spiking as S};
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::fhn();
    let sim = truth(&cfg).unwrap();
    let r = excitability_with(&cfg, dir.path(), &sim).unwrap();
    assert_eq!(r.truth_pattern, [R, S, R]);
    assert_eq!(r.agreement, 1.0);
    let text = std::fs::read_to_string(dir.path().join("spikes.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("window_start,window_end,amplitude,truth_class,pred_class"));

    let two = fhn_with(vec![0.3, 0.22, 0.3, 0.21, 0.1]);
    let r = excitability_with(&two, dir.path(), &sim).unwrap();
    assert_eq!(r.truth_pattern, [R, S, R, S, R]);

    let high = fhn_with(vec![0.45, 0.4, 0.35, 0.3]);
    let r = excitability_with(&high, dir.path(), &sim).unwrap();
    assert_eq!(r.truth_pattern, [R]);
}
