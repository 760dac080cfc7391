use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use flowlearn::data::Split;
use flowlearn::experiments::{
    cmd_eval, cmd_excitability, cmd_generate, cmd_horizon_study, cmd_input_dist_study, cmd_predict, cmd_train,
    EvalOptions, ExperimentConfig, PredictOptions, StudyOptions, TrainOptions,
};
use flowlearn::Result;

#[derive(Parser)]
#[command(name = "flowlearn", version, about = "Learn flow functions of controlled ODEs with an LSTM model")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration used when --config is absent
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    /// Overrides every seed in the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory; defaults to out_dir from the configuration
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Vdp,
    Fhn,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories and write <out>/dataset
    Generate,
    /// Train on <out>/dataset, writing history.csv and checkpoint.json
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from <out>/checkpoint.json
        #[arg(long)]
        resume: bool,
    },
    /// Score a checkpoint on a dataset split
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Also estimate the loss on this many fresh trajectories
        #[arg(long)]
        fresh: Option<usize>,
    },
    /// Predict fresh trajectories and write paired truth/prediction traces
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Loss as a function of the prediction horizon
    HorizonStudy(StudyArgs),
    /// Loss under the training and the alternative input distribution
    InputDistStudy(StudyArgs),
    /// Resting/spiking classification on the staircase input
    Excitability {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Fresh trajectories per estimate
    #[arg(long)]
    n: Option<usize>,
}

impl From<StudyArgs> for StudyOptions {
    fn from(a: StudyArgs) -> Self {
        Self {
            checkpoint: a.checkpoint,
            n: a.n,
        }
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match (&g.config, g.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(Preset::Vdp)) => ExperimentConfig::vdp(),
        (None, Some(Preset::Fhn)) => ExperimentConfig::fhn(),
        (None, None) => {
            return Err(flowlearn::Error::Config("either --config or --preset is required".into()));
        }
    };
    if g.seed.is_some() {
        cfg.seed = g.seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    let out = cli.global.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    match cli.command {
        Command::Generate => {
            let ds = cmd_generate(&cfg, &out)?;
            println!(
                "wrote {} trajectories ({} train / {} validation / {} test) to {}",
                ds.trajectories.len(),
                ds.count(Split::Train),
                ds.count(Split::Validation),
                ds.count(Split::Test),
                out.join("dataset").display()
            );
        }
        Command::Train { data, resume } => {
            let mut cfg = cfg;
            if cfg.train.log_every == 0 {
                cfg.train.log_every = 1;
            }
            let r = cmd_train(&cfg, &out, &TrainOptions { data_dir: data, resume })?;
            let s = &r.summary;
            println!(
                "{} epochs ({:?}), best epoch {:?}, test loss {:.6} (initial {:.6}), {:.1}s",
                s.epochs, s.stop_reason, s.best_epoch, s.test_loss, s.initial_test_loss, s.seconds
            );
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            fresh,
        } => {
            let opts = EvalOptions {
                checkpoint,
                data_dir: data,
                split: Some(split.into()),
                fresh,
            };
            let r = cmd_eval(&cfg, &out, &opts)?;
            println!("{} split: mean loss {:.6} over {} trajectories", r.split, r.mean_loss, r.per_trajectory.len());
            if let Some(f) = r.fresh {
                println!("fresh draws: {:.6} +/- {:.6} (n = {})", f.mean, f.ci_half_width, f.n);
            }
        }
        Command::Predict { checkpoint, n, horizon } => {
            let traces = cmd_predict(&cfg, &out, &PredictOptions { checkpoint, n, horizon })?;
            println!("wrote {} traces to {}", traces.len(), out.join("predict").display());
        }
        Command::HorizonStudy(a) => {
            for h in cmd_horizon_study(&cfg, &out, &a.into())? {
                println!(
                    "t = {:>6.1}  loss {:.6}  [{:.6}, {:.6}]",
                    h.t,
                    h.estimate.mean,
                    h.estimate.ci_lo(),
                    h.estimate.ci_hi()
                );
            }
        }
        Command::InputDistStudy(a) => {
            let r = cmd_input_dist_study(&cfg, &out, &a.into())?;
            println!(
                "primary {:.6}  alternative {:.6}  ratio {:.3}",
                r.primary.estimate.mean,
                r.alternative.estimate.mean,
                r.alternative.estimate.mean / r.primary.estimate.mean
            );
        }
        Command::Excitability { checkpoint } => {
            let r = cmd_excitability(&cfg, &out, &StudyOptions { checkpoint, n: None })?;
            for (a, b) in r.truth.windows.iter().zip(&r.prediction.windows) {
                println!(
                    "[{:>5.1}, {:>5.1})  u = {:.3}  truth {:<8} model {}",
                    a.start,
                    a.end,
                    a.amplitude,
                    a.class.as_str(),
                    b.class.as_str()
                );
            }
            println!("agreement {:.3}", r.agreement);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
