//! Command-line entry point: synthetic data generation, training,
//! evaluation, ensemble prediction, and the optimizer/benchmark sweeps.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
//! failure.

mod commands;
mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lesionnet::data::{EnsembleWeights, Modality, SyntheticConfig};
use lesionnet::error::Error;

use config::Overrides;

#[derive(Parser)]
#[command(
    name = "lesionnet",
    version,
    about = "Binary MRI lesion classifiers: EfficientNet-3D and Multiscale-EfficientNet"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset (four modalities per case + labels.csv).
    Synth {
        /// Number of cases (>= 4).
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        /// Lesion blob peak intensity; 0 removes the class signal.
        #[arg(long, default_value_t = 120.0)]
        amplitude: f64,
    },
    /// Train a classifier and write the best checkpoint plus history CSV.
    Train {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint: prints AUC and optionally writes per-case scores.
    Eval {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        /// Which cases to score: val, train, or all.
        #[arg(long, default_value = "val")]
        split: String,
        #[arg(long)]
        scores_out: Option<PathBuf>,
    },
    /// Ensemble four per-modality checkpoints into per-case probabilities.
    Predict {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        case_dir: PathBuf,
        /// Modality ratio over FLAIR:T1w:T1Gd:T2, e.g. 3:3:3:2 or 2:4:2:2.
        #[arg(long, default_value = "3:3:3:2")]
        ratio: String,
        #[arg(long)]
        ckpt_flair: Option<PathBuf>,
        #[arg(long)]
        ckpt_t1w: Option<PathBuf>,
        #[arg(long)]
        ckpt_t1gd: Option<PathBuf>,
        #[arg(long)]
        ckpt_t2: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the same model under all four optimizers and print the table.
    Sweep {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the 3D and multiscale models on the same split and print the table.
    Benchmark {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Model and training configuration shared by the run-style commands.
/// Precedence: defaults < --config file < flags < LESIONNET_SEED (seed only).
#[derive(Args, Clone)]
struct CommonFlags {
    /// Optional key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// eff3d or multiscale.
    #[arg(long)]
    model: Option<String>,
    /// b0, b7, or custom (with --width/--depth).
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    depth: Option<f64>,
    /// adam, sgd, rmsprop, or adadelta.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Modality feeding the 3D path: flair, t1w, t1gd, t2.
    #[arg(long)]
    modality: Option<String>,
    /// Slice window for the 2D path.
    #[arg(long)]
    window: Option<usize>,
    /// Disable the flip/rotation augmentation.
    #[arg(long)]
    no_augment: bool,
    /// Resize every slice to N x N before building samples.
    #[arg(long)]
    resize: Option<usize>,
}

impl CommonFlags {
    fn resolve(&self) -> Result<config::RunConfig, Error> {
        let mut from_file = Overrides::default();
        if let Some(path) = &self.config {
            from_file = Overrides::from_file(path)?;
        }
        let from_flags = Overrides {
            model: self.model.clone(),
            variant: self.variant.clone(),
            width: self.width,
            depth: self.depth,
            optimizer: self.optimizer.clone(),
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            seed: self.seed,
            modality: self.modality.clone(),
            window: self.window,
            augment: self.no_augment.then_some(false),
            resize: self.resize,
        };
        from_file.merge(from_flags).resolve()
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Synth {
            n,
            seed,
            out_dir,
            depth,
            height,
            width,
            amplitude,
        } => {
            let mut seed = seed;
            if let Ok(env_seed) = std::env::var(config::SEED_ENV) {
                seed = env_seed.parse().map_err(|_| {
                    Error::InvalidArgument(format!("bad {} value {env_seed:?}", config::SEED_ENV))
                })?;
            }
            let cfg = SyntheticConfig {
                n_cases: n,
                seed,
                depth,
                height,
                width,
                blob_amplitude: amplitude,
            };
            commands::cmd_synth(&cfg, &out_dir)
        }
        Cmd::Train {
            common,
            data_dir,
            out_dir,
        } => commands::cmd_train(&common.resolve()?, &data_dir, &out_dir),
        Cmd::Eval {
            common,
            checkpoint,
            data_dir,
            split,
            scores_out,
        } => commands::cmd_eval(
            &common.resolve()?,
            &checkpoint,
            &data_dir,
            &split,
            scores_out.as_deref(),
        ),
        Cmd::Predict {
            common,
            case_dir,
            ratio,
            ckpt_flair,
            ckpt_t1w,
            ckpt_t1gd,
            ckpt_t2,
            out,
        } => {
            let weights: EnsembleWeights = ratio.parse()?;
            let mut checkpoints = BTreeMap::new();
            for (modality, path) in [
                (Modality::Flair, ckpt_flair),
                (Modality::T1w, ckpt_t1w),
                (Modality::T1Gd, ckpt_t1gd),
                (Modality::T2, ckpt_t2),
            ] {
                if let Some(p) = path {
                    checkpoints.insert(modality, p);
                }
            }
            commands::cmd_predict(&common.resolve()?, &case_dir, &weights, &checkpoints, &out)
        }
        Cmd::Sweep {
            common,
            data_dir,
            out,
        } => commands::cmd_sweep(&common.resolve()?, &data_dir, out.as_deref()),
        Cmd::Benchmark {
            common,
            data_dir,
            out,
        } => commands::cmd_benchmark(&common.resolve()?, &data_dir, out.as_deref()),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => 1,
        Error::Numerical(_) | Error::Autodiff(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
