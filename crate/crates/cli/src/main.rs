//! `gridflow` — operator-facing command line for the ACOPF learning and
//! calibration pipeline: case inspection, dataset generation, training,
//! prediction, calibration, evaluation, and report emission.
//!
//! Exit codes: 0 on success, 1 on user error (bad arguments, missing or
//! malformed files), 2 on internal failure. Log verbosity is controlled by
//! the `GRIDFLOW_LOG` environment variable.

mod commands;
mod report;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gridflow", version, about = "AC optimal power flow learning and calibration toolkit")]
struct Cli {
    /// Worker threads for scenario-parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect and convert grid case files.
    Case {
        #[command(subcommand)]
        action: CaseAction,
    },
    /// Build the nodal admittance matrix and export its nonzero entries.
    Ybus {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a conventional power flow at the case operating data.
    Pf(PfArgs),
    /// Sample perturbed demand scenarios and label them with the reference solver.
    GenData(GenDataArgs),
    /// Train the physics-informed model on a labeled dataset.
    Train(TrainArgs),
    /// Export model predictions over the held-out scenarios.
    Predict(PredictArgs),
    /// Restore feasibility of model predictions with the calibration loop.
    Calibrate(CalibrateArgs),
    /// Evaluate a model against labels.
    Eval(EvalArgs),
    /// Run evaluation plus calibration and emit the full report artifacts.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum CaseAction {
    /// Parse and validate a case file, printing a summary line.
    Validate { path: PathBuf },
    /// Print the validated network in the native JSON schema.
    Show {
        path: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PfArgs {
    #[arg(long)]
    case: PathBuf,
    /// Demand to solve at: `nominal` or a scaling factor like `1.1`.
    #[arg(long, default_value = "nominal")]
    demand: String,
    /// Solver: newton or gauss.
    #[arg(long, default_value = "newton")]
    method: String,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    count: usize,
    /// Perturbation range as LO,HI multipliers of nominal demand.
    #[arg(long, default_value = "0.8,1.2")]
    range: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "physics", value_parser = parse_loss_mode)]
    loss_mode: gridflow_core::neural::LossMode,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 512)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Hidden layer widths, comma separated.
    #[arg(long, default_value = "512,256,128,64")]
    hidden: String,
    /// Halve the learning rate every this many epochs.
    #[arg(long, default_value_t = 100)]
    lr_decay_every: usize,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Which side of the dataset split to use: test, train, or all.
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    rho: f64,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    rho: f64,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
}

fn parse_loss_mode(s: &str) -> Result<gridflow_core::neural::LossMode, String> {
    match s {
        "physics" | "physics_informed" => Ok(gridflow_core::neural::LossMode::PhysicsInformed),
        "supervised" | "supervised_only" => Ok(gridflow_core::neural::LossMode::SupervisedOnly),
        other => Err(format!("unknown loss mode '{other}' (expected physics|supervised)")),
    }
}

/// A user-facing failure (exit 1) as opposed to an internal one (exit 2).
#[derive(Debug)]
pub struct UserError(pub String);

impl std::fmt::Display for UserError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UserError {}

pub fn user_error<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(anyhow::Error::new(UserError(msg.into())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRIDFLOW_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(user) = err.downcast_ref::<UserError>() {
                eprintln!("error: {user}");
                ExitCode::from(1)
            } else {
                eprintln!("internal error: {err:#}");
                ExitCode::from(2)
            }
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Case { action } => match action {
            CaseAction::Validate { path } => commands::case_validate(&path),
            CaseAction::Show { path, out } => commands::case_show(&path, out.as_deref()),
        },
        Command::Ybus { case, out } => commands::ybus(&case, out.as_deref()),
        Command::Pf(args) => commands::pf(&args),
        Command::GenData(args) => commands::gen_data(&args),
        Command::Train(args) => commands::train(&args),
        Command::Predict(args) => commands::predict(&args),
        Command::Calibrate(args) => commands::calibrate(&args),
        Command::Eval(args) => commands::eval(&args),
        Command::Report(args) => commands::report(&args),
    }
}
