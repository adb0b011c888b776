//! `nl2rl`: run trials, benches and reports from the command line.

mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "nl2rl",
    version,
    about = "Task description to MDP model, training code and scored policy"
)]
struct Cli {
    /// TOML config file; built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root for run directories (overrides the config).
    #[arg(long, global = true)]
    runs_dir: Option<PathBuf>,
    /// Runtime shim command, e.g. "python3 -m rl_runtime_kit.shim".
    #[arg(long, global = true)]
    shim: Option<String>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum EcFlag {
    Off,
    On,
    All,
}

#[derive(Args, Debug, Clone)]
struct BackendArgs {
    /// `live`, `replay:<dir>` or `scripted:<dir>[,<dir>...]`.
    #[arg(long, default_value = "live")]
    backend: String,
    /// Self-check mode for IR stages.
    #[arg(long, value_enum)]
    ec: Option<EcFlag>,
    /// `auto`, `park`, `interactive` or `prefilled:<text>`.
    #[arg(long, default_value = "auto")]
    clarifier: String,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one trial.
    Run {
        /// Bundled task id or path to a description file.
        task: String,
        #[command(flatten)]
        backend: BackendArgs,
        /// Write every exchange to this directory as replay fixtures.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Run N trials per task and write report files.
    Bench {
        /// Comma-separated task ids (default: config, else all bundled).
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
        #[arg(long)]
        trials: Option<u32>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[command(flatten)]
        backend: BackendArgs,
        /// Record fixtures under <dir>/<task>/trial-<k>.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Where report.md, report.csv and outcomes.json go.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "bench")]
        label: String,
    },
    /// Run one trial against recorded fixtures.
    Replay {
        /// Fixture directory of recorded exchanges.
        fixtures: PathBuf,
        /// Task id; defaults to the fixture directory name.
        #[arg(long)]
        task: Option<String>,
        #[arg(long, value_enum)]
        ec: Option<EcFlag>,
    },
    /// Print a run's record, one stage artifact, or a fresh validation.
    Inspect {
        /// Run directory or run id.
        run: String,
        #[arg(long)]
        stage: Option<String>,
        /// Rebuild the IR from the stored artifacts and validate it.
        #[arg(long)]
        validate: bool,
    },
    /// Aggregate finished trials into report tables.
    Report {
        /// Run directories or roots to search for them.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "report")]
        label: String,
    },
    /// Answer a parked clarification and resume the run.
    Clarify {
        /// Run directory or run id.
        run: String,
        #[arg(long)]
        answer: String,
        /// Only record the answer.
        #[arg(long)]
        no_resume: bool,
        /// Backend for the resumed stages (default: the one the run used).
        #[arg(long)]
        backend: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::code_for(&err))
        }
    }
}
