//! `flowctl`: drive reactance-control studies from the command line.
//!
//! A study runs in three stages over one output directory: `generate`
//! draws and filters a scenario dataset, `sitesize` picks controller
//! placements and recovers per-scenario reactance setpoints, and `steer`
//! evaluates how closely an AC operating point can track each target
//! flow pattern. `validate` is a standalone case-file check.
//!
//! Exit codes: 0 success, 1 usage error, 2 data fault (unreadable case,
//! missing or corrupt study files), 3 solver fault.

mod commands;
mod config;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "flowctl", version, about = "Power flow controllability studies")]
struct Cli {
    /// Worker threads for generation, siting and steering.
    /// Defaults to the available parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a case file and print its structural summary.
    Validate {
        /// Case file (MATPOWER `.m` or the native JSON form).
        #[arg(long)]
        case: PathBuf,
    },
    /// Draw, dispatch and filter scenarios into a study dataset.
    Generate {
        /// Case file (MATPOWER `.m` or the native JSON form).
        #[arg(long)]
        case: PathBuf,
        /// Seed for the scenario draw.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Scenarios to draw before filtering.
        #[arg(long)]
        scenarios: usize,
        /// Study directory to create or overwrite.
        #[arg(long)]
        out: PathBuf,
    },
    /// Site and size controllers over dataset prefixes.
    Sitesize {
        /// Study directory holding config.json and dataset.jsonl.
        #[arg(long)]
        out: PathBuf,
        /// Dataset prefix sizes, comma separated (default from config).
        #[arg(long, value_delimiter = ',')]
        sprime: Option<Vec<usize>>,
        /// Solve at this fixed budget instead of sweeping for the minimum.
        #[arg(long)]
        k: Option<usize>,
        /// Permit prefixes beyond the desk-scale cap of 200 scenarios.
        #[arg(long)]
        allow_large: bool,
    },
    /// Steer AC operating points toward each scenario's target flows.
    Steer {
        /// Study directory holding the dataset and siting outputs.
        #[arg(long)]
        out: PathBuf,
        /// Number of scenarios to steer, spread evenly across the dataset.
        #[arg(long)]
        sprime: Option<usize>,
        /// Tracking weights, comma separated; `inf` pins to the prior.
        #[arg(long, value_delimiter = ',')]
        w_grid: Option<Vec<String>>,
        /// Permit selections beyond the desk-scale cap of 200 scenarios.
        #[arg(long)]
        allow_large: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(1);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("the global worker pool is built once, before any parallel work");
    }

    let result = match cli.command {
        Command::Validate { case } => commands::validate(&case),
        Command::Generate {
            case,
            seed,
            scenarios,
            out,
        } => commands::generate(&case, seed, scenarios, &out),
        Command::Sitesize {
            out,
            sprime,
            k,
            allow_large,
        } => commands::sitesize(&out, sprime, k, allow_large),
        Command::Steer {
            out,
            sprime,
            w_grid,
            allow_large,
        } => commands::steer(&out, sprime, w_grid, allow_large),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_class(&err))
        }
    }
}

/// Maps every library error onto the documented exit-code classes.
fn exit_class(err: &flowctl_core::Error) -> u8 {
    use flowctl_core::Error::*;
    match err {
        Usage(_) => 1,
        Parse { .. } | Disconnected { .. } | NoSlack | MultipleSlack(_) | InvalidNetwork(_)
        | UnbalancedInjections { .. } | NotRealizable | EmptyDataset { .. }
        | SelectionOutOfRange { .. } | Io(_) | Json(_) => 2,
        SingularSystem | UnexpectedLpStatus { .. } | SolverFault(_) | JacobianMismatch { .. }
        | AcDiverged { .. } => 3,
    }
}
