//! `gje`: run the generated-Jacobian toolkit from a JSON problem config.
//!
//! Exit codes: 0 success, 1 solver non-convergence (outputs still written),
//! 2 config error, 3 check failure under `--strict`, 4 any other error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Context, Overrides, Status};
use config::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] gje_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(gje_core::Error::MaxIterExceeded { .. } | gje_core::Error::Stalled { .. }) => 1,
            _ => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gje", version, about = "Generated-Jacobian equations: checks, semi-discrete solves, diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Problem config (schema gje-config/1).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the config's `output`, then `.`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Relative mass tolerance of the solver.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Cap on solver sweeps.
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit 3 when a check or diagnostic fails.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the structure conditions of the generator.
    Check,
    /// Solve the semi-discrete problem; writes heights.json, cells.csv, report.json.
    Solve,
    /// Measure of a piecewise function or a heights file.
    Measure {
        #[arg(long)]
        function: PathBuf,
    },
    /// Frame diagnostics at a base point.
    Transform {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y0: Option<Vec<f64>>,
    },
    /// Height flow trajectory.
    Flow,
    /// Compare two solved height files.
    Diagnose {
        #[arg(long, num_args = 2, value_names = ["FIRST", "SECOND"])]
        solutions: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<Status, CliError> {
    let path = cli.config.ok_or_else(|| ConfigError::Schema { path: "--config".into(), message: "a config file is required".into() })?;
    let config = config::load(&path)?;
    if let Some(n) = cli.threads {
        // fails only if a pool exists already, which is harmless here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let out = cli.out.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)?;
    let ctx = Context {
        config,
        out,
        overrides: Overrides { tol: cli.tol, max_iter: cli.max_iter, seed: cli.seed, strict: cli.strict },
    };
    match cli.command {
        Command::Check => commands::check(&ctx),
        Command::Solve => commands::solve(&ctx),
        Command::Measure { function } => commands::measure(&ctx, &function),
        Command::Transform { x0, y0 } => commands::transform(&ctx, x0, y0),
        Command::Flow => commands::flow(&ctx),
        Command::Diagnose { solutions } => commands::diagnose(&ctx, &solutions[0], &solutions[1]),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(1),
        Ok(Status::CheckFailed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("gje: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
