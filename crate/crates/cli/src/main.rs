//! Configuration-driven front end: one experiment per config file, outputs
//! written atomically with the effective configuration embedded. Exit codes:
//! 0 success, 2 configuration or usage error, 3 runtime error.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentKind;

#[derive(Parser)]
#[command(name = "cmjx", version, about = "Branching-process explosion analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed; overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker-thread cap; falls back to the CMJX_THREADS variable.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Grow truncated genealogies and record per-replica statistics.
    Simulate(CommonArgs),
    /// Iterate the smoothing transform to its fixed point.
    Iterate(CommonArgs),
    /// Evaluate analytic explosion criteria.
    Criteria(CommonArgs),
    /// Couple two intensities and check pathwise dominance.
    Compare(CommonArgs),
    /// Cross-validate environment survival analytically and by simulation.
    Gwve(CommonArgs),
    /// Tabulate the exact total-progeny law, optionally against Monte Carlo.
    Dwass(CommonArgs),
    /// Check a configuration without executing it.
    Validate(CommonArgs),
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

struct Failure {
    code: u8,
    message: String,
}

fn invalid(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        message: format!("{error:#}"),
    }
}

fn runtime(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message: format!("{error:#}"),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let (expected, args) = match cli.command {
        Command::Simulate(a) => (Some(ExperimentKind::Simulate), a),
        Command::Iterate(a) => (Some(ExperimentKind::Iterate), a),
        Command::Criteria(a) => (Some(ExperimentKind::Criteria), a),
        Command::Compare(a) => (Some(ExperimentKind::Compare), a),
        Command::Gwve(a) => (Some(ExperimentKind::Gwve), a),
        Command::Dwass(a) => (Some(ExperimentKind::Dwass), a),
        Command::Validate(a) => (None, a),
    };

    if let Some(n) = resolve_threads(&args).map_err(invalid)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| runtime(anyhow::anyhow!("cannot configure worker pool: {e}")))?;
    }

    let config = config::load(&args.config, args.seed, args.out.as_deref()).map_err(invalid)?;
    let report = config::validate(&config).map_err(invalid)?;

    let Some(kind) = expected else {
        let doc = serde_json::json!({
            "valid": true,
            "report": report,
            "effective_config": config,
        });
        let rendered = serde_json::to_string_pretty(&doc)
            .map_err(|e| runtime(anyhow::anyhow!("cannot render validation report: {e}")))?;
        print_stdout(&rendered)?;
        return Ok(());
    };
    if config.kind != kind {
        return Err(Failure {
            code: EXIT_VALIDATION,
            message: format!(
                "config kind {} does not match subcommand {}",
                config.kind.name(),
                kind.name()
            ),
        });
    }

    let artifacts = run::run(&config).map_err(runtime)?;
    let dir = PathBuf::from(&config.output.dir);
    let written = output::write_artifacts(&dir, &artifacts).map_err(runtime)?;
    for path in written {
        print_stdout(&format!("wrote {}", path.display()))?;
    }
    Ok(())
}

/// Writes a line to stdout; a closed pipe downstream is not an error.
fn print_stdout(line: &str) -> Result<(), Failure> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{line}") {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(runtime(anyhow::anyhow!("cannot write to stdout: {e}"))),
    }
}

fn resolve_threads(args: &CommonArgs) -> anyhow::Result<Option<usize>> {
    let requested = match args.threads {
        Some(n) => Some(n),
        None => match std::env::var("CMJX_THREADS") {
            Ok(raw) => Some(
                raw.trim()
                    .parse::<usize>()
                    .with_context(|| format!("CMJX_THREADS must be a positive integer, got {raw:?}"))?,
            ),
            Err(std::env::VarError::NotPresent) => None,
            Err(e) => anyhow::bail!("cannot read CMJX_THREADS: {e}"),
        },
    };
    if requested == Some(0) {
        anyhow::bail!("thread count must be positive");
    }
    Ok(requested)
}
