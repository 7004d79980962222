use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use alloop_cli::experiment::Overrides;
use alloop_cli::{report, run_band_study, run_experiment, CliError, ExperimentSpec};
use alloop_core::engine::Strategy;
use clap::{Parser, Subcommand};

/// Pool-based active learning with a classifier committee.
#[derive(Debug, Parser)]
#[command(name = "alloop", version)]
struct Cli {
    /// Experiment spec (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides the spec's `out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Run a single seed instead of the spec's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only warnings and errors on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulated-oracle sessions for every (strategy, seed) pair.
    Run {
        #[arg(long)]
        rounds: Option<usize>,
        /// Repeatable; replaces the spec's strategy list.
        #[arg(long = "strategy")]
        strategies: Vec<Strategy>,
    },
    /// Train on uncertainty-percentile bands of the cohort.
    Bandstudy {
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Merge run histories into a long CSV and gnuplot data files.
    Report {
        /// Run directories or experiment output directories.
        dirs: Vec<PathBuf>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, env = "AL_ADDR", default_value = alloop_service::DEFAULT_ADDR)]
        addr: String,
        #[arg(long, env = "AL_DATA_DIR", default_value = alloop_service::DEFAULT_DATA_DIR)]
        data_dir: PathBuf,
    },
}

fn load_spec(
    cli: &Cli,
    rounds: Option<usize>,
    strategies: Vec<Strategy>,
) -> Result<ExperimentSpec, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut spec = ExperimentSpec::from_file(path)?;
    spec.apply(&Overrides {
        seed: cli.seed,
        rounds,
        strategies: (!strategies.is_empty()).then_some(strategies),
        out: cli.out.clone(),
    })?;
    Ok(spec)
}

fn serve(addr: &str, data_dir: PathBuf) -> Result<(), CliError> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Runtime(format!("bind {addr}: {e}")))?;
        let local = listener
            .local_addr()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        // Scripts read the bound address from the first stdout line.
        println!("listening on {local}");
        let _ = std::io::stdout().flush();
        alloop_service::serve_on(listener, &data_dir)
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run { rounds, strategies } => {
            let spec = load_spec(&cli, *rounds, strategies.clone())?;
            let outcome = run_experiment(&spec)?;
            if let Some(cmp) = &outcome.comparison {
                for row in cmp.rows.iter().filter(|r| r.strategy == cmp.treatment) {
                    log::info!(
                        "round {}: mean test AUC diff {:?}, {} better in {:?}/{} seeds",
                        row.round,
                        row.mean_diff,
                        cmp.treatment,
                        row.sign_count,
                        row.n_pairs
                    );
                }
            }
            Ok(())
        }
        Command::Bandstudy { rounds } => {
            let spec = load_spec(&cli, *rounds, Vec::new())?;
            run_band_study(&spec).map(|_| ())
        }
        Command::Report { dirs } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let rows = report(dirs, &out)?;
            log::info!(
                "{} rows written to {}",
                rows.len(),
                out.join("report.csv").display()
            );
            Ok(())
        }
        Command::Serve { addr, data_dir } => serve(addr, data_dir.clone()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
