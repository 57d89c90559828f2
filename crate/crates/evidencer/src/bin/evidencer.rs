use clap::{Parser, Subcommand};
use evidencer::cli::{
    cmd_compare, cmd_evidence, cmd_fit, cmd_replicate, cmd_simulate, RunConfig, RunReport,
};
use evidencer::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "evidencer",
    version,
    about = "Marginal likelihood estimation for latent-variable models: \
             MCMC + fitted importance proposals, with harmonic mean, Chib, \
             power posterior and reversible-jump baselines"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = library default); falls back to the
    /// EVIDENCER_THREADS environment variable.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print fully-resolved default configurations for every model kind
    /// and exit.
    #[arg(long)]
    print_defaults: bool,

    /// Also write tidy per-replicate CSVs for plotting.
    #[arg(long, global = true)]
    emit_plot_data: bool,

    /// On failure, print a machine-readable error JSON to stderr.
    #[arg(long, global = true)]
    json_errors: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset plus its generating-truth record.
    Simulate,
    /// Run posterior MCMC and persist the chain with summaries.
    Fit,
    /// Estimate the log marginal likelihood with one or more methods.
    Evidence,
    /// Estimate a Bayes factor between two models on shared data.
    Compare,
    /// Repeat an estimation R times with fresh seeds and tabulate spread.
    Replicate,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::EmptyAggregation | Error::TooFewSamples { .. } => 2,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::MalformedRecord { .. } => 4,
        _ => 3,
    }
}

fn run(cli: &Cli) -> Result<RunReport, Error> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut config = RunConfig::from_path(config_path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if cli.emit_plot_data {
        config.emit_plot_data = true;
    }
    let threads = cli
        .threads
        .or(if config.threads > 0 { Some(config.threads) } else { None })
        .or_else(|| {
            std::env::var("EVIDENCER_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }

    let command = cli
        .command
        .as_ref()
        .ok_or_else(|| Error::Config("a subcommand is required".into()))?;
    match command {
        Command::Simulate => cmd_simulate(&config),
        Command::Fit => cmd_fit(&config),
        Command::Evidence => cmd_evidence(&config),
        Command::Compare => cmd_compare(&config),
        Command::Replicate => cmd_replicate(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_defaults {
        println!(
            "{}",
            serde_json::to_string_pretty(&RunConfig::print_defaults())
                .expect("defaults serialize")
        );
        return ExitCode::SUCCESS;
    }
    match run(&cli) {
        Ok(report) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            ExitCode::SUCCESS
        }
        Err(err) => {
            let code = exit_code_for(&err);
            if cli.json_errors {
                eprintln!(
                    "{}",
                    serde_json::json!({"error": err.to_string(), "exit_code": code})
                );
            } else {
                eprintln!("error: {err}");
            }
            ExitCode::from(code)
        }
    }
}
