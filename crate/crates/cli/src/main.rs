use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use netlab::lppl::Resampling;
use netlab::report::OutputFormat;

mod commands;
mod config;

/// Trade-network analytics and LPPL bubble indicators for token transfer data.
#[derive(Debug, Parser)]
#[command(name = "token-netlab", version, about, long_about = None)]
struct Cli {
    /// TOML file with run settings; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse input files and list rejected rows.
    Validate {
        #[command(flatten)]
        input: TransferArgs,
        #[arg(long, value_name = "PATH")]
        prices: Option<PathBuf>,
    },
    /// Reciprocity, assortativity, components and k-core statistics.
    GraphStats {
        #[command(flatten)]
        input: TransferArgs,
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long, value_name = "N")]
        kcore_k: Option<usize>,
        /// Also write a binary snapshot of the built graph.
        #[arg(long, value_name = "PATH")]
        snapshot: Option<PathBuf>,
    },
    /// Token holdings per address and the Zipf fit of the holding counts.
    Ownership {
        #[command(flatten)]
        input: TransferArgs,
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long, value_name = "N")]
        zipf_cutoff: Option<u64>,
    },
    /// ArticleRank scores joined with buy/sell activity.
    Influencers {
        #[command(flatten)]
        input: TransferArgs,
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long, value_name = "F")]
        damping: Option<f64>,
        /// Number of rows to emit.
        #[arg(long, value_name = "N")]
        top: Option<usize>,
    },
    /// Label-propagation communities as a node,community_id table.
    Communities {
        #[command(flatten)]
        input: TransferArgs,
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
    },
    /// Calibrate every shrinking window ending on one day.
    LpplFit {
        #[command(flatten)]
        prices: PriceArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Bubble indicators for every day in a date range.
    BubbleScan {
        #[command(flatten)]
        prices: PriceArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run everything and write report.json plus plot data into --out.
    Report {
        #[command(flatten)]
        input: TransferArgs,
        #[command(flatten)]
        prices: PriceArgs,
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long, value_name = "N")]
        zipf_cutoff: Option<u64>,
        #[arg(long, value_name = "N")]
        kcore_k: Option<usize>,
        #[arg(long, value_name = "F")]
        damping: Option<f64>,
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        #[arg(long, value_name = "N")]
        top: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct TransferArgs {
    #[arg(long, value_name = "PATH")]
    transfers: Option<PathBuf>,
    /// Fail on the first malformed row instead of skipping it.
    #[arg(long)]
    strict: bool,
    /// Keep mint and burn transfers (zero address) in the graph.
    #[arg(long)]
    include_mint_burn: bool,
}

#[derive(Debug, Args)]
struct PriceArgs {
    #[arg(long, value_name = "PATH")]
    prices: Option<PathBuf>,
    /// Widest window length in days.
    #[arg(long, value_name = "N")]
    window: Option<usize>,
    /// Shrinking step for the window start, in days.
    #[arg(long, value_name = "N")]
    step: Option<usize>,
    /// How weekly or sparse prices are filled to daily values: ffill or linear.
    #[arg(long, value_name = "METHOD")]
    resampling: Option<Resampling>,
    #[arg(long, value_name = "DATE")]
    from: Option<NaiveDate>,
    #[arg(long, value_name = "DATE")]
    to: Option<NaiveDate>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Directory for output files; stdout when omitted.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "json|csv")]
    format: Option<OutputFormat>,
}

/// Failure classes with distinct exit codes.
#[derive(Debug)]
enum Failure {
    /// Bad flags or settings: exit 2.
    Usage(String),
    /// Unreadable or invalid input data: exit 1.
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn configure_threads() -> CliResult {
    let Ok(raw) = std::env::var("TOKEN_NETLAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("TOKEN_NETLAB_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot size thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = configure_threads().and_then(|()| commands::run(cli));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        // A closed pipe on stdout (e.g. `| head`) is not worth reporting.
        Err(Failure::Data(e)) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    use std::io::ErrorKind::BrokenPipe;
    e.chain().any(|cause| {
        cause.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == BrokenPipe)
            || cause.downcast_ref::<serde_json::Error>().and_then(|j| j.io_error_kind()) == Some(BrokenPipe)
            || matches!(cause.downcast_ref::<csv::Error>().map(|c| c.kind()), Some(csv::ErrorKind::Io(io)) if io.kind() == BrokenPipe)
    })
}
