use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dailypnl::Date;
use dailypnl_cli::commands;
use dailypnl_cli::config::{parse_buckets, parse_top_fraction};
use dailypnl_cli::{CliError, RunConfig};

/// Daily FIFO PnL for wallet-token ledgers rebuilt from sparse balance snapshots.
#[derive(Debug, Parser)]
#[command(name = "dailypnl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write ledgers.csv and diagnostics.txt.
    Compute(DataArgs),
    /// Write summary.json and concentration.json (plus treasury.csv with treasury wallets).
    Report(DataArgs),
    /// Write dist.csv, the daily share of users per PnL bucket.
    Dist(DataArgs),
    /// Write benchmark.json with drawdowns and declines from the all-time high.
    Bench(DataArgs),
    /// Generate a synthetic scenario with oracle ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// End-of-day balances: date,wallet,account,token,balance
    #[arg(long)]
    balances: Option<PathBuf>,
    /// Price prints: timestamp,token,price
    #[arg(long)]
    prices: PathBuf,
    /// Per-token price caps: token,max_price
    #[arg(long)]
    caps: Option<PathBuf>,
    /// Platform grouping: kind,id,platform with kind `token` or `wallet`
    #[arg(long)]
    group: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Analysis end date (YYYY-MM-DD); later records are ignored
    #[arg(long)]
    snapshot: Option<Date>,
    /// Comma-separated bucket boundaries in USD
    #[arg(long, allow_hyphen_values = true)]
    buckets: Option<String>,
    /// Fraction of winners in the concentration top block
    #[arg(long, default_value = "0.01")]
    top_fraction: String,
    /// Benchmark token id for bench
    #[arg(long)]
    benchmark: Option<String>,
    /// Worker threads (0 = one per core)
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scenario parameters, flat key = value
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl DataArgs {
    fn into_config(self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::new(self.prices, self.out);
        cfg.balances = self.balances;
        cfg.caps = self.caps;
        cfg.group = self.group;
        cfg.snapshot = self.snapshot;
        if let Some(b) = &self.buckets {
            cfg.buckets = parse_buckets(b)?;
        }
        cfg.top_fraction = parse_top_fraction(&self.top_fraction)?;
        cfg.benchmark = self.benchmark;
        cfg.threads = self.threads;
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<String, CliError> {
    Ok(match command {
        Command::Compute(a) => {
            let s = commands::cmd_compute(&a.into_config()?)?;
            format!("{} ledgers, {} rows, {} diagnostics", s.ledgers, s.rows, s.diagnostics)
        }
        Command::Report(a) => {
            let s = commands::cmd_report(&a.into_config()?)?;
            format!("{} platforms, {} users", s.platforms, s.users)
        }
        Command::Dist(a) => format!("{} bucket rows", commands::cmd_dist(&a.into_config()?)?),
        Command::Bench(a) => format!("{} tokens compared", commands::cmd_bench(&a.into_config()?)?),
        Command::Synth(a) => format!("{} ledgers generated", commands::cmd_synth(&a.params, a.seed, &a.out)?),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(msg) => {
            eprintln!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
