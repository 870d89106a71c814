//! `nmt`: ingest data, pre-train, run the task loop, ablate similarity
//! metrics and merge reports.
//!
//! Exit codes: 0 success, 1 invalid configuration or arguments, 2 data or I/O
//! problems, 3 numeric failure (non-finite values).

mod commands;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nmt_core::similarity::SimilarityMetric;
use nmt_core::{Error, Exec, Result};

use spec::{load_file, parse_seeds, FileSpec, Overrides, RunSpec, SynthSpec};

#[derive(Parser, Debug)]
#[command(name = "nmt", version, about = "Growing multi-head demand forecaster")]
struct Cli {
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read a demand CSV and write a bank cache (`bank.jsonl`).
    Ingest {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a clustered synthetic bank (`bank.jsonl`, `labels.csv`).
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Pre-train the shared network once per seed.
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Full pipeline per seed, then cross-seed aggregation.
    Run {
        #[command(flatten)]
        common: Common,
        /// Reuse checkpoints written by `pretrain` instead of pre-training.
        #[arg(long, value_name = "DIR")]
        pretrained: Option<PathBuf>,
    },
    /// Every similarity metric on paired seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        pretrained: Option<PathBuf>,
    },
    /// Merge earlier `report.json` files into one table.
    Report {
        /// Report files or directories searched recursively.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Also write aggregate.csv, aggregate.json and table.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV file or bank cache.
    #[arg(long)]
    data: Option<PathBuf>,
    /// store-item or warehouse-product.
    #[arg(long)]
    schema: Option<String>,
    #[arg(long)]
    min_length: Option<usize>,
    /// Synthetic bank, e.g. `--synth clusters=3 tasks=60 len=60 noise=2 seed=0`.
    #[arg(long, num_args = 1.., value_name = "KEY=VALUE")]
    synth: Option<Vec<String>>,
    /// A count `n` (seeds 0..n) or a comma-separated list.
    #[arg(long, conflicts_with = "seed")]
    seeds: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// rand, medae, mgd or rmse.
    #[arg(long, value_parser = parse_metric)]
    sim: Option<SimilarityMetric>,
    /// Lag window length [default: 15].
    #[arg(long)]
    lag: Option<usize>,
    /// Selection holdout fraction [default: 0.2].
    #[arg(long)]
    holdout: Option<f64>,
    /// Z-score every task before training; errors are reported in original units.
    #[arg(long)]
    zscore: bool,
}

fn parse_metric(s: &str) -> std::result::Result<SimilarityMetric, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn resolve(self) -> Result<RunSpec> {
        let file = match &self.config {
            Some(p) => load_file(p)?,
            None => FileSpec::default(),
        };
        let seeds = match (self.seeds, self.seed) {
            (Some(s), _) => Some(parse_seeds(&s)?),
            (None, Some(s)) => Some(vec![s]),
            (None, None) => None,
        };
        let flags = Overrides {
            data: self.data,
            schema: self.schema,
            min_length: self.min_length,
            synth: self.synth.as_deref().map(SynthSpec::parse).transpose()?,
            seeds,
            sim: self.sim,
            lag: self.lag,
            holdout: self.holdout,
            zscore: self.zscore,
            out: self.out,
        };
        RunSpec::build(file, flags)
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Ingest { input, mut common } => {
            if common.data.is_some() || common.synth.is_some() {
                return Err(Error::config("data", "ingest takes its input as a positional argument"));
            }
            common.data = Some(input);
            let spec = common.resolve()?;
            if !matches!(spec.source, spec::Source::Csv { .. }) {
                return Err(Error::config("input", "expected a .csv file"));
            }
            commands::ingest(&spec, exec)
        }
        Command::Synth { common } => commands::synth(&common.resolve()?),
        Command::Pretrain { common } => commands::pretrain(&common.resolve()?, exec),
        Command::Run { common, pretrained } => commands::run(&common.resolve()?, pretrained.as_deref(), exec),
        Command::Ablate { common, pretrained } => {
            if common.sim.is_some() {
                return Err(Error::config("sim", "ablate always runs rand, medae, mgd and rmse"));
            }
            commands::ablation(&common.resolve()?, pretrained.as_deref(), exec)
        }
        Command::Report { paths, out } => commands::report(&paths, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
