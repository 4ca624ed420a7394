use std::path::PathBuf;
use std::process::ExitCode;

use aes_harness::bench::{bench_csv, run_bench};
use aes_harness::config::{parse_config, BenchSettings, ExperimentSpec, DEFAULT_WINDOW};
use aes_harness::metrics::{metrics_csv, read_trace};
use aes_harness::suite::{resolve_output, run_suite};
use aes_harness::verify::{run_all, CRITERIA};
use aes_harness::{HarnessError, Result};
use clap::{Parser, Subcommand};

/// Adaptive experience selection: experiment runner, metrics and checks.
#[derive(Parser)]
#[command(name = "aes", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of an experiment spec and write traces, aggregates and a manifest.
    Run {
        /// INI experiment spec (see specs/ for examples).
        spec: PathBuf,
        /// Comma-separated seeds replacing `experiment.seeds`.
        #[arg(long, value_delimiter = ',')]
        seed_list: Option<Vec<u64>>,
        /// Output directory. Overrides AES_OUTPUT_ROOT and `experiment.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads. Overrides `experiment.workers`.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the acceptance criteria and print one PASS/FAIL line each.
    Verify {
        /// Criterion ids to run (1-13); all when omitted.
        #[arg(long = "criterion", short = 'c')]
        criteria: Vec<u8>,
        /// List the criteria and exit.
        #[arg(long)]
        list: bool,
    },
    /// Time store fill, sampling, feedback, overwrite and rebuild.
    Bench {
        #[arg(long, default_value_t = 1_000_000)]
        slots: usize,
        #[arg(long, default_value_t = 200_000)]
        ops: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize trace CSVs into one metrics row per (variant, env, mode).
    Metrics {
        /// Trace CSV files written by `run`.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Moving-average window in evaluation points.
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            spec,
            seed_list,
            out,
            workers,
        } => {
            let mut spec = parse_config(&spec)?;
            if let Some(seeds) = seed_list {
                if seeds.is_empty() {
                    return Err(HarnessError::config("--seed-list", "empty seed list"));
                }
                spec.seeds = seeds;
            }
            let dir = resolve_output(&spec, out.as_deref());
            let report = run_suite(&spec, &dir, workers)?;
            eprintln!("{} cells written to {}", report.manifest.cells.len(), report.out_dir.display());
            Ok(true)
        }
        Command::Verify { criteria, list } => {
            if list {
                for (id, name) in CRITERIA {
                    println!("{id:>2} {name}");
                }
                return Ok(true);
            }
            let mut ok = true;
            for result in run_all(&criteria)? {
                println!("{result}");
                ok &= result.passed;
            }
            Ok(ok)
        }
        Command::Bench {
            slots,
            ops,
            batch,
            seed,
            out,
        } => {
            let bench = BenchSettings { slots, ops, batch };
            let rows = run_bench(&bench, &ExperimentSpec::defaults().base().sampler, seed)?;
            emit(&bench_csv(&bench, &rows), out)?;
            Ok(true)
        }
        Command::Metrics { traces, window, out } => {
            let traces = traces.iter().map(|p| read_trace(p)).collect::<Result<Vec<_>>>()?;
            emit(&metrics_csv(&traces, window)?, out)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
