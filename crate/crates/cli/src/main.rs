//! Command-line driver: run one simulation, sweep many, or print the
//! resource estimates.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use ucq_core::conflation::{ScheduleConfig, StageConfig};
use ucq_core::estimator;
use ucq_core::harness::{self, RunConfig};
use ucq_core::LayoutConfig;

#[derive(Parser)]
#[command(name = "ucq", about = "Update conflation queue simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and print metrics as JSON.
    Run(RunArgs),
    /// Run every configuration in a file and print a metrics CSV.
    Sweep(SweepArgs),
    /// Print FPGA resource estimates for the implementation options.
    Estimate(EstimateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Verify the final memory image against the sequential oracle.
    #[arg(long)]
    oracle_check: bool,
    /// Dump per-cycle and per-command traces into this directory.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON array of run configurations.
    #[arg(long)]
    configs: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Key bits in the layout.
    #[arg(long, default_value_t = 24)]
    key_bits: u32,
    /// Count bits per lane.
    #[arg(long, default_value_t = 10)]
    value_bits: u32,
    /// Conflation schedule as gap_in:matchers pairs, e.g. 0:6,6:244.
    #[arg(long, default_value = "0:6,6:244")]
    schedule: String,
    /// LUTRAM address width for the RAM-CAM estimate.
    #[arg(long, default_value_t = 5)]
    slice_width: u32,
    /// DSP column segment limit.
    #[arg(long, default_value_t = 42)]
    segment_limit: u64,
    /// Emit the table as JSON instead of text.
    #[arg(long)]
    json: bool,
}

fn parse_schedule(text: &str) -> anyhow::Result<ScheduleConfig> {
    let stages = text
        .split(',')
        .map(|part| {
            let (gap, matchers) = part
                .split_once(':')
                .with_context(|| format!("stage {part:?} is not gap_in:matchers"))?;
            Ok(StageConfig::new(
                gap.trim().parse().context("gap_in")?,
                matchers.trim().parse().context("matchers")?,
            ))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(ScheduleConfig::new(stages))
}

fn run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut config = RunConfig::load(&args.config)?;
    if args.oracle_check {
        config.oracle_check = true;
    }
    if args.trace_dir.is_some() {
        config.trace_dir = args.trace_dir;
    }
    let outcome = harness::run_sim(&config)?;
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    println!("{}", outcome.metrics.to_json());
    if let Some(report) = &outcome.oracle_report {
        if !report.is_clean() {
            eprintln!(
                "oracle verification failed: {} mismatching keys",
                report.mismatches.len()
            );
            return Ok(ExitCode::from(1));
        }
        eprintln!("oracle verification passed over {} keys", report.keys_checked);
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    let configs = RunConfig::load_many(&args.configs)?;
    let rows = harness::sweep(&configs).map_err(anyhow::Error::msg)?;
    print!("{}", harness::rows_to_csv(&rows));
    let failures = rows.iter().filter(|r| r.result.is_err()).count();
    if failures > 0 {
        eprintln!("{failures} of {} runs failed", rows.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn estimate(args: EstimateArgs) -> anyhow::Result<ExitCode> {
    let schedule = parse_schedule(&args.schedule)?;
    schedule
        .validate()
        .map_err(|e| anyhow::anyhow!("schedule: {e}"))?;
    let layout = LayoutConfig::new(args.key_bits, args.value_bits, 2);
    layout
        .validate()
        .map_err(|e| anyhow::anyhow!("layout: {e}"))?;
    let report =
        estimator::compare_report(&layout, &schedule, args.slice_width, args.segment_limit);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{report}");
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Estimate(args) => estimate(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
