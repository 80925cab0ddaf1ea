use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use punitive_cli::analysis::{run_analysis, Analysis};
use punitive_cli::error::{exit, CliError};
use punitive_cli::{load_config, run_config, run_preset, RunOptions};

#[derive(Parser)]
#[command(name = "punitive", version, about = "Punitive supplier pricing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named preset or a simulation config and write CSV files.
    Run(RunArgs),
    /// Threshold searches, attractors and identity checks.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// fig2-left or fig2-right.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    replications: Option<usize>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// pi-bar-greedy, pi-bar-strategic, fixed-point or identity-check.
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(Analysis::ALL.map(|a| a.name())))]
    analysis: String,
    #[arg(long)]
    config: PathBuf,
    /// Also write the table as CSV into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            if args.replications == Some(0) {
                return Err(CliError::Usage("--replications must be at least 1".into()));
            }
            let opts = RunOptions { seed: args.seed, replications: args.replications, out: args.out };
            let output = match (&args.preset, &args.config) {
                (Some(name), _) => run_preset(name, &opts)?,
                (None, Some(path)) => run_config(&load_config(path)?, &opts)?,
                (None, None) => unreachable!("clap requires one of --preset/--config"),
            };
            if !args.quiet {
                for line in &output.summary {
                    println!("{line}");
                }
                for f in &output.files {
                    println!("wrote {}", f.display());
                }
            }
            Ok(())
        }
        Command::Analyze(args) => {
            let which: Analysis = args.analysis.parse().map_err(CliError::Usage)?;
            let cfg = load_config(&args.config)?;
            let report = run_analysis(which, &cfg)?;
            if !args.quiet {
                print!("{}", report.table.to_aligned());
                println!();
                for line in &report.summary {
                    println!("{line}");
                }
                println!();
                print!("{}", report.table.to_csv());
            }
            if let Some(dir) = &args.out {
                let path = report.table.write_csv(dir, &report.csv_name())?;
                if !args.quiet {
                    println!("wrote {}", path.display());
                }
            }
            report.failure.map_or(Ok(()), Err)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::from(exit::SUCCESS),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
