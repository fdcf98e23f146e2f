use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use meef_bench::diagnose::{converge, render, ConvergeOptions};
use meef_bench::{builtin_names, emit_tables, load_scenario, run_scenario, Format};

#[derive(Parser)]
#[command(name = "bench", about = "Monte-Carlo benchmarks for the MEEF-UKF estimator family")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (built-in name or config file) and write its tables.
    Run {
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Print the convergence diagnostics of one update of a scenario.
    Converge {
        scenario: String,
        #[arg(long, default_value_t = 1)]
        step: usize,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long)]
        kernel_ratio: Option<f64>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// List the built-in scenarios.
    ListScenarios,
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            runs,
            seed,
            format,
        } => {
            let mut cfg = load_scenario(&scenario)?;
            if let Some(r) = runs {
                cfg.runs = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let bundle = run_scenario(&cfg)?;
            for path in emit_tables(&bundle, format, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Converge {
            scenario,
            step,
            beta,
            alpha,
            kernel_ratio,
            samples,
        } => {
            let cfg = load_scenario(&scenario)?;
            let opts = ConvergeOptions {
                step,
                beta,
                alpha,
                kernel_ratio,
                samples,
            };
            print!("{}", render(&converge(&cfg, &opts)?));
        }
        Command::ListScenarios => {
            for name in builtin_names() {
                println!("{name}");
            }
        }
    }
    Ok(())
}
