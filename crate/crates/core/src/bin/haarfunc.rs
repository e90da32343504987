use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use haarfunc::harness::{
    estimate_functional, plot_csv, rate_regression, read_csv, read_sample, run_experiment, EstimateMode,
    ExperimentConfig,
};
use haarfunc::lepski::{build_grid, calibrate_threshold};
use haarfunc::{Error, Result};

/// Haar-projection estimators of integral density functionals on [0, 1].
///
/// Worker threads for `simulate` follow HAARFUNC_THREADS.
#[derive(Parser)]
#[command(name = "haarfunc", version)]
struct Cli {
    /// Base seed; overrides the config seed for `simulate`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the selection grid as JSON.
    Grid {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        d: f64,
    },
    /// Estimate a functional from a file of samples, one per line.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        /// square, cube, renyi2, entropy or power(p).
        #[arg(long)]
        functional: String,
        #[arg(long, conflicts_with = "adaptive")]
        beta: Option<f64>,
        /// Select the smoothness from the data (the default).
        #[arg(long)]
        adaptive: bool,
        /// Threshold constant; calibrated under the uniform density when absent.
        #[arg(long = "c-opt", conflicts_with = "beta")]
        c_opt: Option<f64>,
        #[arg(long, default_value_t = 2.0)]
        d: f64,
        #[arg(long = "calibration-reps", default_value_t = 200)]
        calibration_reps: usize,
        /// Pilot clamp for plug-in functionals; half the density lower bound is a good choice.
        #[arg(long)]
        floor: Option<f64>,
    },
    /// Run a Monte Carlo experiment described by a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Calibrate the selection threshold under the uniform density.
    Calibrate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        d: f64,
        #[arg(long, default_value_t = 200)]
        reps: usize,
    },
    /// Rate regression over a results CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Smoothness for the reference slope.
        #[arg(long)]
        beta: Option<f64>,
        /// Where to write the log n / log MSE table; defaults to `<input>.plot.csv`.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Grid { n, d } => print_json(&build_grid(n, d)?),
        Command::Estimate { input, functional, beta, adaptive: _, c_opt, d, calibration_reps, floor } => {
            let sample = read_sample(File::open(&input)?)?;
            let mode = match beta {
                Some(b) => EstimateMode::KnownBeta(b),
                None => EstimateMode::Adaptive { c_opt, d, calibration_reps },
            };
            print_json(&estimate_functional(&sample, &functional, mode, floor, seed)?)
        }
        Command::Simulate { config } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            let (_, summary) = run_experiment(&config)?;
            print_json(&summary)
        }
        Command::Calibrate { n, d, reps } => print_json(&calibrate_threshold(&build_grid(n, d)?, reps, seed)?),
        Command::Report { input, beta, plot } => {
            let rows = read_csv(File::open(&input)?)?;
            let report = rate_regression(&rows, beta)?;
            let plot = plot.unwrap_or_else(|| input.with_extension("plot.csv"));
            std::fs::write(&plot, plot_csv(&report))?;
            print_json(&report)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("haarfunc: {e}");
            match e {
                Error::Usage(_) | Error::Domain(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
