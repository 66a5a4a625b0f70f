mod commands;
mod config;
mod manifest;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit codes: 0 success, 1 data/configuration error, 2 fit did not
/// converge.
#[derive(Parser, Debug)]
#[command(name = "oneshot-dpd", version, about = "Robust one-shot device reliability estimation under lognormal lifetimes")]
struct Cli {
    /// Cap the worker thread count (falls back to ONESHOT_DPD_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct FitFlags {
    /// Dataset CSV with header tau,K,n,x1,...,xJ.
    #[arg(long)]
    csv: PathBuf,
    /// Tuning parameter (0 = maximum likelihood).
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-5)]
    grad_tol: f64,
    /// Multi-start count for the optimizer.
    #[arg(long, default_value_t = 5)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the weighted minimum DPD estimator to a dataset.
    Fit {
        #[command(flatten)]
        flags: FitFlags,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit plus confidence intervals and stress-factor tests at a
    /// normal operating condition.
    Report {
        #[command(flatten)]
        flags: FitFlags,
        /// Operating stress values, comma separated (x1,...,xJ).
        #[arg(long, value_delimiter = ',', required = true)]
        x0: Vec<f64>,
        /// Reliability evaluation time.
        #[arg(long)]
        t0: f64,
        /// CI miss probability (0.1 gives 90% intervals).
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wald-type test of linear hypotheses on the coefficients.
    Test {
        #[command(flatten)]
        flags: FitFlags,
        /// Test that the j-th stress factor has no effect (a_j = b_j = 0).
        #[arg(long, conflicts_with = "null")]
        factor: Option<usize>,
        /// Coordinate constraints like a0=6.0 or b1=0 (repeatable).
        #[arg(long = "null")]
        null: Vec<String>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo study described by a TOML config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// JSON report destination (stdout if omitted).
        #[arg(long)]
        out_json: Option<PathBuf>,
        /// Plot-ready CSV destination (beta,metric,value).
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Emit influence-factor curves as CSV (omega_or_x,beta,h1,h2).
    Influence {
        /// fig1-omega | fig1-x-pos | fig1-x-neg
        #[arg(long, default_value = "fig1-omega")]
        preset: String,
        /// Tuning parameters to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.2, 0.4, 0.6, 0.8])]
        betas: Vec<f64>,
        /// Override the grid as from:to:step.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Data-driven tuning-parameter selection by MaxAE.
    Tune {
        #[command(flatten)]
        flags: FitFlags,
        /// Candidate grid, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.2, 0.4, 0.6])]
        betas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn thread_cap(cli: &Cli) -> Option<usize> {
    cli.threads.or_else(|| {
        std::env::var("ONESHOT_DPD_THREADS").ok().and_then(|v| v.parse().ok())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(n) = thread_cap(&cli) {
        // Ignore the error when a pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = thread_cap(&cli);

    let outcome = match cli.command {
        Command::Fit { flags, out } => commands::cmd_fit(&flags, out.as_deref()),
        Command::Report { flags, x0, t0, alpha, out } => {
            commands::cmd_report(&flags, &x0, t0, alpha, out.as_deref())
        }
        Command::Test { flags, factor, null, alpha, out } => {
            commands::cmd_test(&flags, factor, &null, alpha, out.as_deref())
        }
        Command::Simulate { config, out_json, out_csv } => {
            commands::cmd_simulate(&config, out_json.as_deref(), out_csv.as_deref())
        }
        Command::Influence { preset, betas, grid, out } => {
            commands::cmd_influence(&preset, &betas, grid.as_deref(), out.as_deref())
        }
        Command::Tune { flags, betas, out } => commands::cmd_tune(&flags, &betas, out.as_deref()),
    };

    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
