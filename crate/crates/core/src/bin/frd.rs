use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use frd::cli::{exit_code, run, Command, Options, EXIT_CODES};

/// Finite range decompositions of lattice Green's functions.
#[derive(Parser)]
#[command(version, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// JSON run configuration.
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Output directory (must exist); overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Random seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo sample count; overrides the config.
    #[arg(long, global = true)]
    samples: Option<usize>,
}

#[derive(Subcommand)]
enum Sub {
    /// Compute the decomposition and write kernels and diagnostics.
    Decompose,
    /// Decompose and run the oracle, envelope and decay checks.
    Verify,
    /// Draw Gaussian fields per scale and compare empirical covariances.
    Sample {
        /// Write this many samples per level to CSV.
        #[arg(long, default_value_t = 0)]
        write_samples: usize,
    },
    /// Contour-integral derivatives along the configured direction.
    Deriv,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let (command, write_samples) = match cli.command {
        Sub::Decompose => (Command::Decompose, 0),
        Sub::Verify => (Command::Verify, 0),
        Sub::Sample { write_samples } => (Command::Sample, write_samples),
        Sub::Deriv => (Command::Deriv, 0),
    };
    let opts = Options { command, config: cli.config, out: cli.out, seed: cli.seed, samples: cli.samples, write_samples };
    match run(&opts) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for c in outcome.failures() {
                eprintln!("FAILED {}: {:e} (threshold {:e})", c.name, c.value, c.threshold);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
