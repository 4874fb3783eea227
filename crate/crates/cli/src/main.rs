mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wiretap_core::reliability::Algorithm;
use wiretap_core::Error;

#[derive(Parser)]
#[command(name = "wiretap", version, about = "Train and evaluate wiretap codes with cooperative jamming helpers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum AlgoArg {
    Sic,
    Ptp,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Sic => Algorithm::Sic,
            AlgoArg::Ptp => Algorithm::Ptp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    Mine,
    Club,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Train codecs and write checkpoints plus a manifest.
    Train {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "sic")]
        algo: AlgoArg,
        /// Overrides the training seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the configured one, then `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo error rates of a trained code.
    Eval {
        /// Manifest written by `train`.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Overrides the master seed of the experiment.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the manifest's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leakage estimates for a trained code.
    Leakage {
        /// Manifest written by `train`.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        estimator: EstimatorArg,
        /// Sample count; defaults to the estimator preset.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate one code per grid value of an axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// blocklength, helper_count, power or gains.
        #[arg(long)]
        axis: String,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        grid: Vec<f64>,
        #[arg(long, value_enum, default_value = "sic")]
        algo: AlgoArg,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, value_enum, default_value = "mine")]
        estimator: EstimatorArg,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Joint error of SIC against time sharing and joint decoding.
    CompareBaselines {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Time-sharing fractions n1/n to scan.
        #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0.25,0.5,0.75")]
        alphas: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Integrity(_)) => 3,
        Some(Error::Training { .. }) => 4,
        _ => 2,
    }
}

#[cfg(target_env = "gnu")]
fn tune_allocator() {
    // Keep large training buffers on the heap instead of mapping and
    // unmapping them on every step.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 64 << 20);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 256 << 20);
    }
}

#[cfg(not(target_env = "gnu"))]
fn tune_allocator() {}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("WIRETAP_THREADS") {
        let n: usize = v.parse().map_err(|_| Error::Usage(format!("WIRETAP_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::Usage("WIRETAP_THREADS must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Train { config, algo, seed, out } => commands::train(&config, algo.into(), seed, out),
        Command::Eval { config, trials, seed, out } => commands::eval(&config, trials, seed, out),
        Command::Leakage { config, estimator, samples, seed, out } => commands::leakage(&config, estimator, samples, seed, out),
        Command::Sweep { config, axis, grid, algo, trials, estimator, samples, seed, out } => {
            commands::sweep(&config, &axis, &grid, algo.into(), trials, estimator, samples, seed, out)
        }
        Command::CompareBaselines { config, trials, alphas, seed, out } => commands::compare_baselines(&config, trials, &alphas, seed, out),
    }
}

fn main() -> ExitCode {
    tune_allocator();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
