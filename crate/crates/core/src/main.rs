use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dmm::run::{sample_run, train_run, SampleOptions};
use dmm::train::RunConfig;
use dmm::verify::run_suite;
use dmm::Error;

const EXIT_VERIFY: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_HASH: u8 = 4;

#[derive(Parser)]
#[command(name = "dmm", version, about = "Train and sample denoising Markov models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a score model and write checkpoint, loss CSV and manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the backward sampler from a checkpoint.
    Sample {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to model.ckpt in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated backward times to plot.
        #[arg(long, value_delimiter = ',')]
        snapshots: Option<Vec<f64>>,
        /// Number of samples.
        #[arg(long)]
        n: Option<usize>,
        /// Number of backward steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run an oracle suite and print a JSON report.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Checkpoint(_) | Error::Io(_) | Error::Json(_) => EXIT_CONFIG,
        Error::HashMismatch { .. } => EXIT_HASH,
        Error::Step { source, .. } => exit_code(source),
        _ => EXIT_NUMERIC,
    }
}

fn load(config: &Path, seed: Option<u64>) -> dmm::Result<RunConfig> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn configure_threads() -> dmm::Result<()> {
    let Ok(v) = std::env::var("DMM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("DMM_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> dmm::Result<u8> {
    configure_threads()?;
    match cli.command {
        Command::Train { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let out = out.unwrap_or_else(|| cfg.output.dir.clone());
            let m = train_run(&cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&m.metrics)?);
            Ok(0)
        }
        Command::Sample { config, checkpoint, seed, out, snapshots, n, steps } => {
            let cfg = load(&config, seed)?;
            let out = out.unwrap_or_else(|| cfg.output.dir.clone());
            let m = sample_run(&cfg, &out, &SampleOptions { checkpoint, n, steps, snapshots })?;
            println!("{}", serde_json::to_string_pretty(&m.metrics)?);
            Ok(0)
        }
        Command::Verify { suite, seed, out } => {
            let report = run_suite(&suite, seed)?;
            let text = serde_json::to_string_pretty(&report)?;
            println!("{text}");
            if let Some(p) = out {
                std::fs::write(p, text + "\n")?;
            }
            Ok(if report.passed { 0 } else { EXIT_VERIFY })
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
