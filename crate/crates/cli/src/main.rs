//! `herdgraph` command-line front end.

mod checks;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use herdgraph::config::Config;
use herdgraph::Error;

#[derive(Parser, Debug)]
#[command(name = "herdgraph", version, about = "Dyadic interaction analysis and social networks from cattle keypoint streams")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Evaluate the command's acceptance properties; exit 1 if any fails.
    #[arg(long, global = true)]
    pub check: bool,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Corpus,
    Scene,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a labeled clip corpus or a multi-cow scene.
    Synth {
        #[arg(long, value_enum, default_value = "corpus")]
        kind: SynthKind,
    },
    /// Track detections into identity-voted tracks.
    Track {
        #[arg(long)]
        frames: PathBuf,
    },
    /// Assemble and smooth per-keypoint trajectories.
    Stabilize {
        #[arg(long)]
        tracks: PathBuf,
    },
    /// Proximity-gate track pairs into dyad windows.
    Gate {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        trajectories: PathBuf,
    },
    /// Extract trajectory features from dyad windows.
    Features {
        #[arg(long)]
        windows: PathBuf,
        /// Ground-truth events used to label the windows.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Train the interaction classifier.
    Train {
        #[command(flatten)]
        source: TrainingSource,
    },
    /// Classify feature rows with a trained model.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        samples: PathBuf,
    },
    /// Cross-validated classifier report and proximity-baseline comparison.
    Evaluate {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Feature-group ablation.
    Ablate {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Macro-F1 over the gate distance factor and dwell grid.
    Sensitivity {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Tracking metrics over a range of match thresholds.
    SweepMatch {
        #[arg(long, requires = "ground_truth")]
        frames: Option<PathBuf>,
        #[arg(long, requires = "frames")]
        ground_truth: Option<PathBuf>,
    },
    /// Build social-network layers from interaction events.
    Network {
        #[arg(long)]
        events: PathBuf,
        /// Tracks whose identities complete the node roster.
        #[arg(long)]
        tracks: Option<PathBuf>,
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
    },
    /// Track, stabilize, gate, extract, classify and build networks.
    Pipeline {
        /// Frames to process; a scene is generated from the configuration
        /// when omitted.
        #[arg(long)]
        frames: Option<PathBuf>,
        /// Trained model; one is trained on a generated scene when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Ground-truth events for the conservation check.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Print the default configuration.
    DefaultConfig,
}

#[derive(Args, Debug, Clone)]
pub struct TrainingSource {
    /// Feature rows; requires `--samples` with labels.
    #[arg(long, requires = "samples", conflicts_with = "corpus")]
    pub features: Option<PathBuf>,
    #[arg(long, requires = "features")]
    pub samples: Option<PathBuf>,
    /// Corpus manifest; a corpus is generated from the configuration when
    /// neither this nor `--features` is given.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_SCHEMA: u8 = 4;
pub const EXIT_DATA: u8 = 5;
pub const EXIT_IO: u8 = 6;

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::RosterTooSmall(_)) => EXIT_CONFIG,
        Some(
            Error::Parse { .. }
            | Error::Schema { .. }
            | Error::UnknownVersion(_)
            | Error::InvalidBox { .. }
            | Error::OutOfOrderFrame { .. },
        ) => EXIT_SCHEMA,
        Some(Error::Io(_) | Error::MissingFile(_)) => EXIT_IO,
        Some(_) => EXIT_DATA,
        None if e.downcast_ref::<std::io::Error>().is_some() => EXIT_IO,
        None => EXIT_DATA,
    }
}

fn load_config(global: &Global) -> anyhow::Result<Config> {
    let mut cfg = match &global.config {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if matches!(cli.command, Command::DefaultConfig) {
        println!("{}", Config::default().to_json());
        return Ok(true);
    }
    let cfg = load_config(&cli.global)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.global.workers {
        anyhow::ensure!(n > 0, Error::Config("--workers must be at least 1".into()));
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building worker pool")?;
    let report = pool.install(|| commands::dispatch(&cli.command, &cli.global, &cfg))?;
    if cli.global.check {
        let passed = report.iter().all(|c| c.passed);
        for c in &report {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        herdgraph::io::write_json(&cli.global.out_dir.join("checks.json"), &report)?;
        return Ok(passed);
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
