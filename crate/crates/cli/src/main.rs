use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sae_cli::speed::SpeedOptimizer;
use sae_cli::{data, evaluate, report, speed, train, RunConfig, SnapshotFile};

/// Symplectic autoencoder model reduction experiments.
#[derive(Parser)]
#[command(name = "sae", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrates (wave) or samples (sine-Gordon) snapshots for every training parameter.
    GenerateData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; receives `snapshots.smor` and its sidecar.
        #[arg(long)]
        out: PathBuf,
    },
    /// Subtracts each parameter's initial state from its snapshots.
    Normalize {
        #[arg(long)]
        input: PathBuf,
        /// Output directory; receives `snapshots_normalized.smor`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains one network per reduced dimension.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solves the reduced models of a run and writes `errors.csv` into it.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
    },
    /// PSD baseline errors for every reduced dimension.
    Psd {
        #[arg(long)]
        config: PathBuf,
        /// Unnormalized snapshot file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Times single manifold update steps.
    SpeedTest {
        /// Takes `speed_pairs` and `seed` from here if given.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Pairs such as `2000x10`; overrides the configuration.
        #[arg(long, value_delimiter = ',')]
        pairs: Vec<String>,
        /// Time every metric/transport combination, not only (can, sub).
        #[arg(long)]
        all: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merges run directories into tidy CSV files.
    Report {
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenerateData { .. } => "generate-data",
            Command::Normalize { .. } => "normalize",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Psd { .. } => "psd",
            Command::SpeedTest { .. } => "speed-test",
            Command::Report { .. } => "report",
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("pair {s:?} is not of the form NxN"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn create(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenerateData { config, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let file = data::generate(&cfg)?;
            create(&out)?;
            let path = out.join("snapshots.smor");
            file.write(&path)?;
            println!("{}", path.display());
        }
        Command::Normalize { input, out } => {
            let mut file = SnapshotFile::read(&input)?;
            file.set = file.set.normalize()?;
            create(&out)?;
            let path = out.join("snapshots_normalized.smor");
            file.write(&path)?;
            println!("{}", path.display());
        }
        Command::Train { config, data, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let manifest = train::run(&cfg, &data, &out)?;
            for c in &manifest.cells {
                println!("n={} first={:e} final={:e} seconds={:.3}", c.n, c.first_loss, c.final_loss, c.seconds);
            }
        }
        Command::Evaluate { run } => {
            for r in evaluate::run(&run)? {
                println!("n={} param={} e_red={:e} e_proj={:e}", r.n, r.param, r.e_red, r.e_proj);
            }
        }
        Command::Psd { config, data, out } => {
            let cfg = load_config(&config, None)?;
            for r in evaluate::run_psd(&cfg, &data, &out)? {
                println!("n={} param={} e_red={:e} e_proj={:e}", r.n, r.param, r.e_red, r.e_proj);
            }
        }
        Command::SpeedTest { config, pairs, all, seed, out } => {
            let cfg = config.as_deref().map(|p| load_config(p, seed)).transpose()?;
            let pairs = if !pairs.is_empty() {
                pairs.iter().map(|s| parse_pair(s)).collect::<Result<Vec<_>>>()?
            } else {
                cfg.as_ref().map(|c| c.speed_pairs.clone()).unwrap_or_else(|| vec![(2000, 10), (4000, 10)])
            };
            let seed = seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            let optimizers = if all {
                SpeedOptimizer::all()
            } else {
                SpeedOptimizer::all().into_iter().take(2).collect()
            };
            for r in speed::run(&pairs, &optimizers, seed, &out)? {
                println!("{} N={} n={} seconds={:e}", r.optimizer, r.rows, r.n, r.seconds);
            }
        }
        Command::Report { runs, out } => {
            let rep = report::run(&runs, &out)?;
            println!("{} error rows, {} loss rows", rep.errors.len(), rep.losses.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let name = cli.command.name();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({
                "status": "error",
                "command": name,
                "message": format!("{e:#}"),
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
