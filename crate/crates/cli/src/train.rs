//! Training runs: one network per reduced dimension.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use rand::Rng;
use rayon::prelude::*;
use sae_core::linalg::seeded_rng;
use sae_core::training::{noepoch_iterations, train_epoch, train_noepoch};
use sae_core::{build_network, Network64, NetworkOptimizer64};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::check_matches;
use crate::snapshot_file::SnapshotFile;

pub const MANIFEST: &str = "manifest.json";

/// Seeds of one `(run, n)` cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSeeds {
    pub network: u64,
    pub section: u64,
    pub batches: u64,
}

impl CellSeeds {
    pub fn derive(seed: u64, n: usize) -> Self {
        let mut rng = seeded_rng(seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        CellSeeds {
            network: rng.random(),
            section: rng.random(),
            batches: rng.random(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub seeds: CellSeeds,
    pub iterations: usize,
    pub first_loss: f64,
    pub final_loss: f64,
    pub reorthonormalizations: u64,
    pub seconds: f64,
}

/// Run manifest written next to the loss and parameter files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub label: String,
    pub config: RunConfig,
    pub data_file: PathBuf,
    pub initialization: String,
    pub loss_rows: String,
    pub cells: Vec<CellSummary>,
}

impl Manifest {
    pub fn read(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn losses_path(run_dir: &Path, n: usize) -> PathBuf {
    run_dir.join(format!("losses_n{n}.csv"))
}

pub fn params_path(run_dir: &Path, n: usize) -> PathBuf {
    run_dir.join(format!("params_n{n}.json"))
}

pub fn load_network(run_dir: &Path, n: usize) -> Result<Network64> {
    let path = params_path(run_dir, n);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Trains one network. Returns the per-epoch average losses and the
/// trained network. Non-epoch-wise runs average consecutive groups of
/// `⌈cols/batch⌉` iterations.
pub fn train_cell(cfg: &RunConfig, data: &SnapshotFile, n: usize) -> Result<(Vec<f64>, Network64, CellSummary)> {
    let flags = cfg.flags;
    let seeds = CellSeeds::derive(cfg.seed, n);
    let started = Instant::now();
    let mut net = build_network::<f64>(data.set.dim(), 2 * n, seeds.network)?;
    let mut opt = NetworkOptimizer64::new(&net, flags.method(), flags.hyper(cfg.learning_rate)?, seeds.section)?;
    let mut rng = seeded_rng(seeds.batches);
    let x = &data.set.data;
    let (losses, iterations) = if flags.epochwise {
        let mut out = Vec::with_capacity(cfg.n_epochs);
        for epoch in 1..=cfg.n_epochs {
            let l = train_epoch(&mut net, &mut opt, x, cfg.batch_size, flags.loss_kind(), &mut rng)
                .with_context(|| format!("n={n}, epoch {epoch}"))?;
            out.push(l);
        }
        (out, cfg.n_epochs * x.ncols().div_ceil(cfg.batch_size))
    } else {
        let all = train_noepoch(&mut net, &mut opt, x, cfg.batch_size, cfg.n_epochs, flags.loss_kind(), &mut rng)
            .with_context(|| format!("n={n}, non-epoch-wise training"))?;
        let per = x.ncols().div_ceil(cfg.batch_size).max(1);
        let avg = all.chunks(per).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        (avg, noepoch_iterations(cfg.n_epochs, x.ncols(), cfg.batch_size))
    };
    ensure!(
        losses.iter().all(|l| l.is_finite()),
        "n={n}: training produced a non-finite loss"
    );
    let summary = CellSummary {
        n,
        seeds,
        iterations,
        first_loss: losses.first().copied().unwrap_or(f64::NAN),
        final_loss: losses.last().copied().unwrap_or(f64::NAN),
        reorthonormalizations: opt.reorthonormalizations(),
        seconds: started.elapsed().as_secs_f64(),
    };
    Ok((losses, net, summary))
}

pub fn write_losses(path: &Path, losses: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["epoch", "avg_loss"])?;
    for (e, l) in losses.iter().enumerate() {
        w.write_record([(e + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_losses(path: &Path) -> Result<Vec<(usize, f64)>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize::<(usize, f64)>()
        .map(|row| row.with_context(|| format!("reading {}", path.display())))
        .collect()
}

/// Trains every `n` of the configuration and writes the run directory.
pub fn run(cfg: &RunConfig, data_path: &Path, out: &Path) -> Result<Manifest> {
    let data = SnapshotFile::read(data_path)?;
    check_matches(cfg, &data)?;
    ensure!(
        data.set.normalized == cfg.flags.normalized,
        "configuration expects {} data but {} is {}; use the normalize command",
        if cfg.flags.normalized { "normalized" } else { "unnormalized" },
        data_path.display(),
        if data.set.normalized { "normalized" } else { "unnormalized" },
    );
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let cells: Vec<CellSummary> = cfg
        .n_range
        .par_iter()
        .map(|&n| -> Result<CellSummary> {
            let (losses, net, summary) = train_cell(cfg, &data, n)?;
            write_losses(&losses_path(out, n), &losses)?;
            std::fs::write(params_path(out, n), serde_json::to_string(&net)?)?;
            log::info!("n={n}: loss {:.4e} -> {:.4e} in {:.2}s", summary.first_loss, summary.final_loss, summary.seconds);
            Ok(summary)
        })
        .collect::<Result<_>>()?;

    let manifest = Manifest {
        label: cfg.label(),
        config: cfg.clone(),
        data_file: data_path.to_path_buf(),
        initialization: "gradient layers: K ~ U(±r), a ~ U(±r/L), b = 0 with r = sqrt(6/(L + half)), L = 5·half; \
                         PSD weights: Q factor of a Gaussian matrix; all drawn from ChaCha8 seeded with the network seed"
            .into(),
        loss_rows: if cfg.flags.epochwise {
            "mean batch loss per epoch".into()
        } else {
            "mean loss over consecutive groups of ceil(cols/batch) iterations".into()
        },
        cells,
    };
    std::fs::write(out.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
