//! Testing of trained networks and of the PSD baseline.

use std::path::Path;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use rayon::prelude::*;
use sae_core::{
    build_rom, projection_error, psd_cotangent_lift, reduction_error, solve_rom, Autoencoder,
    ErrorVariant, NewtonOptions, PsdMap64,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{check_matches, Fom};
use crate::snapshot_file::SnapshotFile;
use crate::train::{load_network, Manifest};

pub const ERRORS_CSV: &str = "errors.csv";
pub const PSD_ERRORS_CSV: &str = "psd_errors.csv";

/// One row of `errors.csv` / `psd_errors.csv`. A failed ROM solve leaves
/// `NaN` in every measured column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub n: usize,
    pub param: f64,
    pub e_red: f64,
    pub e_proj: f64,
    pub integration_seconds: f64,
}

/// Reduction and projection error of `map` at one testing parameter.
pub fn evaluate_map<A: Autoencoder<f64> + ?Sized>(
    cfg: &RunConfig,
    map: &A,
    variant: ErrorVariant,
    n: usize,
    param: f64,
) -> ErrorRow {
    let run = || -> Result<(f64, f64, f64)> {
        let fom = Fom::new(cfg, param)?;
        let exact = fom.reference_trajectory(cfg.t0, cfg.t1, cfg.time_steps)?;
        let x0 = exact.column(0).clone_owned();
        let rom = build_rom(map, &x0, variant)?;
        let started = Instant::now();
        let reduced = solve_rom(&rom, fom.field(), cfg.t0, cfg.t1, cfg.time_steps, NewtonOptions::default())
            .context("solving the reduced model")?;
        let seconds = started.elapsed().as_secs_f64();
        let e_red = reduction_error(&exact, &rom, &reduced.states)?;
        let e_proj = projection_error(variant, &exact, map, rom.reference())?;
        Ok((e_red, e_proj, seconds))
    };
    match run() {
        Ok((e_red, e_proj, integration_seconds)) => ErrorRow {
            n,
            param,
            e_red,
            e_proj,
            integration_seconds,
        },
        Err(e) => {
            log::warn!("n={n}, param={param}: {e:#}");
            ErrorRow {
                n,
                param,
                e_red: f64::NAN,
                e_proj: f64::NAN,
                integration_seconds: f64::NAN,
            }
        }
    }
}

pub fn write_rows(path: &Path, rows: &[ErrorRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ErrorRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .map(|row| row.with_context(|| format!("reading {}", path.display())))
        .collect()
}

fn testing_grid(cfg: &RunConfig) -> Result<Vec<(usize, f64)>> {
    ensure!(!cfg.testing.is_empty(), "configuration has an empty testing list");
    Ok(cfg
        .n_range
        .iter()
        .flat_map(|&n| cfg.testing.iter().map(move |&p| (n, p)))
        .collect())
}

/// Evaluates every trained network of a run directory on every testing
/// parameter and writes `errors.csv` into it.
pub fn run(run_dir: &Path) -> Result<Vec<ErrorRow>> {
    let manifest = Manifest::read(run_dir)?;
    let cfg = &manifest.config;
    let grid = testing_grid(cfg)?;
    let nets = cfg
        .n_range
        .iter()
        .map(|&n| Ok((n, load_network(run_dir, n)?)))
        .collect::<Result<std::collections::BTreeMap<_, _>>>()?;
    let variant = cfg.flags.error_variant();
    let rows: Vec<ErrorRow> = grid
        .par_iter()
        .map(|&(n, p)| evaluate_map(cfg, &nets[&n], variant, n, p))
        .collect();
    write_rows(&run_dir.join(ERRORS_CSV), &rows)?;
    Ok(rows)
}

/// PSD basis of size `n` from unnormalized snapshots.
pub fn psd_map(data: &SnapshotFile, n: usize) -> Result<PsdMap64> {
    ensure!(!data.set.normalized, "the PSD baseline needs unnormalized snapshots");
    let (basis, _) = psd_cotangent_lift(&data.set.data, n)?;
    Ok(PsdMap64::new(basis))
}

/// PSD baseline for every `n` and testing parameter; writes
/// `psd_errors.csv` into `out`.
pub fn run_psd(cfg: &RunConfig, data_path: &Path, out: &Path) -> Result<Vec<ErrorRow>> {
    let data = SnapshotFile::read(data_path)?;
    check_matches(cfg, &data)?;
    let grid = testing_grid(cfg)?;
    let maps = cfg
        .n_range
        .iter()
        .map(|&n| Ok((n, psd_map(&data, n)?)))
        .collect::<Result<std::collections::BTreeMap<_, _>>>()?;
    let rows: Vec<ErrorRow> = grid
        .par_iter()
        .map(|&(n, p)| evaluate_map(cfg, &maps[&n], ErrorVariant::NoRef, n, p))
        .collect();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_rows(&out.join(PSD_ERRORS_CSV), &rows)?;
    Ok(rows)
}
