//! Merges the outputs of several run directories into tidy CSV files.
//!
//! `errors.csv`: `variant, n, param, e_red, e_proj, integration_seconds`,
//! with PSD baseline rows labelled `PSD`.
//! `losses.csv`: `variant, n, epoch, avg_loss`.
//!
//! Rows are keyed by `(variant, n, param)` and `(variant, n, epoch)`; a
//! later run directory overrides earlier rows with the same key. Output
//! is sorted by key, so re-running on the same inputs gives the same files.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::evaluate::{read_rows, ERRORS_CSV, PSD_ERRORS_CSV};
use crate::train::{losses_path, read_losses, Manifest};

pub const PSD_LABEL: &str = "PSD";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TidyError {
    pub variant: String,
    pub n: usize,
    pub param: f64,
    pub e_red: f64,
    pub e_proj: f64,
    pub integration_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TidyLoss {
    pub variant: String,
    pub n: usize,
    pub epoch: usize,
    pub avg_loss: f64,
}

// Order-preserving integer image of an f64 under `total_cmp`.
fn sortable(x: f64) -> i64 {
    let b = x.to_bits() as i64;
    b ^ ((((b >> 63) as u64) >> 1) as i64)
}

#[derive(Debug, Default)]
pub struct Report {
    pub errors: Vec<TidyError>,
    pub losses: Vec<TidyLoss>,
}

/// Collects every run directory. A directory must hold a run manifest or
/// a `psd_errors.csv`.
pub fn collect(run_dirs: &[impl AsRef<Path>]) -> Result<Report> {
    let mut errors: BTreeMap<(String, usize, i64), TidyError> = BTreeMap::new();
    let mut losses: BTreeMap<(String, usize, usize), TidyLoss> = BTreeMap::new();
    for dir in run_dirs {
        let dir = dir.as_ref();
        let mut found = false;
        let psd = dir.join(PSD_ERRORS_CSV);
        if psd.exists() {
            found = true;
            for r in read_rows(&psd)? {
                errors.insert(
                    (PSD_LABEL.into(), r.n, sortable(r.param)),
                    TidyError {
                        variant: PSD_LABEL.into(),
                        n: r.n,
                        param: r.param,
                        e_red: r.e_red,
                        e_proj: r.e_proj,
                        integration_seconds: r.integration_seconds,
                    },
                );
            }
        }
        if dir.join(crate::train::MANIFEST).exists() {
            found = true;
            let manifest = Manifest::read(dir)?;
            let label = manifest.label.clone();
            for &n in &manifest.config.n_range {
                for (epoch, avg_loss) in read_losses(&losses_path(dir, n))? {
                    losses.insert(
                        (label.clone(), n, epoch),
                        TidyLoss {
                            variant: label.clone(),
                            n,
                            epoch,
                            avg_loss,
                        },
                    );
                }
            }
            let err = dir.join(ERRORS_CSV);
            if err.exists() {
                for r in read_rows(&err)? {
                    errors.insert(
                        (label.clone(), r.n, sortable(r.param)),
                        TidyError {
                            variant: label.clone(),
                            n: r.n,
                            param: r.param,
                            e_red: r.e_red,
                            e_proj: r.e_proj,
                            integration_seconds: r.integration_seconds,
                        },
                    );
                }
            }
        }
        if !found {
            bail!("{} holds neither a run manifest nor {PSD_ERRORS_CSV}", dir.display());
        }
    }
    Ok(Report {
        errors: errors.into_values().collect(),
        losses: losses.into_values().collect(),
    })
}

fn write_csv<R: Serialize>(path: &Path, rows: &[R], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `errors.csv` and `losses.csv` into `out`.
pub fn run(run_dirs: &[impl AsRef<Path>], out: &Path) -> Result<Report> {
    let report = collect(run_dirs)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_csv(
        &out.join("errors.csv"),
        &report.errors,
        &["variant", "n", "param", "e_red", "e_proj", "integration_seconds"],
    )?;
    write_csv(&out.join("losses.csv"), &report.losses, &["variant", "n", "epoch", "avg_loss"])?;
    Ok(report)
}
