//! Full-order models and snapshot generation.

use anyhow::{Context, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use sae_core::{
    implicit_midpoint, NewtonOptions, SineGordonModel64, SnapshotSet64, VectorField, WaveModel64,
};

use crate::config::RunConfig;
use crate::snapshot_file::SnapshotFile;

/// Full-order model for one parameter value.
pub enum Fom {
    Wave(WaveModel64),
    SineGordon(SineGordonModel64),
}

impl Fom {
    pub fn new(cfg: &RunConfig, param: f64) -> Result<Self> {
        Ok(match cfg.model.sg_condition() {
            None => Fom::Wave(WaveModel64::new(cfg.grid, param)?),
            Some(bc) => Fom::SineGordon(SineGordonModel64::new(cfg.grid, param, cfg.a, cfg.b, bc)?),
        })
    }

    pub fn field(&self) -> &(dyn VectorField<f64> + Sync) {
        match self {
            Fom::Wave(m) => m,
            Fom::SineGordon(m) => m,
        }
    }

    pub fn initial_state(&self) -> DVector<f64> {
        match self {
            Fom::Wave(m) => m.initial_state(),
            Fom::SineGordon(m) => m.initial_state(),
        }
    }

    /// Reference trajectory with `K + 1` columns: the integrated FOM for
    /// the wave model, the closed-form solution for sine-Gordon.
    pub fn reference_trajectory(&self, t0: f64, t1: f64, steps: usize) -> Result<DMatrix<f64>> {
        match self {
            Fom::Wave(m) => Ok(implicit_midpoint(m, &m.initial_state(), t0, t1, steps, NewtonOptions::default())
                .context("integrating the full-order model")?
                .states),
            Fom::SineGordon(m) => {
                let mut out = DMatrix::zeros(2 * m.grid_size(), steps + 1);
                for k in 0..=steps {
                    let t = t0 + (t1 - t0) * k as f64 / steps as f64;
                    out.set_column(k, &m.exact_state(t));
                }
                Ok(out)
            }
        }
    }
}

/// Snapshot matrix for every training parameter of `cfg`.
pub fn generate(cfg: &RunConfig) -> Result<SnapshotFile> {
    let blocks: Vec<DMatrix<f64>> = cfg
        .params
        .par_iter()
        .map(|&p| Fom::new(cfg, p)?.reference_trajectory(cfg.t0, cfg.t1, cfg.time_steps))
        .collect::<Result<_>>()?;
    let rows = 2 * cfg.full_half();
    let per = cfg.time_steps + 1;
    let mut data = DMatrix::zeros(rows, per * blocks.len());
    for (j, b) in blocks.iter().enumerate() {
        data.columns_mut(j * per, per).copy_from(b);
    }
    Ok(SnapshotFile {
        set: SnapshotSet64::new(data, cfg.params.clone(), cfg.time_steps, cfg.t0, cfg.t1)?,
        model: cfg.model.id().to_string(),
        seed: cfg.seed,
    })
}

/// Checks that a snapshot file was produced for the configured problem.
pub fn check_matches(cfg: &RunConfig, file: &SnapshotFile) -> Result<()> {
    anyhow::ensure!(
        file.model == cfg.model.id(),
        "data file holds model {:?}, configuration expects {:?}",
        file.model,
        cfg.model.id()
    );
    anyhow::ensure!(
        file.set.dim() == 2 * cfg.full_half(),
        "data file has state dimension {}, configuration implies {}",
        file.set.dim(),
        2 * cfg.full_half()
    );
    Ok(())
}
