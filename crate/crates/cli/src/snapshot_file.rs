//! Binary snapshot container with a JSON sidecar.
//!
//! Layout (little-endian): `b"SMOR"`, format version `u32`, rows `u64`,
//! cols `u64`, parameter count `u64`, time steps `u64`, normalized flag
//! `u8`, then `rows·cols` `f64` values in column-major order. The sidecar
//! `<file>.json` holds the parameter values, time interval, model id, seed
//! and, for normalized data, the initial states.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use nalgebra::DMatrix;
use sae_core::SnapshotSet64;
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 4] = b"SMOR";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 4 * 8 + 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub model: String,
    pub params: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
    pub seed: u64,
    /// Column-major, `rows × n_params`; present for normalized data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_states: Option<Vec<f64>>,
}

/// Snapshot set together with its provenance fields.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotFile {
    pub set: SnapshotSet64,
    pub model: String,
    pub seed: u64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl SnapshotFile {
    pub fn write(&self, path: &Path) -> Result<()> {
        let set = &self.set;
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for v in [set.data.nrows(), set.data.ncols(), set.n_params(), set.steps] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&[u8::from(set.normalized)])?;
        for v in set.data.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;

        let sidecar = Sidecar {
            model: self.model.clone(),
            params: set.params.clone(),
            t0: set.t0,
            t1: set.t1,
            seed: self.seed,
            initial_states: set.normalized.then(|| set.initial_states.as_slice().to_vec()),
        };
        let side = sidecar_path(path);
        std::fs::write(&side, serde_json::to_string_pretty(&sidecar)?)
            .with_context(|| format!("writing {}", side.display()))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut r = BufReader::new(file);
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .with_context(|| format!("{} is too short for a snapshot header", path.display()))?;
        ensure!(&header[0..4] == MAGIC, "{} is not a snapshot file", path.display());
        let version = u32::from_le_bytes(header[4..8].try_into()?);
        ensure!(version == FORMAT_VERSION, "unsupported snapshot format version {version}");
        let field = |i: usize| -> Result<usize> {
            let at = 8 + 8 * i;
            Ok(usize::try_from(u64::from_le_bytes(header[at..at + 8].try_into()?))?)
        };
        let (rows, cols, n_params, steps) = (field(0)?, field(1)?, field(2)?, field(3)?);
        let normalized = match header[HEADER_LEN - 1] {
            0 => false,
            1 => true,
            other => bail!("invalid normalized flag {other}"),
        };
        let len = rows.checked_mul(cols).context("snapshot dimensions overflow")?;
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        ensure!(
            payload.len() == len * 8,
            "payload has {} bytes, header announces {}",
            payload.len(),
            len * 8
        );
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let data = DMatrix::from_vec(rows, cols, values);

        let side = sidecar_path(path);
        let sidecar: Sidecar = serde_json::from_str(
            &std::fs::read_to_string(&side).with_context(|| format!("reading {}", side.display()))?,
        )
        .with_context(|| format!("parsing {}", side.display()))?;
        ensure!(
            sidecar.params.len() == n_params,
            "sidecar lists {} parameters, header announces {n_params}",
            sidecar.params.len()
        );
        ensure!(cols == n_params * (steps + 1), "column count does not match parameters × (K + 1)");

        let mut set = SnapshotSet64::new(data, sidecar.params, steps, sidecar.t0, sidecar.t1)?;
        if normalized {
            let init = sidecar
                .initial_states
                .context("normalized snapshot file lacks initial states")?;
            ensure!(init.len() == rows * n_params, "initial states have the wrong size");
            set.initial_states = DMatrix::from_vec(rows, n_params, init);
            set.normalized = true;
        }
        Ok(SnapshotFile {
            set,
            model: sidecar.model,
            seed: sidecar.seed,
        })
    }
}
