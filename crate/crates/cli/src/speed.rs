//! Wall time of a single manifold update step.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use nalgebra::DMatrix;
use sae_core::optimizers::DEFAULT_DECAY;
use sae_core::{random_stiefel, AdamHyper64, ManifoldMethod, ManifoldOptimizer64, Metric, Transport};
use serde::{Deserialize, Serialize};

pub const SPEED_CSV: &str = "speed.csv";
pub const REPETITIONS: usize = 5;

/// Optimizers compared by the speed test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpeedOptimizer {
    HomogeneousAdam,
    StiefelAdamWithDecay { metric: Metric, transport: Transport },
}

impl SpeedOptimizer {
    pub fn all() -> Vec<Self> {
        let mut out = vec![SpeedOptimizer::HomogeneousAdam];
        for metric in [Metric::Canonical, Metric::Euclidean] {
            for transport in [Transport::Submanifold, Transport::Differential] {
                out.push(SpeedOptimizer::StiefelAdamWithDecay { metric, transport });
            }
        }
        out
    }

    pub fn name(self) -> String {
        match self {
            SpeedOptimizer::HomogeneousAdam => "homogeneous_adam".into(),
            SpeedOptimizer::StiefelAdamWithDecay { metric, transport } => {
                let m = match metric {
                    Metric::Canonical => "can",
                    Metric::Euclidean => "euc",
                };
                let t = match transport {
                    Transport::Submanifold => "sub",
                    Transport::Differential => "diff",
                };
                format!("stiefel_adam_decay_{m}_{t}")
            }
        }
    }

    fn build(self, rows: usize, cols: usize, seed: u64) -> Result<ManifoldOptimizer64> {
        let (method, hyper) = match self {
            SpeedOptimizer::HomogeneousAdam => (ManifoldMethod::HomogeneousAdam, AdamHyper64::default()),
            SpeedOptimizer::StiefelAdamWithDecay { metric, transport } => (
                ManifoldMethod::StiefelAdam { metric, transport },
                AdamHyper64::default().with_decay(DEFAULT_DECAY),
            ),
        };
        Ok(ManifoldOptimizer64::new(method, hyper, rows, cols, seed)?)
    }
}

/// Timings of one `(optimizer, N, n)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Timing {
    pub warmup: f64,
    pub samples: Vec<f64>,
}

impl Timing {
    pub fn median(&self) -> f64 {
        median(&self.samples)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        l if l % 2 == 1 => v[l / 2],
        l => 0.5 * (v[l / 2 - 1] + v[l / 2]),
    }
}

/// One warm-up update, then `REPETITIONS` timed updates, all with a
/// gradient of ones, starting from a random point.
pub fn time_updates(opt: SpeedOptimizer, rows: usize, cols: usize, seed: u64) -> Result<Timing> {
    // The section must not be drawn from the same stream as the point.
    let mut o = opt.build(rows, cols, seed ^ 0x5EC7_10A5_EED5_0001)?;
    let mut x = random_stiefel::<f64>(rows, cols, seed)?;
    let grad = DMatrix::from_element(rows, cols, 1.0);
    let mut step = |x: &mut _| -> Result<f64> {
        let started = Instant::now();
        let next = o.step(x, &grad)?;
        let secs = started.elapsed().as_secs_f64();
        *x = next;
        Ok(secs)
    };
    let warmup = step(&mut x)?;
    let samples = (0..REPETITIONS).map(|_| step(&mut x)).collect::<Result<_>>()?;
    Ok(Timing { warmup, samples })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedRow {
    pub optimizer: String,
    #[serde(rename = "N")]
    pub rows: usize,
    pub n: usize,
    pub seconds: f64,
}

/// Times every optimizer on every pair and writes `speed.csv`. A failing
/// cell is logged and recorded as `NaN`.
pub fn run(pairs: &[(usize, usize)], optimizers: &[SpeedOptimizer], seed: u64, out: &Path) -> Result<Vec<SpeedRow>> {
    let mut rows = Vec::new();
    for &(big, small) in pairs {
        for &opt in optimizers {
            let seconds = match time_updates(opt, big, small, seed) {
                Ok(t) => t.median(),
                Err(e) => {
                    log::warn!("{} at ({big}, {small}): {e:#}", opt.name());
                    f64::NAN
                }
            };
            rows.push(SpeedRow {
                optimizer: opt.name(),
                rows: big,
                n: small,
                seconds,
            });
        }
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(SPEED_CSV);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}
