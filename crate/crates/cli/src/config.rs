//! Run configuration: a flat TOML document.
//!
//! ```toml
//! model = "wave"
//! N = 32
//! n_range = [2, 4]
//! n_epochs = 10
//! batch_size = 32
//! time_steps = 50
//! mu_left = 0.4166666666666667
//! mu_right = 0.6666666666666666
//! n_params = 5
//! testing = [0.47, 0.51]
//! variant = "V6"
//! seed = 7
//! ```
//!
//! `variant` fills in the learning flags; any flag given explicitly
//! overrides the preset.

use std::path::Path;

use anyhow::{bail, Context, Result};
use sae_core::models::{WAVE_DOMAIN, WAVE_TIME};
use sae_core::optimizers::DEFAULT_DECAY;
use sae_core::{AdamHyper64, ErrorVariant, LossKind, ManifoldMethod, Metric, SgCondition, Transport};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Wave,
    SgSingleSoliton,
    SgDoublets,
}

impl ModelKind {
    pub fn sg_condition(self) -> Option<SgCondition> {
        match self {
            ModelKind::Wave => None,
            ModelKind::SgSingleSoliton => Some(SgCondition::SingleSoliton),
            ModelKind::SgDoublets => Some(SgCondition::Doublets),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Wave => "wave",
            ModelKind::SgSingleSoliton => "sg_single_soliton",
            ModelKind::SgDoublets => "sg_doublets",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossChoice {
    Relative,
    ScaledMse,
}

impl From<LossChoice> for LossKind {
    fn from(l: LossChoice) -> Self {
        match l {
            LossChoice::Relative => LossKind::Relative,
            LossChoice::ScaledMse => LossKind::ScaledMse,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    HomogeneousAdam,
    StiefelAdam,
    StiefelAdamWithDecay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChoice {
    Canonical,
    Euclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportChoice {
    Sub,
    Diff,
}

/// Learning options of one training run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantFlags {
    pub loss: LossChoice,
    pub epochwise: bool,
    pub normalized: bool,
    pub use_ref: bool,
    pub optimizer: OptimizerChoice,
    pub metric: MetricChoice,
    pub transport: TransportChoice,
}

/// Names of the ten preset variants, in order.
pub const VARIANT_NAMES: [&str; 10] = ["V1", "V2", "V3", "V4", "V5", "V6", "V7", "V8", "V9", "V10"];

impl VariantFlags {
    /// Preset `V1` … `V10`.
    pub fn preset(name: &str) -> Result<Self> {
        use LossChoice::*;
        use MetricChoice::*;
        use OptimizerChoice::*;
        use TransportChoice::*;
        let base = VariantFlags {
            loss: Relative,
            epochwise: true,
            normalized: true,
            use_ref: true,
            optimizer: HomogeneousAdam,
            metric: Canonical,
            transport: Sub,
        };
        let stiefel = |metric, transport| VariantFlags {
            optimizer: StiefelAdamWithDecay,
            metric,
            transport,
            ..base
        };
        Ok(match name.to_ascii_uppercase().as_str() {
            "V1" => VariantFlags {
                epochwise: false,
                normalized: false,
                use_ref: false,
                ..base
            },
            "V2" => VariantFlags {
                normalized: false,
                use_ref: false,
                ..base
            },
            "V3" => base,
            "V4" => VariantFlags { loss: ScaledMse, ..base },
            "V5" => VariantFlags {
                optimizer: StiefelAdam,
                ..base
            },
            "V6" => stiefel(Canonical, Sub),
            "V7" => stiefel(Canonical, Diff),
            "V8" => stiefel(Euclidean, Sub),
            "V9" => stiefel(Euclidean, Diff),
            "V10" => VariantFlags {
                loss: ScaledMse,
                ..stiefel(Canonical, Sub)
            },
            other => bail!("unknown variant {other:?}; expected one of V1..V10"),
        })
    }

    /// Name of the preset these flags equal, if any.
    pub fn classify(&self) -> Option<&'static str> {
        VARIANT_NAMES
            .iter()
            .copied()
            .find(|name| Self::preset(name).map(|p| p.canonical() == self.canonical()).unwrap_or(false))
    }

    // Metric and transport are irrelevant for HomogeneousAdam.
    fn canonical(&self) -> Self {
        let mut c = *self;
        if c.optimizer == OptimizerChoice::HomogeneousAdam {
            c.metric = MetricChoice::Canonical;
            c.transport = TransportChoice::Sub;
        }
        c
    }

    /// Normalized data pairs with the reference-state ROM and vice versa.
    pub fn validate(&self) -> Result<()> {
        if self.normalized != self.use_ref {
            bail!(
                "inconsistent variant flags: normalized={} requires use_ref={}",
                self.normalized,
                self.normalized
            );
        }
        Ok(())
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss.into()
    }

    pub fn error_variant(&self) -> ErrorVariant {
        if self.use_ref {
            ErrorVariant::WithRef
        } else {
            ErrorVariant::NoRef
        }
    }

    pub fn method(&self) -> ManifoldMethod {
        let metric = match self.metric {
            MetricChoice::Canonical => Metric::Canonical,
            MetricChoice::Euclidean => Metric::Euclidean,
        };
        let transport = match self.transport {
            TransportChoice::Sub => Transport::Submanifold,
            TransportChoice::Diff => Transport::Differential,
        };
        match self.optimizer {
            OptimizerChoice::HomogeneousAdam => ManifoldMethod::HomogeneousAdam,
            _ => ManifoldMethod::StiefelAdam { metric, transport },
        }
    }

    pub fn hyper(&self, learning_rate: f64) -> Result<AdamHyper64> {
        let decay = (self.optimizer == OptimizerChoice::StiefelAdamWithDecay).then_some(DEFAULT_DECAY);
        let d = AdamHyper64::default();
        Ok(AdamHyper64::new(learning_rate, d.beta1, d.beta2, d.delta, decay)?)
    }
}

/// Configuration file as written by the user.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<ModelKind>,
    #[serde(rename = "N")]
    grid: Option<usize>,
    n_range: Option<Vec<usize>>,
    n_epochs: Option<usize>,
    batch_size: Option<usize>,
    time_steps: Option<usize>,
    mu_left: Option<f64>,
    mu_right: Option<f64>,
    n_params: Option<usize>,
    nu_list: Option<Vec<f64>>,
    testing: Option<Vec<f64>>,
    variant: Option<String>,
    loss: Option<LossChoice>,
    epochwise: Option<bool>,
    normalized: Option<bool>,
    use_ref: Option<bool>,
    optimizer: Option<OptimizerChoice>,
    metric: Option<MetricChoice>,
    transport: Option<TransportChoice>,
    learning_rate: Option<f64>,
    t0: Option<f64>,
    t1: Option<f64>,
    a: Option<f64>,
    b: Option<f64>,
    seed: Option<u64>,
    speed_pairs: Option<Vec<(usize, usize)>>,
}

/// Validated configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelKind,
    #[serde(rename = "N")]
    pub grid: usize,
    pub n_range: Vec<usize>,
    pub n_epochs: usize,
    pub batch_size: usize,
    pub time_steps: usize,
    /// Training parameters (μ for the wave model, ν for sine-Gordon).
    pub params: Vec<f64>,
    pub testing: Vec<f64>,
    pub variant: Option<String>,
    pub flags: VariantFlags,
    pub learning_rate: f64,
    pub t0: f64,
    pub t1: f64,
    pub a: f64,
    pub b: f64,
    pub seed: u64,
    pub speed_pairs: Vec<(usize, usize)>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).context("parsing configuration")?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading configuration {}", path.display()))?;
        Self::from_toml_str(&text)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let model = raw.model.unwrap_or(ModelKind::Wave);
        let mut flags = match &raw.variant {
            Some(v) => VariantFlags::preset(v)?,
            None => VariantFlags::preset("V3")?,
        };
        if let Some(v) = raw.loss {
            flags.loss = v;
        }
        if let Some(v) = raw.epochwise {
            flags.epochwise = v;
        }
        if let Some(v) = raw.normalized {
            flags.normalized = v;
        }
        if let Some(v) = raw.use_ref {
            flags.use_ref = v;
        }
        if let Some(v) = raw.optimizer {
            flags.optimizer = v;
        }
        if let Some(v) = raw.metric {
            flags.metric = v;
        }
        if let Some(v) = raw.transport {
            flags.transport = v;
        }
        flags.validate()?;

        let (t0, t1, a, b) = match model {
            ModelKind::Wave => {
                if raw.t0.is_some() || raw.t1.is_some() || raw.a.is_some() || raw.b.is_some() {
                    bail!("the wave model fixes t0, t1, a and b; remove them from the configuration");
                }
                (WAVE_TIME.0, WAVE_TIME.1, WAVE_DOMAIN.0, WAVE_DOMAIN.1)
            }
            _ => (
                raw.t0.unwrap_or(0.0),
                raw.t1.unwrap_or(1.0),
                raw.a.unwrap_or(-5.0),
                raw.b.unwrap_or(5.0),
            ),
        };
        if !(t1 > t0) || !(b > a) {
            bail!("need t1 > t0 and b > a");
        }

        let params = match model {
            ModelKind::Wave => {
                if raw.nu_list.is_some() {
                    bail!("nu_list is a sine-Gordon key; the wave model uses mu_left, mu_right and n_params");
                }
                let left = raw.mu_left.unwrap_or(5.0 / 12.0);
                let right = raw.mu_right.unwrap_or(2.0 / 3.0);
                let count = raw.n_params.unwrap_or(20);
                linspace(left, right, count)?
            }
            _ => {
                if raw.mu_left.is_some() || raw.mu_right.is_some() || raw.n_params.is_some() {
                    bail!("mu_left, mu_right and n_params are wave keys; sine-Gordon uses nu_list");
                }
                raw.nu_list.context("sine-Gordon configurations need nu_list")?
            }
        };
        if params.is_empty() {
            bail!("at least one training parameter is required");
        }

        let grid = raw.grid.context("configuration needs N")?;
        let n_range = raw.n_range.unwrap_or_else(|| vec![2]);
        if grid == 0 {
            bail!("N must be positive");
        }
        let full_half = match model {
            ModelKind::Wave => grid + 2,
            _ => grid,
        };
        if n_range.is_empty() || n_range.iter().any(|&n| n == 0 || n > full_half) {
            bail!("every reduced dimension n must satisfy 1 ≤ n ≤ {full_half}");
        }
        let batch_size = raw.batch_size.unwrap_or(32);
        let time_steps = raw.time_steps.unwrap_or(200);
        if batch_size == 0 || time_steps == 0 {
            bail!("batch_size and time_steps must be positive");
        }
        let learning_rate = raw.learning_rate.unwrap_or(AdamHyper64::default().eta);
        flags.hyper(learning_rate)?;

        Ok(RunConfig {
            model,
            grid,
            n_range,
            n_epochs: raw.n_epochs.unwrap_or(100),
            batch_size,
            time_steps,
            params,
            testing: raw.testing.unwrap_or_default(),
            variant: raw.variant.map(|v| v.to_ascii_uppercase()),
            flags,
            learning_rate,
            t0,
            t1,
            a,
            b,
            seed: raw.seed.unwrap_or(0),
            speed_pairs: raw.speed_pairs.unwrap_or_else(|| vec![(2000, 10), (4000, 10)]),
        })
    }

    /// Half of the full-order dimension.
    pub fn full_half(&self) -> usize {
        match self.model {
            ModelKind::Wave => self.grid + 2,
            _ => self.grid,
        }
    }

    /// Label used in reports: the preset name or `custom`.
    pub fn label(&self) -> String {
        self.flags.classify().unwrap_or("custom").to_string()
    }
}

/// `count` equally spaced values from `left` to `right` inclusive.
pub fn linspace(left: f64, right: f64, count: usize) -> Result<Vec<f64>> {
    match count {
        0 => bail!("n_params must be positive"),
        1 => Ok(vec![left]),
        _ => Ok((0..count)
            .map(|i| left + (right - left) * i as f64 / (count - 1) as f64)
            .collect()),
    }
}
