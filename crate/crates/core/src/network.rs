//! Symplectic autoencoder: gradient layers, PSD layers, losses and
//! hand-written reverse- and forward-mode derivatives.
//!
//! All batches are `dim × batch` matrices whose columns are phase-space
//! states `[q; p]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::linalg::seeded_rng;
use crate::scalar::{from_usize, lit, Real};
use crate::stiefel::{random_stiefel, StiefelPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    /// `u` for `u ≥ 0`, `eᵘ − 1` otherwise.
    Explu,
}

impl Activation {
    pub fn eval<T: Real>(self, u: T) -> T {
        match self {
            Activation::Tanh => u.tanh(),
            Activation::Relu => u.max(T::zero()),
            Activation::Explu => {
                if u >= T::zero() {
                    u
                } else {
                    u.exp() - T::one()
                }
            }
        }
    }

    pub fn derivative<T: Real>(self, u: T) -> T {
        match self {
            Activation::Tanh => {
                let t = u.tanh();
                T::one() - t * t
            }
            Activation::Relu => {
                if u > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Explu => {
                if u >= T::zero() {
                    T::one()
                } else {
                    u.exp()
                }
            }
        }
    }
}

/// Which half of the state a gradient layer updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GradientKind {
    /// `[q; p] ↦ [q; p + Kᵀdiag(a)σ(Kq + b)]`
    P,
    /// `[q; p] ↦ [q + Kᵀdiag(a)σ(Kp + b); p]`
    Q,
}

/// Parameters of a dimension-preserving symplectic gradient layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct GradientLayer<T: Real> {
    pub kind: GradientKind,
    /// `L × half` with `dim = 2·half`.
    pub k: DMatrix<T>,
    pub a: DVector<T>,
    pub b: DVector<T>,
    pub activation: Activation,
}

impl<T: Real> GradientLayer<T> {
    pub fn new(
        kind: GradientKind,
        k: DMatrix<T>,
        a: DVector<T>,
        b: DVector<T>,
        activation: Activation,
    ) -> Result<Self> {
        let width = k.nrows();
        if width == 0 || k.ncols() == 0 {
            return Err(Error::Dimension("gradient layer needs L ≥ 1 and dim ≥ 2".into()));
        }
        if a.len() != width || b.len() != width {
            return Err(Error::ShapeMismatch {
                op: "GradientLayer::new",
                expected: (width, 1),
                found: (a.len(), b.len()),
            });
        }
        Ok(Self {
            kind,
            k,
            a,
            b,
            activation,
        })
    }

    /// Glorot-style initialization: `K ~ U(±r)`, `a ~ U(±r/L)`, `b = 0`
    /// with `r = √(6/(L + half))`.
    pub fn random<R: Rng + ?Sized>(
        kind: GradientKind,
        dim: usize,
        width: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "gradient layer needs an even dim and L ≥ 1, got dim={dim}, L={width}"
            )));
        }
        let half = dim / 2;
        let r = (6.0 / (width + half) as f64).sqrt();
        let uk = Uniform::new_inclusive(-r, r).expect("finite bounds");
        let ua = Uniform::new_inclusive(-r / width as f64, r / width as f64).expect("finite bounds");
        let k = DMatrix::from_fn(width, half, |_, _| lit::<T>(uk.sample(rng)));
        let a = DVector::from_fn(width, |_, _| lit::<T>(ua.sample(rng)));
        Self::new(kind, k, a, DVector::zeros(width), activation)
    }

    pub fn dim(&self) -> usize {
        2 * self.k.ncols()
    }

    pub fn width(&self) -> usize {
        self.k.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.k.len() + self.a.len() + self.b.len()
    }

    fn split(&self) -> (usize, usize) {
        match self.kind {
            // (driving half offset, updated half offset)
            GradientKind::P => (0, self.k.ncols()),
            GradientKind::Q => (self.k.ncols(), 0),
        }
    }

    fn preactivation(&self, drive: &DMatrix<T>) -> DMatrix<T> {
        let mut u = &self.k * drive;
        for mut col in u.column_iter_mut() {
            col += &self.b;
        }
        u
    }
}

/// Reduce maps `2N → 2n` through `blockdiag(Xᵀ, Xᵀ)`, Expand maps
/// `2n → 2N` through `blockdiag(X, X)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PsdDirection {
    Reduce,
    Expand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct PsdLayer<T: Real> {
    #[serde(with = "stored_weight")]
    pub weight: StiefelPoint<T>,
    pub direction: PsdDirection,
}

impl<T: Real> PsdLayer<T> {
    pub fn input_dim(&self) -> usize {
        match self.direction {
            PsdDirection::Reduce => 2 * self.weight.nrows(),
            PsdDirection::Expand => 2 * self.weight.ncols(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.direction {
            PsdDirection::Reduce => 2 * self.weight.ncols(),
            PsdDirection::Expand => 2 * self.weight.nrows(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
#[serde(rename_all = "snake_case")]
pub enum Layer<T: Real> {
    Gradient(GradientLayer<T>),
    Psd(PsdLayer<T>),
}

impl<T: Real> Layer<T> {
    pub fn input_dim(&self) -> usize {
        match self {
            Layer::Gradient(g) => g.dim(),
            Layer::Psd(p) => p.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Layer::Gradient(g) => g.dim(),
            Layer::Psd(p) => p.output_dim(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Gradient(g) => g.param_count(),
            Layer::Psd(p) => p.weight.matrix().len(),
        }
    }
}

/// Intermediates of one layer's forward pass.
#[derive(Clone, Debug)]
pub struct LayerTape<T: Real> {
    pub input: DMatrix<T>,
    /// Pre-activations `K·drive + b` for gradient layers.
    pub pre: Option<DMatrix<T>>,
}

/// Forward intermediates of a whole network for one batch.
#[derive(Clone, Debug)]
pub struct Tape<T: Real> {
    version: u64,
    entries: Vec<LayerTape<T>>,
}

impl<T: Real> Tape<T> {
    pub fn entries(&self) -> &[LayerTape<T>] {
        &self.entries
    }
}

/// Parameter gradients of one layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerGrad<T: Real> {
    Gradient {
        dk: DMatrix<T>,
        da: DVector<T>,
        db: DVector<T>,
    },
    /// Euclidean gradient with respect to the Stiefel weight.
    Psd { egrad: DMatrix<T> },
}

pub fn gradient_layer_forward<T: Real>(layer: &GradientLayer<T>, x: &DMatrix<T>) -> Result<DMatrix<T>> {
    Ok(gradient_layer_forward_taped(layer, x)?.0)
}

pub fn gradient_layer_forward_taped<T: Real>(
    layer: &GradientLayer<T>,
    x: &DMatrix<T>,
) -> Result<(DMatrix<T>, LayerTape<T>)> {
    check_shape("gradient_layer_forward", (layer.dim(), x.ncols()), x.shape())?;
    let half = layer.k.ncols();
    let (drive_at, update_at) = layer.split();
    let drive = x.rows(drive_at, half).clone_owned();
    let u = layer.preactivation(&drive);
    let act = layer.activation;
    let mut s = u.map(|v| act.eval(v));
    for (mut row, a) in s.row_iter_mut().zip(layer.a.iter()) {
        row *= *a;
    }
    let mut out = x.clone();
    let mut target = out.rows_mut(update_at, half);
    target += layer.k.tr_mul(&s);
    Ok((
        out,
        LayerTape {
            input: x.clone(),
            pre: Some(u),
        },
    ))
}

/// Reverse pass of a gradient layer. Returns the input gradient and the
/// parameter gradients summed over the batch.
pub fn gradient_layer_backward<T: Real>(
    layer: &GradientLayer<T>,
    tape: &LayerTape<T>,
    upstream: &DMatrix<T>,
) -> Result<(DMatrix<T>, LayerGrad<T>)> {
    let half = layer.k.ncols();
    let batch = tape.input.ncols();
    let u = tape.pre.as_ref().ok_or(Error::StaleTape)?;
    if tape.input.nrows() != layer.dim() || u.shape() != (layer.width(), batch) {
        return Err(Error::StaleTape);
    }
    check_shape("gradient_layer_backward", tape.input.shape(), upstream.shape())?;
    let (drive_at, update_at) = layer.split();
    let drive = tape.input.rows(drive_at, half);
    let g_upd = upstream.rows(update_at, half);
    let act = layer.activation;
    let kg = &layer.k * g_upd;
    let s = u.map(|v| act.eval(v));
    let ds = u.map(|v| act.derivative(v));
    let mut da = DVector::zeros(layer.width());
    let mut db = DVector::zeros(layer.width());
    let mut delta = DMatrix::zeros(layer.width(), batch);
    let mut weighted = DMatrix::zeros(layer.width(), batch);
    for l in 0..layer.width() {
        let a = layer.a[l];
        let mut sa = T::zero();
        let mut sb = T::zero();
        for j in 0..batch {
            let kgj = kg[(l, j)];
            sa += s[(l, j)] * kgj;
            let d = a * ds[(l, j)] * kgj;
            sb += d;
            delta[(l, j)] = d;
            weighted[(l, j)] = a * s[(l, j)];
        }
        da[l] = sa;
        db[l] = sb;
    }
    let dk = weighted * g_upd.transpose() + &delta * drive.transpose();
    let mut input_grad = upstream.clone();
    let mut target = input_grad.rows_mut(drive_at, half);
    target += layer.k.tr_mul(&delta);
    Ok((input_grad, LayerGrad::Gradient { dk, da, db }))
}

fn psd_apply<T: Real>(w: &DMatrix<T>, direction: PsdDirection, x: &DMatrix<T>) -> DMatrix<T> {
    let (big, small) = w.shape();
    match direction {
        PsdDirection::Reduce => {
            let mut out = DMatrix::zeros(2 * small, x.ncols());
            out.rows_mut(0, small).copy_from(&w.tr_mul(&x.rows(0, big)));
            out.rows_mut(small, small)
                .copy_from(&w.tr_mul(&x.rows(big, big)));
            out
        }
        PsdDirection::Expand => {
            let mut out = DMatrix::zeros(2 * big, x.ncols());
            out.rows_mut(0, big).copy_from(&(w * x.rows(0, small)));
            out.rows_mut(big, big).copy_from(&(w * x.rows(small, small)));
            out
        }
    }
}

fn psd_adjoint<T: Real>(w: &DMatrix<T>, direction: PsdDirection, g: &DMatrix<T>) -> DMatrix<T> {
    let flipped = match direction {
        PsdDirection::Reduce => PsdDirection::Expand,
        PsdDirection::Expand => PsdDirection::Reduce,
    };
    psd_apply(w, flipped, g)
}

/// Applies `blockdiag(X, X)` or its transpose blockwise; the `2N×2n` block
/// matrix is never formed.
pub fn psd_layer_forward<T: Real>(layer: &PsdLayer<T>, x: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_shape("psd_layer_forward", (layer.input_dim(), x.ncols()), x.shape())?;
    Ok(psd_apply(layer.weight.matrix(), layer.direction, x))
}

/// Reverse pass of a PSD layer: input gradient and Euclidean weight
/// gradient collected from both diagonal blocks.
pub fn psd_layer_backward<T: Real>(
    layer: &PsdLayer<T>,
    tape: &LayerTape<T>,
    upstream: &DMatrix<T>,
) -> Result<(DMatrix<T>, LayerGrad<T>)> {
    if tape.input.nrows() != layer.input_dim() || tape.pre.is_some() {
        return Err(Error::StaleTape);
    }
    check_shape(
        "psd_layer_backward",
        (layer.output_dim(), tape.input.ncols()),
        upstream.shape(),
    )?;
    let w = layer.weight.matrix();
    let (big, small) = w.shape();
    let x = &tape.input;
    let egrad = match layer.direction {
        PsdDirection::Expand => {
            upstream.rows(0, big) * x.rows(0, small).transpose()
                + upstream.rows(big, big) * x.rows(small, small).transpose()
        }
        PsdDirection::Reduce => {
            x.rows(0, big) * upstream.rows(0, small).transpose()
                + x.rows(big, big) * upstream.rows(small, small).transpose()
        }
    };
    Ok((psd_adjoint(w, layer.direction, upstream), LayerGrad::Psd { egrad }))
}

/// Options for [`build_network_with`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkOptions {
    pub activation: Activation,
    /// Alternate P and Q gradient layers instead of using P only.
    pub alternate_kinds: bool,
    /// Width factor: a gradient layer on `2·half` coordinates has
    /// `L = upscale·half`.
    pub upscale: usize,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        Self {
            activation: Activation::Tanh,
            alternate_kinds: false,
            upscale: 5,
        }
    }
}

/// Stored weights may carry the drift tolerated during training, so they
/// are accepted up to the re-orthonormalization threshold.
mod stored_weight {
    use super::*;
    use crate::linalg::orthonormality_residual;
    use serde::{Deserializer, Serializer};

    pub fn serialize<T: Real + Serialize, S: Serializer>(w: &StiefelPoint<T>, s: S) -> std::result::Result<S::Ok, S::Error> {
        w.matrix().serialize(s)
    }

    pub fn deserialize<'de, T: Real + Deserialize<'de>, D: Deserializer<'de>>(d: D) -> std::result::Result<StiefelPoint<T>, D::Error> {
        let m = DMatrix::<T>::deserialize(d)?;
        if m.ncols() == 0 || m.nrows() < m.ncols() {
            return Err(serde::de::Error::custom("PSD weight needs N ≥ n ≥ 1"));
        }
        let residual = orthonormality_residual(&m);
        if !(residual <= T::reorth_threshold()) {
            return Err(serde::de::Error::custom(format!(
                "PSD weight is not orthonormal (residual {:e})",
                residual.to_f64_lossy()
            )));
        }
        Ok(StiefelPoint::from_trusted(m))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
struct NetworkRepr<T: Real> {
    encoder_len: usize,
    layers: Vec<Layer<T>>,
}

impl<T: Real> From<Network<T>> for NetworkRepr<T> {
    fn from(net: Network<T>) -> Self {
        Self {
            encoder_len: net.encoder_len,
            layers: net.layers,
        }
    }
}

impl<T: Real> TryFrom<NetworkRepr<T>> for Network<T> {
    type Error = Error;

    fn try_from(r: NetworkRepr<T>) -> Result<Self> {
        Network::new(r.layers, r.encoder_len)
    }
}

/// Ordered layers with the encoder/decoder split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"),
    into = "NetworkRepr<T>",
    try_from = "NetworkRepr<T>"
)]
pub struct Network<T: Real> {
    layers: Vec<Layer<T>>,
    encoder_len: usize,
    version: u64,
}

/// Encoder: four gradient layers on `2d` then a Reduce PSD layer.
/// Decoder: two gradient layers on `2n`, an Expand PSD layer, one gradient
/// layer on `2d`.
pub fn build_network<T: Real>(full_dim: usize, reduced_dim: usize, seed: u64) -> Result<Network<T>> {
    build_network_with(full_dim, reduced_dim, seed, NetworkOptions::default())
}

pub fn build_network_with<T: Real>(
    full_dim: usize,
    reduced_dim: usize,
    seed: u64,
    options: NetworkOptions,
) -> Result<Network<T>> {
    if full_dim == 0 || reduced_dim == 0 || full_dim % 2 != 0 || reduced_dim % 2 != 0 {
        return Err(Error::Dimension(format!(
            "network dimensions must be positive and even, got 2d={full_dim}, 2n={reduced_dim}"
        )));
    }
    let (d, n) = (full_dim / 2, reduced_dim / 2);
    if n > d {
        return Err(Error::Dimension(format!(
            "reduced dimension exceeds full dimension: n={n} > d={d}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut count = 0usize;
    let mut kind = || {
        let k = if options.alternate_kinds && count % 2 == 1 {
            GradientKind::Q
        } else {
            GradientKind::P
        };
        count += 1;
        k
    };
    let act = options.activation;
    let up = options.upscale.max(1);
    let mut layers = Vec::with_capacity(9);
    for _ in 0..4 {
        layers.push(Layer::Gradient(GradientLayer::random(kind(), full_dim, up * d, act, &mut rng)?));
    }
    let enc_seed: u64 = rng.random();
    layers.push(Layer::Psd(PsdLayer {
        weight: random_stiefel(d, n, enc_seed)?,
        direction: PsdDirection::Reduce,
    }));
    for _ in 0..2 {
        layers.push(Layer::Gradient(GradientLayer::random(kind(), reduced_dim, up * n, act, &mut rng)?));
    }
    let dec_seed: u64 = rng.random();
    layers.push(Layer::Psd(PsdLayer {
        weight: random_stiefel(d, n, dec_seed)?,
        direction: PsdDirection::Expand,
    }));
    layers.push(Layer::Gradient(GradientLayer::random(kind(), full_dim, up * d, act, &mut rng)?));
    Network::new(layers, 5)
}

impl<T: Real> Network<T> {
    /// Checks that dimensions chain and that the split point is valid.
    pub fn new(layers: Vec<Layer<T>>, encoder_len: usize) -> Result<Self> {
        if layers.is_empty() || encoder_len == 0 || encoder_len >= layers.len() {
            return Err(Error::Dimension(
                "network needs a non-empty encoder and decoder".into(),
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Dimension(format!(
                    "layer dimensions do not chain: {} → {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        if layers[0].input_dim() != layers[layers.len() - 1].output_dim() {
            return Err(Error::Dimension("decoder must return to the input dimension".into()));
        }
        Ok(Self {
            layers,
            encoder_len,
            version: 0,
        })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Mutable access to the parameters. Invalidates existing tapes.
    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.version += 1;
        &mut self.layers
    }

    pub fn encoder_len(&self) -> usize {
        self.encoder_len
    }

    pub fn full_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn reduced_dim(&self) -> usize {
        self.layers[self.encoder_len - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Layer dimensions along the chain, input first.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.full_dim())
            .chain(self.layers.iter().map(Layer::output_dim))
            .collect()
    }

    fn run(&self, range: std::ops::Range<usize>, x: &DMatrix<T>, tape: Option<&mut Vec<LayerTape<T>>>) -> Result<DMatrix<T>> {
        let mut tape = tape;
        let mut cur = x.clone();
        for layer in &self.layers[range] {
            check_shape("forward", (layer.input_dim(), cur.ncols()), cur.shape())?;
            let (next, entry) = match layer {
                Layer::Gradient(g) => gradient_layer_forward_taped(g, &cur)?,
                Layer::Psd(p) => (
                    psd_layer_forward(p, &cur)?,
                    LayerTape {
                        input: cur.clone(),
                        pre: None,
                    },
                ),
            };
            if let Some(t) = tape.as_mut() {
                t.push(entry);
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Full autoencoder pass with recorded intermediates.
    pub fn forward(&self, batch: &DMatrix<T>) -> Result<(DMatrix<T>, Tape<T>)> {
        let mut entries = Vec::with_capacity(self.layers.len());
        let out = self.run(0..self.layers.len(), batch, Some(&mut entries))?;
        Ok((
            out,
            Tape {
                version: self.version,
                entries,
            },
        ))
    }

    pub fn apply(&self, batch: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.run(0..self.layers.len(), batch, None)
    }

    pub fn encode(&self, batch: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.run(0..self.encoder_len, batch, None)
    }

    pub fn decode(&self, batch: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.run(self.encoder_len..self.layers.len(), batch, None)
    }

    /// Reverse pass. `upstream` is the loss gradient with respect to the
    /// network output.
    pub fn backward(&self, tape: &Tape<T>, upstream: &DMatrix<T>) -> Result<Vec<LayerGrad<T>>> {
        if tape.version != self.version || tape.entries.len() != self.layers.len() {
            return Err(Error::StaleTape);
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = upstream.clone();
        for (layer, entry) in self.layers.iter().zip(&tape.entries).rev() {
            let (next, grad) = match layer {
                Layer::Gradient(l) => gradient_layer_backward(l, entry, &g)?,
                Layer::Psd(p) => psd_layer_backward(p, entry, &g)?,
            };
            grads.push(grad);
            g = next;
        }
        grads.reverse();
        Ok(grads)
    }

    /// Jacobian of the decoder at `x_r` by forward-mode differentiation of
    /// the `2n` coordinate directions.
    pub fn decoder_jacobian(&self, x_r: &DVector<T>) -> Result<DMatrix<T>> {
        let m = self.reduced_dim();
        check_shape("decoder_jacobian", (m, 1), (x_r.len(), 1))?;
        self.jacobian_over(self.encoder_len..self.layers.len(), x_r)
    }

    /// Jacobian of the encoder at `x`.
    pub fn encoder_jacobian(&self, x: &DVector<T>) -> Result<DMatrix<T>> {
        check_shape("encoder_jacobian", (self.full_dim(), 1), (x.len(), 1))?;
        self.jacobian_over(0..self.encoder_len, x)
    }

    fn jacobian_over(&self, range: std::ops::Range<usize>, x: &DVector<T>) -> Result<DMatrix<T>> {
        let mut point = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let mut dirs = DMatrix::<T>::identity(x.len(), x.len());
        for layer in &self.layers[range] {
            match layer {
                Layer::Gradient(g) => {
                    dirs = gradient_layer_differential(g, &point, &dirs);
                    point = gradient_layer_forward(g, &point)?;
                }
                Layer::Psd(p) => {
                    dirs = psd_layer_forward(p, &dirs)?;
                    point = psd_layer_forward(p, &point)?;
                }
            }
        }
        Ok(dirs)
    }
}

/// Differential of a gradient layer at the single state `x` applied to the
/// columns of `dirs`: for kind P, `[dq; dp + Kᵀdiag(a⊙σ′(Kq+b))K dq]`.
pub fn gradient_layer_differential<T: Real>(
    layer: &GradientLayer<T>,
    x: &DMatrix<T>,
    dirs: &DMatrix<T>,
) -> DMatrix<T> {
    let half = layer.k.ncols();
    let (drive_at, update_at) = layer.split();
    let u = layer.preactivation(&x.rows(drive_at, half).clone_owned());
    let act = layer.activation;
    let mut kd = &layer.k * dirs.rows(drive_at, half);
    for (l, mut row) in kd.row_iter_mut().enumerate() {
        row *= layer.a[l] * act.derivative(u[(l, 0)]);
    }
    let mut out = dirs.clone();
    let mut target = out.rows_mut(update_at, half);
    target += layer.k.tr_mul(&kd);
    out
}

/// Reconstruction loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    /// `‖X − Y‖_F / ‖X‖_F`
    Relative,
    /// `‖X − Y‖²_F / (2d·k)`
    ScaledMse,
}

/// Loss between the input batch `xb` and the network output `yb`.
pub fn loss<T: Real>(kind: LossKind, xb: &DMatrix<T>, yb: &DMatrix<T>) -> Result<T> {
    check_shape("loss", xb.shape(), yb.shape())?;
    let diff = xb - yb;
    match kind {
        LossKind::ScaledMse => Ok(diff.norm_squared() / from_usize::<T>(xb.len().max(1))),
        LossKind::Relative => {
            let denom = xb.norm();
            if denom == T::zero() {
                return Err(Error::DivisionDegenerate("relative loss"));
            }
            Ok(diff.norm() / denom)
        }
    }
}

/// Gradient of [`loss`] with respect to `yb`.
pub fn loss_backward<T: Real>(kind: LossKind, xb: &DMatrix<T>, yb: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_shape("loss_backward", xb.shape(), yb.shape())?;
    let r = yb - xb;
    match kind {
        LossKind::ScaledMse => Ok(r * (lit::<T>(2.0) / from_usize::<T>(xb.len().max(1)))),
        LossKind::Relative => {
            let denom = xb.norm();
            if denom == T::zero() {
                return Err(Error::DivisionDegenerate("relative loss"));
            }
            let rn = r.norm();
            if rn == T::zero() {
                return Ok(DMatrix::zeros(xb.nrows(), xb.ncols()));
            }
            Ok(r / (rn * denom))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_layer() -> GradientLayer<f64> {
        GradientLayer::new(
            GradientKind::P,
            DMatrix::from_row_slice(2, 2, &[1.0, -0.5, 0.25, 2.0]),
            DVector::from_vec(vec![0.3, -0.7]),
            DVector::from_vec(vec![0.1, -0.2]),
            Activation::Tanh,
        )
        .unwrap()
    }

    #[test]
    fn hand_evaluated_gradient_layer() {
        let l = hand_layer();
        let x = DMatrix::from_column_slice(4, 1, &[0.5, -1.0, 2.0, 3.0]);
        let y = gradient_layer_forward(&l, &x).unwrap();
        let u0 = 1.0 * 0.5 - 0.5 * -1.0 + 0.1;
        let u1 = 0.25 * 0.5 + 2.0 * -1.0 - 0.2;
        let s0 = 0.3 * f64::tanh(u0);
        let s1 = -0.7 * f64::tanh(u1);
        assert_eq!(y[(0, 0)], 0.5);
        assert_eq!(y[(1, 0)], -1.0);
        assert!((y[(2, 0)] - (2.0 + 1.0 * s0 + 0.25 * s1)).abs() < 1e-15);
        assert!((y[(3, 0)] - (3.0 - 0.5 * s0 + 2.0 * s1)).abs() < 1e-15);
    }

    #[test]
    fn zero_amplitudes_give_identity() {
        let mut l = hand_layer();
        l.a.fill(0.0);
        let x = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 - 4.0);
        assert_eq!(gradient_layer_forward(&l, &x).unwrap(), x);
    }

    #[test]
    fn network_shapes_and_count() {
        let net = build_network::<f64>(8, 4, 1).unwrap();
        assert_eq!(net.dims(), vec![8, 8, 8, 8, 8, 4, 4, 4, 8, 8]);
        assert_eq!(net.param_count(), 696);
        assert_eq!(net, build_network::<f64>(8, 4, 1).unwrap());
        assert!(matches!(build_network::<f64>(4, 6, 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn stale_tape_rejected() {
        let mut net = build_network::<f64>(8, 4, 1).unwrap();
        let x = DMatrix::from_element(8, 2, 0.1);
        let (y, tape) = net.forward(&x).unwrap();
        net.layers_mut();
        assert!(matches!(net.backward(&tape, &y), Err(Error::StaleTape)));
    }

    #[test]
    fn loss_hand_values() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let y = DMatrix::zeros(2, 1);
        assert_eq!(loss(LossKind::ScaledMse, &x, &y).unwrap(), 1.0);
        assert_eq!(loss(LossKind::Relative, &x, &y).unwrap(), 1.0);
        assert!(matches!(
            loss(LossKind::Relative, &y, &x),
            Err(Error::DivisionDegenerate(_))
        ));
        assert_eq!(loss_backward(LossKind::Relative, &x, &x).unwrap(), DMatrix::zeros(2, 1));
    }

    #[test]
    fn reduce_after_expand_is_identity() {
        let w = random_stiefel::<f64>(5, 2, 4).unwrap();
        let e = PsdLayer { weight: w.clone(), direction: PsdDirection::Expand };
        let r = PsdLayer { weight: w, direction: PsdDirection::Reduce };
        let x = DMatrix::from_fn(4, 3, |i, j| (i as f64) - (j as f64) * 0.5);
        let back = psd_layer_forward(&r, &psd_layer_forward(&e, &x).unwrap()).unwrap();
        assert!((back - x).norm() < 1e-12);
    }
}
