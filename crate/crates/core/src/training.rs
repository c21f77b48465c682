//! Training loops and the per-layer optimizer bundle.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::network::{loss, loss_backward, Layer, LayerGrad, LossKind, Network};
use crate::optimizers::{AdamHyper, EuclideanAdam, ManifoldMethod, ManifoldOptimizer};
use crate::scalar::{from_usize, Real};

enum LayerOptimizer<T: Real> {
    Gradient {
        k: EuclideanAdam<T>,
        a: EuclideanAdam<T>,
        b: EuclideanAdam<T>,
    },
    Psd(ManifoldOptimizer<T>),
}

/// One optimizer instance per layer: classic Adam for gradient layers and
/// the selected manifold method for PSD layers.
pub struct NetworkOptimizer<T: Real> {
    layers: Vec<LayerOptimizer<T>>,
}

impl<T: Real> NetworkOptimizer<T> {
    /// `hyper` seeds every layer's optimizer; its decay setting applies to
    /// all of them.
    pub fn new(
        net: &Network<T>,
        method: ManifoldMethod,
        hyper: AdamHyper<T>,
        section_seed: u64,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(net.layers().len());
        for layer in net.layers() {
            layers.push(match layer {
                Layer::Gradient(g) => LayerOptimizer::Gradient {
                    k: EuclideanAdam::new(hyper.clone(), g.k.nrows(), g.k.ncols()),
                    a: EuclideanAdam::new(hyper.clone(), g.a.len(), 1),
                    b: EuclideanAdam::new(hyper.clone(), g.b.len(), 1),
                },
                Layer::Psd(p) => LayerOptimizer::Psd(ManifoldOptimizer::new(
                    method,
                    hyper.clone(),
                    p.weight.nrows(),
                    p.weight.ncols(),
                    section_seed,
                )?),
            });
        }
        Ok(Self { layers })
    }

    /// Total re-orthonormalizations over all PSD layers.
    pub fn reorthonormalizations(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| match l {
                LayerOptimizer::Psd(o) => o.reorthonormalizations(),
                _ => 0,
            })
            .sum()
    }

    /// Applies one update to every layer.
    pub fn step(&mut self, net: &mut Network<T>, grads: &[LayerGrad<T>]) -> Result<()> {
        if grads.len() != self.layers.len() || net.layers().len() != self.layers.len() {
            return Err(Error::Dimension(
                "gradient list does not match the network".into(),
            ));
        }
        for ((layer, opt), grad) in net.layers_mut().iter_mut().zip(&mut self.layers).zip(grads) {
            match (layer, opt, grad) {
                (
                    Layer::Gradient(g),
                    LayerOptimizer::Gradient { k, a, b },
                    LayerGrad::Gradient { dk, da, db },
                ) => {
                    k.step(&mut g.k, dk)?;
                    step_vector(a, &mut g.a, da)?;
                    step_vector(b, &mut g.b, db)?;
                }
                (Layer::Psd(p), LayerOptimizer::Psd(o), LayerGrad::Psd { egrad }) => {
                    p.weight = o.step(&p.weight, egrad)?;
                }
                _ => {
                    return Err(Error::Dimension(
                        "layer kinds of network, optimizer and gradients disagree".into(),
                    ))
                }
            }
        }
        Ok(())
    }
}

fn step_vector<T: Real>(opt: &mut EuclideanAdam<T>, param: &mut DVector<T>, grad: &DVector<T>) -> Result<()> {
    let mut m = DMatrix::from_column_slice(param.len(), 1, param.as_slice());
    opt.step(&mut m, &DMatrix::from_column_slice(grad.len(), 1, grad.as_slice()))?;
    param.copy_from_slice(m.as_slice());
    Ok(())
}

fn gather<T: Real>(data: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(data.nrows(), idx.len(), |i, j| data[(i, idx[j])])
}

/// Forward, loss, backward and update on one batch. Returns the batch loss.
pub fn train_batch<T: Real>(
    net: &mut Network<T>,
    opt: &mut NetworkOptimizer<T>,
    batch: &DMatrix<T>,
    kind: LossKind,
) -> Result<T> {
    let (out, tape) = net.forward(batch)?;
    let value = loss(kind, batch, &out)?;
    let upstream = loss_backward(kind, batch, &out)?;
    let grads = net.backward(&tape, &upstream)?;
    opt.step(net, &grads)?;
    Ok(value)
}

/// One pass over a shuffled copy of the columns of `data`, in batches of
/// `batch_size` (the last batch may be short). Returns the mean batch loss.
pub fn train_epoch<T: Real, R: Rng + ?Sized>(
    net: &mut Network<T>,
    opt: &mut NetworkOptimizer<T>,
    data: &DMatrix<T>,
    batch_size: usize,
    kind: LossKind,
    rng: &mut R,
) -> Result<T> {
    Ok(train_epoch_visits(net, opt, data, batch_size, kind, rng)?.0)
}

/// As [`train_epoch`], also returning how often each column was visited.
pub fn train_epoch_visits<T: Real, R: Rng + ?Sized>(
    net: &mut Network<T>,
    opt: &mut NetworkOptimizer<T>,
    data: &DMatrix<T>,
    batch_size: usize,
    kind: LossKind,
    rng: &mut R,
) -> Result<(T, Vec<usize>)> {
    if data.ncols() == 0 {
        return Err(Error::EmptyData);
    }
    if batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..data.ncols()).collect();
    order.shuffle(rng);
    let mut visits = vec![0usize; data.ncols()];
    let mut total = T::zero();
    let mut count = 0usize;
    for chunk in order.chunks(batch_size) {
        for &c in chunk {
            visits[c] += 1;
        }
        total += train_batch(net, opt, &gather(data, chunk), kind)?;
        count += 1;
    }
    Ok((total / from_usize::<T>(count), visits))
}

/// Number of iterations of non-epoch-wise training:
/// `⌈n_epochs · n_cols / batch_size⌉`.
pub fn noepoch_iterations(n_epochs: usize, n_cols: usize, batch_size: usize) -> usize {
    (n_epochs * n_cols).div_ceil(batch_size.max(1))
}

/// Non-epoch-wise training: every iteration draws `batch_size` columns
/// uniformly with replacement. Returns the loss of every iteration.
pub fn train_noepoch<T: Real, R: Rng + ?Sized>(
    net: &mut Network<T>,
    opt: &mut NetworkOptimizer<T>,
    data: &DMatrix<T>,
    batch_size: usize,
    n_epochs: usize,
    kind: LossKind,
    rng: &mut R,
) -> Result<Vec<T>> {
    if data.ncols() == 0 {
        return Err(Error::EmptyData);
    }
    if batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be at least 1".into()));
    }
    let iters = noepoch_iterations(n_epochs, data.ncols(), batch_size);
    let mut losses = Vec::with_capacity(iters);
    let mut idx = vec![0usize; batch_size];
    for _ in 0..iters {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..data.ncols());
        }
        losses.push(train_batch(net, opt, &gather(data, &idx), kind)?);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::seeded_rng;
    use crate::network::build_network;
    use crate::stiefel::{Metric, Transport};

    fn toy_data() -> DMatrix<f64> {
        DMatrix::from_fn(8, 13, |i, j| ((i + 1) as f64 * 0.3 + j as f64 * 0.17).sin())
    }

    fn setup() -> (Network<f64>, NetworkOptimizer<f64>) {
        let net = build_network::<f64>(8, 4, 3).unwrap();
        let opt = NetworkOptimizer::new(
            &net,
            ManifoldMethod::StiefelAdam {
                metric: Metric::Canonical,
                transport: Transport::Submanifold,
            },
            AdamHyper::default(),
            0,
        )
        .unwrap();
        (net, opt)
    }

    #[test]
    fn iteration_count_formula() {
        assert_eq!(noepoch_iterations(100, 4020, 32), 12563);
        assert_eq!(noepoch_iterations(1, 17, 17), 1);
    }

    #[test]
    fn epoch_visits_every_column_once() {
        let (mut net, mut opt) = setup();
        let mut rng = seeded_rng(1);
        let (l, visits) =
            train_epoch_visits(&mut net, &mut opt, &toy_data(), 4, LossKind::Relative, &mut rng).unwrap();
        assert!(l.is_finite());
        assert!(visits.iter().all(|&v| v == 1));
    }

    #[test]
    fn epoch_is_deterministic() {
        let run = || {
            let (mut net, mut opt) = setup();
            let mut rng = seeded_rng(9);
            (0..2)
                .map(|_| train_epoch(&mut net, &mut opt, &toy_data(), 5, LossKind::ScaledMse, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        let a = run();
        let b = run();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn empty_data_rejected() {
        let (mut net, mut opt) = setup();
        let mut rng = seeded_rng(1);
        let empty = DMatrix::<f64>::zeros(8, 0);
        assert_eq!(
            train_epoch(&mut net, &mut opt, &empty, 4, LossKind::Relative, &mut rng),
            Err(Error::EmptyData)
        );
    }

    #[test]
    fn single_full_batch_is_one_update() {
        let (mut net, mut opt) = setup();
        let data = toy_data();
        let before = loss(LossKind::Relative, &data, &net.apply(&data).unwrap()).unwrap();
        let mut rng = seeded_rng(1);
        let l = train_epoch(&mut net, &mut opt, &data, 13, LossKind::Relative, &mut rng).unwrap();
        assert!((l - before).abs() < 1e-12);
    }
}
