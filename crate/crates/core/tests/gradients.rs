mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use sae_core::network::*;
use sae_core::stiefel::StiefelPoint;

const STEP: f64 = 1e-6;

/// Central difference of `f` with respect to every entry of `m`.
fn fd_matrix(m: &DMatrix<f64>, f: &mut dyn FnMut(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(m.nrows(), m.ncols());
    let mut p = m.clone();
    for idx in 0..m.len() {
        let orig = p[idx];
        p[idx] = orig + STEP;
        let fp = f(&p);
        p[idx] = orig - STEP;
        let fm = f(&p);
        p[idx] = orig;
        g[idx] = (fp - fm) / (2.0 * STEP);
    }
    g
}

fn as_col(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn as_vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn check_gradient_layer(kind: GradientKind, act: Activation) {
    let mut rng = sae_core::linalg::seeded_rng(5);
    let layer = GradientLayer::<f64>::random(kind, 4, 10, act, &mut rng).unwrap();
    let mut layer = layer;
    layer.b = as_vec(&(gaussian(10, 1, 6) * 0.3));
    layer.a = as_vec(&(gaussian(10, 1, 7)));
    let x = gaussian(4, 3, 8);
    let up = gaussian(4, 3, 9);
    let (_, tape) = gradient_layer_forward_taped(&layer, &x).unwrap();
    let (dx, grad) = gradient_layer_backward(&layer, &tape, &up).unwrap();
    let LayerGrad::Gradient { dk, da, db } = grad else { panic!("wrong gradient kind") };

    let objective = |l: &GradientLayer<f64>, x: &DMatrix<f64>| gradient_layer_forward(l, x).unwrap().dot(&up);
    let fd_x = fd_matrix(&x, &mut |p| objective(&layer, p));
    let fd_k = fd_matrix(&layer.k, &mut |p| {
        let mut l = layer.clone();
        l.k = p.clone();
        objective(&l, &x)
    });
    let fd_a = fd_matrix(&as_col(&layer.a), &mut |p| {
        let mut l = layer.clone();
        l.a = as_vec(p);
        objective(&l, &x)
    });
    let fd_b = fd_matrix(&as_col(&layer.b), &mut |p| {
        let mut l = layer.clone();
        l.b = as_vec(p);
        objective(&l, &x)
    });
    assert!(rel(&dx, &fd_x) < 1e-5, "{kind:?} {act:?} input");
    assert!(rel(&dk, &fd_k) < 1e-5, "{kind:?} {act:?} K");
    assert!(rel(&as_col(&da), &fd_a) < 1e-5, "{kind:?} {act:?} a");
    assert!(rel(&as_col(&db), &fd_b) < 1e-5, "{kind:?} {act:?} b");
}

#[test]
fn gradient_layer_backward_matches_finite_differences() {
    for kind in [GradientKind::P, GradientKind::Q] {
        for act in [Activation::Tanh, Activation::Explu] {
            check_gradient_layer(kind, act);
        }
    }
}

#[test]
fn psd_layer_backward_matches_finite_differences() {
    for direction in [PsdDirection::Reduce, PsdDirection::Expand] {
        let layer = PsdLayer { weight: point(4, 2, 11), direction };
        let x = gaussian(layer.input_dim(), 3, 12);
        let up = gaussian(layer.output_dim(), 3, 13);
        let tape = LayerTape { input: x.clone(), pre: None };
        let (dx, grad) = psd_layer_backward(&layer, &tape, &up).unwrap();
        let LayerGrad::Psd { egrad } = grad else { panic!("wrong gradient kind") };
        let fd_x = fd_matrix(&x, &mut |p| psd_layer_forward(&layer, p).unwrap().dot(&up));
        let fd_w = fd_matrix(layer.weight.matrix(), &mut |p| {
            let l = PsdLayer { weight: StiefelPoint::new_unchecked(p.clone()), direction };
            psd_layer_forward(&l, &x).unwrap().dot(&up)
        });
        assert!(rel(&dx, &fd_x) < 1e-5);
        assert!(rel(&egrad, &fd_w) < 1e-5);
    }
}

fn perturbed_loss(net: &Network<f64>, layer: usize, which: usize, p: &DMatrix<f64>, x: &DMatrix<f64>, kind: LossKind) -> f64 {
    let mut n2 = net.clone();
    match &mut n2.layers_mut()[layer] {
        Layer::Gradient(g) => match which {
            0 => g.k = p.clone(),
            1 => g.a = as_vec(p),
            _ => g.b = as_vec(p),
        },
        Layer::Psd(l) => l.weight = StiefelPoint::new_unchecked(p.clone()),
    }
    loss(kind, x, &n2.apply(x).unwrap()).unwrap()
}

#[test]
fn network_gradient_matches_finite_differences() {
    for kind in [LossKind::Relative, LossKind::ScaledMse] {
        let mut net = build_network::<f64>(8, 4, 21).unwrap();
        // nonzero biases so every parameter block is exercised
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            if let Layer::Gradient(g) = layer {
                g.b = as_vec(&(gaussian(g.b.len(), 1, 30 + i as u64) * 0.2));
            }
        }
        let x = gaussian(8, 5, 22);
        let (out, tape) = net.forward(&x).unwrap();
        let up = loss_backward(kind, &x, &out).unwrap();
        let grads = net.backward(&tape, &up).unwrap();
        assert_eq!(grads.len(), 9);
        for (i, (layer, grad)) in net.layers().iter().zip(&grads).enumerate() {
            match (layer, grad) {
                (Layer::Gradient(g), LayerGrad::Gradient { dk, da, db }) => {
                    let blocks = [(g.k.clone(), dk.clone()), (as_col(&g.a), as_col(da)), (as_col(&g.b), as_col(db))];
                    for (which, (param, analytic)) in blocks.iter().enumerate() {
                        let fd = fd_matrix(param, &mut |p| perturbed_loss(&net, i, which, p, &x, kind));
                        assert!(rel(analytic, &fd) < 1e-5, "{kind:?} layer {i} block {which}: {}", rel(analytic, &fd));
                    }
                }
                (Layer::Psd(l), LayerGrad::Psd { egrad }) => {
                    let fd = fd_matrix(l.weight.matrix(), &mut |p| perturbed_loss(&net, i, 0, p, &x, kind));
                    assert!(rel(egrad, &fd) < 1e-5, "{kind:?} layer {i}");
                }
                _ => panic!("layer {i}: gradient kind mismatch"),
            }
        }
    }
}

#[test]
fn decoder_jacobian_matches_finite_differences() {
    let net = build_network::<f64>(8, 4, 23).unwrap();
    let xr = gaussian(4, 1, 24);
    let jac = net.decoder_jacobian(&xr.column(0).clone_owned()).unwrap();
    let mut fd = DMatrix::zeros(8, 4);
    for j in 0..4 {
        let mut p = xr.clone();
        p[j] += STEP;
        let mut m = xr.clone();
        m[j] -= STEP;
        let diff = (net.decode(&p).unwrap() - net.decode(&m).unwrap()) / (2.0 * STEP);
        fd.set_column(j, &diff.column(0));
    }
    assert!(rel(&jac, &fd) < 1e-5);
    let x = gaussian(8, 1, 25);
    let ejac = net.encoder_jacobian(&x.column(0).clone_owned()).unwrap();
    let mut efd = DMatrix::zeros(4, 8);
    for j in 0..8 {
        let mut p = x.clone();
        p[j] += STEP;
        let mut m = x.clone();
        m[j] -= STEP;
        efd.set_column(j, &((net.encode(&p).unwrap() - net.encode(&m).unwrap()) / (2.0 * STEP)).column(0));
    }
    assert!(rel(&ejac, &efd) < 1e-5);
}

#[test]
fn layer_differential_matches_finite_differences() {
    let mut rng = sae_core::linalg::seeded_rng(26);
    for kind in [GradientKind::P, GradientKind::Q] {
        let g = GradientLayer::<f64>::random(kind, 6, 15, Activation::Tanh, &mut rng).unwrap();
        let x = gaussian(6, 1, 27);
        let jac = gradient_layer_differential(&g, &x, &eye(6));
        let mut fd = DMatrix::zeros(6, 6);
        for j in 0..6 {
            let mut p = x.clone();
            p[j] += STEP;
            let mut m = x.clone();
            m[j] -= STEP;
            fd.set_column(j, &((gradient_layer_forward(&g, &p).unwrap() - gradient_layer_forward(&g, &m).unwrap()) / (2.0 * STEP)).column(0));
        }
        assert!(rel(&jac, &fd) < 1e-6);
    }
}

#[test]
fn parameter_count_for_small_network() {
    let net = build_network::<f64>(8, 4, 1).unwrap();
    assert_eq!(net.param_count(), 696);
    assert_eq!(net.dims(), vec![8, 8, 8, 8, 8, 4, 4, 4, 8, 8]);
}
