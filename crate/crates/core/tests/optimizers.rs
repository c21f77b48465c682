mod common;

use common::*;
use nalgebra::DMatrix;
use sae_core::optimizers::*;
use sae_core::stiefel::{Metric, StiefelPoint, Transport};

fn methods() -> Vec<ManifoldMethod> {
    let mut out = vec![ManifoldMethod::HomogeneousAdam];
    for metric in [Metric::Euclidean, Metric::Canonical] {
        for transport in [Transport::Submanifold, Transport::Differential] {
            out.push(ManifoldMethod::StiefelAdam { metric, transport });
        }
    }
    out
}

/// `f(X) = −tr(XᵀSX)` for a fixed symmetric `S`; minimized by a dominant
/// invariant subspace.
fn objective(s: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    -(x.transpose() * s * x).trace()
}

#[test]
fn every_manifold_optimizer_stays_orthonormal_for_500_steps() {
    let big = 20;
    let n = 3;
    let g = gaussian(big, big, 1);
    let s = &g + g.transpose();
    for method in methods() {
        for decay in [None, Some(DEFAULT_DECAY)] {
            let mut hyper = AdamHyper::<f64>::new(0.01, 0.9, 0.99, 1e-8, None).unwrap();
            hyper.decay = decay;
            let mut opt = ManifoldOptimizer::new(method, hyper, big, n, 77).unwrap();
            let mut x = point(big, n, 2);
            let start = objective(&s, x.matrix());
            let mut worst: f64 = 0.0;
            for _ in 0..500 {
                let egrad = -(&s * x.matrix()) * 2.0;
                x = opt.step(&x, &egrad).unwrap();
                worst = worst.max(x.residual());
            }
            assert!(worst <= 1e-8, "{method:?}: residual {worst:e}");
            assert!(objective(&s, x.matrix()) < start, "{method:?} did not descend");
            assert_eq!(opt.steps(), 500);
        }
    }
}

#[test]
fn euclidean_adam_two_steps_by_hand() {
    let hyper = AdamHyper::<f64>::default();
    let mut opt = EuclideanAdam::new(hyper, 1, 1);
    let mut p = DMatrix::from_element(1, 1, 0.5);
    opt.step(&mut p, &DMatrix::from_element(1, 1, 2.0)).unwrap();
    // t = 1: B1 = 2, B2 = 4
    let mut want = 0.5 - 0.001 * 2.0 / (4.0f64 + 1e-8).sqrt();
    assert!((p[(0, 0)] - want).abs() < 1e-16);
    opt.step(&mut p, &DMatrix::from_element(1, 1, -1.0)).unwrap();
    // t = 2: weights (β−β²)/(1−β²), (1−β)/(1−β²)
    let (b1, b2) = (0.9f64, 0.99f64);
    let m = (b1 - b1 * b1) / (1.0 - b1 * b1) * 2.0 + (1.0 - b1) / (1.0 - b1 * b1) * -1.0;
    let v = (b2 - b2 * b2) / (1.0 - b2 * b2) * 4.0 + (1.0 - b2) / (1.0 - b2 * b2) * 1.0;
    want -= 0.001 * m / (v + 1e-8).sqrt();
    assert!((p[(0, 0)] - want).abs() < 1e-15);
}

#[test]
fn decay_shrinks_the_learning_rate_geometrically() {
    let mut opt = ManifoldOptimizer::new(
        ManifoldMethod::StiefelAdam { metric: Metric::Canonical, transport: Transport::Submanifold },
        AdamHyper::<f64>::default().with_decay(DEFAULT_DECAY),
        6,
        2,
        0,
    )
    .unwrap();
    let mut x = point(6, 2, 3);
    for _ in 0..10 {
        x = opt.step(&x, &gaussian(6, 2, 4)).unwrap();
    }
    let want = 0.001 * DEFAULT_DECAY.powi(10);
    assert!((opt.hyper().eta - want).abs() < 1e-18);
    assert_eq!(opt.hyper().t, 11);
}

#[test]
fn stiefel_first_moment_is_tangent_at_the_iterate() {
    let mut opt = ManifoldOptimizer::new(
        ManifoldMethod::StiefelAdam { metric: Metric::Euclidean, transport: Transport::Differential },
        AdamHyper::<f64>::default(),
        9,
        3,
        0,
    )
    .unwrap();
    let mut x = point(9, 3, 5);
    for k in 0..20 {
        x = opt.step(&x, &gaussian(9, 3, 10 + k)).unwrap();
        let b1 = opt.first_moment().unwrap();
        assert!(b1.is_anchored_at(&x));
        assert!(b1.tangency_residual() < 1e-9);
    }
}

#[test]
fn drifted_iterate_is_reorthonormalized() {
    let mut m = point(8, 2, 6).into_matrix();
    m *= 1.0 + 1e-6;
    let drifted = StiefelPoint::new_unchecked(m);
    let mut opt = ManifoldOptimizer::new(
        ManifoldMethod::StiefelAdam { metric: Metric::Canonical, transport: Transport::Submanifold },
        AdamHyper::<f64>::default(),
        8,
        2,
        0,
    )
    .unwrap();
    let next = opt.step(&drifted, &gaussian(8, 2, 7)).unwrap();
    assert!(next.residual() < 1e-12);
    assert_eq!(opt.reorthonormalizations(), 1);
}

#[test]
fn homogeneous_adam_is_seed_reproducible() {
    let run = || {
        let mut opt = ManifoldOptimizer::new(ManifoldMethod::HomogeneousAdam, AdamHyper::<f64>::default(), 7, 2, 99).unwrap();
        let mut x = point(7, 2, 8);
        for k in 0..5 {
            x = opt.step(&x, &gaussian(7, 2, 20 + k)).unwrap();
        }
        x
    };
    assert_eq!(run(), run());
}
