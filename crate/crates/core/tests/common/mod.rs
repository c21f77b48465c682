//! Dense reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use sae_core::linalg::{normal_matrix, poisson, seeded_rng};
use sae_core::stiefel::{project_tangent, random_stiefel, StiefelPoint, TangentVector};
use sae_core::{implicit_midpoint, NewtonOptions, WaveModel};

pub fn eye(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

pub fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("oracle matrix is invertible")
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// `(I − ½XXᵀ)ZXᵀ − XZᵀ(I − ½XXᵀ)` assembled densely.
pub fn dense_a(x: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let p = eye(n) - x * x.transpose() * 0.5;
    &p * z * x.transpose() - x * z.transpose() * &p
}

/// `(I − ½A)⁻¹(I + ½A)X` with a full `N×N` inverse.
pub fn dense_cayley(x: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let a = dense_a(x, z);
    inverse(&(eye(n) - &a * 0.5)) * (eye(n) + &a * 0.5) * x
}

/// `(I − ½A_Z)⁻¹ A_Y (I − ½A_Z)⁻¹ X`.
pub fn dense_transport_differential(x: &DMatrix<f64>, z: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let inv = inverse(&(eye(n) - dense_a(x, z) * 0.5));
    &inv * dense_a(x, y) * &inv * x
}

/// `(I − ΦΦᵀ)Y + Φ skew(ΦᵀY)`.
pub fn dense_project(phi: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = phi.nrows();
    let pty = phi.transpose() * y;
    (eye(n) - phi * phi.transpose()) * y + phi * ((&pty - pty.transpose()) * 0.5)
}

/// `[X | λ̄] (I − ½M)⁻¹(I + ½M) E` with `M = [[W, −Cᵀ], [C, 0]]`.
pub fn dense_retract_global(x: &DMatrix<f64>, comp: &DMatrix<f64>, w: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let (big, n) = x.shape();
    let mut lambda = DMatrix::zeros(big, big);
    lambda.columns_mut(0, n).copy_from(x);
    lambda.columns_mut(n, big - n).copy_from(comp);
    let m = horizontal_dense(w, c);
    let e = eye(big).columns(0, n).clone_owned();
    lambda * inverse(&(eye(big) - &m * 0.5)) * (eye(big) + &m * 0.5) * e
}

pub fn horizontal_dense(w: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let rest = c.nrows();
    let mut m = DMatrix::zeros(n + rest, n + rest);
    m.view_mut((0, 0), (n, n)).copy_from(w);
    m.view_mut((0, n), (n, rest)).copy_from(&(-c.transpose()));
    m.view_mut((n, 0), (rest, n)).copy_from(c);
    m
}

pub fn point(rows: usize, cols: usize, seed: u64) -> StiefelPoint<f64> {
    random_stiefel(rows, cols, seed).unwrap()
}

/// Random tangent vector at `x` scaled to Frobenius norm `scale`.
pub fn tangent(x: &StiefelPoint<f64>, seed: u64, scale: f64) -> TangentVector<f64> {
    let mut rng = seeded_rng(seed);
    let y: DMatrix<f64> = normal_matrix(x.nrows(), x.ncols(), &mut rng);
    let z = project_tangent(x, &y).unwrap();
    let s = scale / z.matrix().norm();
    z.scale(s)
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded_rng(seed);
    normal_matrix(rows, cols, &mut rng)
}

pub fn symplectic_defect(m: &DMatrix<f64>) -> f64 {
    let j_out = poisson::<f64>(m.nrows());
    let j_in = poisson::<f64>(m.ncols());
    max_abs(&(m.transpose() * j_out * m - j_in))
}

/// Wave snapshots: one implicit-midpoint trajectory per μ, blocks side by side.
pub fn wave_snapshots(n: usize, mus: &[f64], steps: usize) -> DMatrix<f64> {
    let dim = 2 * (n + 2);
    let mut data = DMatrix::zeros(dim, mus.len() * (steps + 1));
    for (j, &mu) in mus.iter().enumerate() {
        let model = WaveModel::new(n, mu).unwrap();
        let tr = implicit_midpoint(&model, &model.initial_state(), 0.0, 1.0, steps, NewtonOptions::default()).unwrap();
        data.columns_mut(j * (steps + 1), steps + 1).copy_from(&tr.states);
    }
    data
}

pub fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![a];
    }
    (0..count).map(|i| a + (b - a) * i as f64 / (count - 1) as f64).collect()
}

pub fn column(m: &DMatrix<f64>, k: usize) -> DVector<f64> {
    m.column(k).clone_owned()
}

/// Largest deviation from the dense references over a family of random
/// instances, per operation.
#[derive(Debug, Default, Clone, Copy)]
pub struct SweepErrors {
    pub instances: usize,
    pub retraction: f64,
    pub transport_submanifold: f64,
    pub transport_differential: f64,
    pub section: f64,
    pub lift: f64,
    pub retract_global: f64,
}

impl SweepErrors {
    pub fn max(&self) -> f64 {
        [
            self.retraction,
            self.transport_submanifold,
            self.transport_differential,
            self.section,
            self.lift,
            self.retract_global,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// `count` instances with `2 ≤ N ≤ 12` and `1 ≤ n < N`.
pub fn geometry_sweep(count: usize) -> SweepErrors {
    use sae_core::homogeneous::{lift_omega, lift_to_global, retract_global, section_qr, HorizontalElement};
    use sae_core::stiefel::{cayley_retract, transport_differential, transport_submanifold};

    let mut e = SweepErrors::default();
    for i in 0..count {
        let big = 2 + i % 11;
        let n = 1 + (i / 11) % (big - 1).min(4);
        let seed = 1000 + i as u64;
        let x = point(big, n, seed);
        let xm = x.matrix();
        let z = tangent(&x, seed + 1, 0.2 + 0.1 * (i % 7) as f64);
        let y = tangent(&x, seed + 2, 1.0);

        let r = cayley_retract(&x, &z).unwrap();
        let phi = dense_cayley(xm, z.matrix());
        e.retraction = e.retraction.max(max_abs(&(r.matrix() - &phi)));

        let ts = transport_submanifold(&x, &z, &y).unwrap();
        e.transport_submanifold = e
            .transport_submanifold
            .max(max_abs(&(ts.matrix() - dense_project(&phi, y.matrix()))));

        let td = transport_differential(&x, &z, &y).unwrap();
        e.transport_differential = e
            .transport_differential
            .max(max_abs(&(td.matrix() - dense_transport_differential(xm, z.matrix(), y.matrix()))));

        let section = section_qr(&x, seed + 3).unwrap();
        let mut full = DMatrix::zeros(big, big);
        full.columns_mut(0, n).copy_from(xm);
        full.columns_mut(n, big - n).copy_from(section.complement());
        e.section = e.section.max(max_abs(&(full.transpose() * &full - eye(big))));

        let h = lift_to_global(&section, &z).unwrap();
        let conj = full.transpose() * lift_omega(&x, z.matrix()).unwrap() * &full;
        e.lift = e.lift.max(max_abs(&(h.to_dense() - conj)));

        let v = HorizontalElement::from_blocks(&(gaussian(n, n, seed + 4) * 0.3), gaussian(big - n, n, seed + 5) * 0.3)
            .unwrap();
        let got = retract_global(&section, &v).unwrap();
        let want = dense_retract_global(xm, section.complement(), &v.skew_block(), v.comp_block());
        e.retract_global = e.retract_global.max(max_abs(&(got.matrix() - want)));
        e.instances += 1;
    }
    e
}

/// `e(x) = x`, `d(ξ) = diag(w)·ξ`: small enough to evaluate error measures
/// by hand.
pub struct DiagonalMap(pub Vec<f64>);

impl sae_core::Autoencoder<f64> for DiagonalMap {
    fn full_dim(&self) -> usize {
        self.0.len()
    }
    fn reduced_dim(&self) -> usize {
        self.0.len()
    }
    fn encode(&self, x: &DVector<f64>) -> sae_core::Result<DVector<f64>> {
        Ok(x.clone())
    }
    fn decode(&self, x_r: &DVector<f64>) -> sae_core::Result<DVector<f64>> {
        Ok(DVector::from_fn(x_r.len(), |i, _| self.0[i] * x_r[i]))
    }
    fn decode_jacobian(&self, _: &DVector<f64>) -> sae_core::Result<DMatrix<f64>> {
        Ok(DMatrix::from_diagonal(&DVector::from_vec(self.0.clone())))
    }
    fn is_linear(&self) -> bool {
        true
    }
}

/// Error measures on a two-step synthetic trajectory, computed by the
/// library and by hand; returns the largest discrepancy.
///
/// Exact states (1,2), (3,−1), (0,2); reduced states (1,2), (2,−2), (0,4);
/// decoder (ξ₁, ½ξ₂); reference state (½, −1). Σ‖x^k‖² = 19.
pub fn hand_error_discrepancy() -> f64 {
    use sae_core::{build_rom, projection_error, reduction_error, ErrorVariant};
    let exact = DMatrix::from_column_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 2.0]);
    let reduced = DMatrix::from_column_slice(2, 3, &[1.0, 2.0, 2.0, -2.0, 0.0, 4.0]);
    let map = DiagonalMap(vec![1.0, 0.5]);
    let x_ref = DVector::from_vec(vec![0.5, -1.0]);

    let no_ref = build_rom(&map, &column(&exact, 0), ErrorVariant::NoRef).unwrap();
    let with_ref = build_rom(&map, &x_ref, ErrorVariant::WithRef).unwrap();
    assert_eq!(with_ref.reference(), Some(&x_ref));

    // decoded (1,1), (2,−1), (0,2): squared misfits 1 + 1 + 0
    let red_no = (2.0f64 / 19.0).sqrt();
    // shifted (1.5,0), (2.5,−2), (0.5,1): 4.25 + 1.25 + 1.25
    let red_with = (6.75f64 / 19.0).sqrt();
    // d∘e: (1,1), (3,−½), (0,1): 1 + 0.25 + 1
    let proj_no = (2.25f64 / 19.0).sqrt();
    // x − x_ref: (½,3), (5/2,0), (−½,3) → (1,½), (3,−1), (0,½): 2.25 + 0 + 2.25
    let proj_with = (4.5f64 / 19.0).sqrt();

    [
        reduction_error(&exact, &no_ref, &reduced).unwrap() - red_no,
        reduction_error(&exact, &with_ref, &reduced).unwrap() - red_with,
        projection_error(ErrorVariant::NoRef, &exact, &map, None).unwrap() - proj_no,
        projection_error(ErrorVariant::WithRef, &exact, &map, Some(&x_ref)).unwrap() - proj_with,
    ]
    .into_iter()
    .fold(0.0, |m, e| m.max(e.abs()))
}
