//! Full-order to reduced-order pipeline: snapshot sets, the cotangent-lift
//! baseline, ROM assembly with or without a reference state, the reduced
//! vector field, reconstruction and the two trajectory error measures.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::integrators::{implicit_midpoint, NewtonOptions, Trajectory, VectorField};
use crate::linalg::{block_diag2, left_singular_vectors, poisson};
use crate::network::Network;
use crate::scalar::{lit, Real};
use crate::stiefel::StiefelPoint;

/// Snapshot matrix: parameter `j`, time step `k` is column `j·(K+1) + k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSet<T: Real> {
    pub data: DMatrix<T>,
    pub params: Vec<T>,
    pub steps: usize,
    pub t0: T,
    pub t1: T,
    pub normalized: bool,
    /// Initial state of each parameter, one per column.
    pub initial_states: DMatrix<T>,
}

impl<T: Real> SnapshotSet<T> {
    /// Unnormalized set; initial states are read off the `k = 0` columns.
    pub fn new(data: DMatrix<T>, params: Vec<T>, steps: usize, t0: T, t1: T) -> Result<Self> {
        let per = steps + 1;
        if params.is_empty() {
            return Err(Error::EmptyData);
        }
        check_shape(
            "SnapshotSet::new",
            (data.nrows(), params.len() * per),
            data.shape(),
        )?;
        let initial_states =
            DMatrix::from_fn(data.nrows(), params.len(), |i, j| data[(i, j * per)]);
        Ok(Self {
            data,
            params,
            steps,
            t0,
            t1,
            normalized: false,
            initial_states,
        })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Columns belonging to parameter `j`.
    pub fn block(&self, j: usize) -> DMatrix<T> {
        let per = self.steps + 1;
        self.data.columns(j * per, per).clone_owned()
    }

    /// Subtracts each parameter's initial state from its block.
    pub fn normalize(&self) -> Result<Self> {
        if self.normalized {
            return Err(Error::AlreadyNormalized);
        }
        let mut out = self.clone();
        self.shift_blocks(&mut out.data, |a, b| a - b);
        out.normalized = true;
        Ok(out)
    }

    /// Inverse of [`SnapshotSet::normalize`].
    pub fn denormalize(&self) -> Result<Self> {
        if !self.normalized {
            return Err(Error::InvalidParameter(
                "snapshot set is not normalized".into(),
            ));
        }
        let mut out = self.clone();
        self.shift_blocks(&mut out.data, |a, b| a + b);
        out.normalized = false;
        Ok(out)
    }

    fn shift_blocks(&self, data: &mut DMatrix<T>, op: impl Fn(T, T) -> T) {
        let per = self.steps + 1;
        for j in 0..self.params.len() {
            for k in 0..per {
                let col = j * per + k;
                for i in 0..data.nrows() {
                    data[(i, col)] = op(data[(i, col)], self.initial_states[(i, j)]);
                }
            }
        }
    }
}

/// Encoder/decoder pair between `R^{2d}` and `R^{2n}`.
pub trait Autoencoder<T: Real> {
    fn full_dim(&self) -> usize;

    fn reduced_dim(&self) -> usize;

    fn encode(&self, x: &DVector<T>) -> Result<DVector<T>>;

    fn decode(&self, x_r: &DVector<T>) -> Result<DVector<T>>;

    /// `2d × 2n` Jacobian of the decoder.
    fn decode_jacobian(&self, x_r: &DVector<T>) -> Result<DMatrix<T>>;

    /// `true` when both maps are linear.
    fn is_linear(&self) -> bool {
        false
    }
}

fn single<T: Real>(x: &DVector<T>) -> DMatrix<T> {
    DMatrix::from_column_slice(x.len(), 1, x.as_slice())
}

impl<T: Real> Autoencoder<T> for Network<T> {
    fn full_dim(&self) -> usize {
        Network::full_dim(self)
    }

    fn reduced_dim(&self) -> usize {
        Network::reduced_dim(self)
    }

    fn encode(&self, x: &DVector<T>) -> Result<DVector<T>> {
        Ok(Network::encode(self, &single(x))?.column(0).clone_owned())
    }

    fn decode(&self, x_r: &DVector<T>) -> Result<DVector<T>> {
        Ok(Network::decode(self, &single(x_r))?.column(0).clone_owned())
    }

    fn decode_jacobian(&self, x_r: &DVector<T>) -> Result<DMatrix<T>> {
        self.decoder_jacobian(x_r)
    }
}

/// Cotangent-lift basis `A = blockdiag(X, X)` with `A⁺ = blockdiag(Xᵀ, Xᵀ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdMap<T: Real> {
    basis: StiefelPoint<T>,
}

impl<T: Real> PsdMap<T> {
    pub fn new(basis: StiefelPoint<T>) -> Self {
        Self { basis }
    }

    pub fn basis(&self) -> &StiefelPoint<T> {
        &self.basis
    }

    /// `blockdiag(X, X)`.
    pub fn matrix(&self) -> DMatrix<T> {
        block_diag2(self.basis.matrix())
    }
}

impl<T: Real> Autoencoder<T> for PsdMap<T> {
    fn full_dim(&self) -> usize {
        2 * self.basis.nrows()
    }

    fn reduced_dim(&self) -> usize {
        2 * self.basis.ncols()
    }

    fn encode(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let (d, n) = (self.basis.nrows(), self.basis.ncols());
        check_shape("PsdMap::encode", (2 * d, 1), (x.len(), 1))?;
        let xm = self.basis.matrix();
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&xm.tr_mul(&x.rows(0, d)));
        out.rows_mut(n, n).copy_from(&xm.tr_mul(&x.rows(d, d)));
        Ok(out)
    }

    fn decode(&self, x_r: &DVector<T>) -> Result<DVector<T>> {
        let (d, n) = (self.basis.nrows(), self.basis.ncols());
        check_shape("PsdMap::decode", (2 * n, 1), (x_r.len(), 1))?;
        let xm = self.basis.matrix();
        let mut out = DVector::zeros(2 * d);
        out.rows_mut(0, d).copy_from(&(xm * x_r.rows(0, n)));
        out.rows_mut(d, d).copy_from(&(xm * x_r.rows(n, n)));
        Ok(out)
    }

    fn decode_jacobian(&self, x_r: &DVector<T>) -> Result<DMatrix<T>> {
        check_shape("PsdMap::decode_jacobian", (self.reduced_dim(), 1), (x_r.len(), 1))?;
        Ok(self.matrix())
    }

    fn is_linear(&self) -> bool {
        true
    }
}

/// Cotangent lift of `M = [M1; M2]`: the first `n` left singular vectors of
/// `[M1, M2]`, together with all singular values.
pub fn psd_cotangent_lift<T: Real>(snapshots: &DMatrix<T>, n: usize) -> Result<(StiefelPoint<T>, Vec<T>)> {
    let (rows, k) = snapshots.shape();
    if rows % 2 != 0 {
        return Err(Error::Dimension(format!(
            "snapshot matrix needs an even number of rows, got {rows}"
        )));
    }
    let d = rows / 2;
    if n == 0 || n > d || n > 2 * k {
        return Err(Error::Dimension(format!(
            "reduced size {n} must satisfy 1 ≤ n ≤ min(d = {d}, 2k = {})",
            2 * k
        )));
    }
    let mut stacked = DMatrix::zeros(d, 2 * k);
    stacked.columns_mut(0, k).copy_from(&snapshots.rows(0, d));
    stacked.columns_mut(k, k).copy_from(&snapshots.rows(d, d));
    let (u, sigma) = left_singular_vectors(&stacked);
    if sigma[n - 1] < lit::<T>(1e-12) * sigma[0] {
        log::warn!(
            "cotangent lift: requested size {n} exceeds the numerical rank (σ_n/σ_1 = {:e})",
            (sigma[n - 1] / sigma[0]).to_f64_lossy()
        );
    }
    let basis = StiefelPoint::new(u.columns(0, n).clone_owned())?;
    Ok((basis, sigma))
}

/// Whether the ROM carries a reference state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorVariant {
    WithRef,
    NoRef,
}

/// Reduced-order model: reconstruction `x_ref + d(ξ)` (or `d(ξ)`) and the
/// reduced initial value.
#[derive(Debug)]
pub struct Rom<'a, T: Real, A: Autoencoder<T> + ?Sized> {
    map: &'a A,
    x_ref: Option<DVector<T>>,
    x_r0: DVector<T>,
}

impl<'a, T: Real, A: Autoencoder<T> + ?Sized> Rom<'a, T, A> {
    pub fn map(&self) -> &'a A {
        self.map
    }

    pub fn reference(&self) -> Option<&DVector<T>> {
        self.x_ref.as_ref()
    }

    pub fn initial(&self) -> &DVector<T> {
        &self.x_r0
    }

    pub fn variant(&self) -> ErrorVariant {
        if self.x_ref.is_some() {
            ErrorVariant::WithRef
        } else {
            ErrorVariant::NoRef
        }
    }

    /// Full state reconstructed from a reduced one.
    pub fn lift(&self, x_r: &DVector<T>) -> Result<DVector<T>> {
        let x = self.map.decode(x_r)?;
        Ok(match &self.x_ref {
            Some(r) => x + r,
            None => x,
        })
    }
}

/// `WithRef`: `ξ⁰ = e(0)`, `x_ref = x⁰ − d(ξ⁰)`. `NoRef`: `ξ⁰ = e(x⁰)`.
pub fn build_rom<'a, T: Real, A: Autoencoder<T> + ?Sized>(
    map: &'a A,
    x0: &DVector<T>,
    variant: ErrorVariant,
) -> Result<Rom<'a, T, A>> {
    check_shape("build_rom", (map.full_dim(), 1), (x0.len(), 1))?;
    Ok(match variant {
        ErrorVariant::WithRef => {
            let x_r0 = map.encode(&DVector::zeros(map.full_dim()))?;
            let x_ref = x0 - map.decode(&x_r0)?;
            Rom {
                map,
                x_ref: Some(x_ref),
                x_r0,
            }
        }
        ErrorVariant::NoRef => Rom {
            map,
            x_ref: None,
            x_r0: map.encode(x0)?,
        },
    })
}

/// `[−Dᵀ_{lower}; Dᵀ_{upper}]·[f_p; −f_q]` with `D` the decoder Jacobian,
/// i.e. `−J_{2n} Dᵀ J_{2d} f` without forming either Poisson matrix.
pub fn poisson_pullback<T: Real>(jac: &DMatrix<T>, f: &DMatrix<T>) -> DMatrix<T> {
    let d = jac.nrows() / 2;
    let n = jac.ncols() / 2;
    let mut flipped = DMatrix::zeros(2 * d, f.ncols());
    flipped.rows_mut(0, d).copy_from(&f.rows(d, d));
    flipped.rows_mut(d, d).copy_from(&(-f.rows(0, d)));
    let w = jac.tr_mul(&flipped);
    let mut out = DMatrix::zeros(2 * n, f.ncols());
    out.rows_mut(0, n).copy_from(&(-w.rows(n, n)));
    out.rows_mut(n, n).copy_from(&w.rows(0, n));
    out
}

/// Reduced vector field `ξ ↦ −J_{2n} Dd(ξ)ᵀ J_{2d} f(t, x_ref + d(ξ))`.
pub struct ReducedField<'r, 'a, T: Real, A: Autoencoder<T> + ?Sized, F: VectorField<T> + ?Sized> {
    rom: &'r Rom<'a, T, A>,
    fom: &'r F,
}

impl<'r, 'a, T: Real, A: Autoencoder<T> + ?Sized, F: VectorField<T> + ?Sized> ReducedField<'r, 'a, T, A, F> {
    pub fn new(rom: &'r Rom<'a, T, A>, fom: &'r F) -> Result<Self> {
        check_shape("ReducedField::new", (rom.map.full_dim(), 1), (fom.dim(), 1))?;
        Ok(Self { rom, fom })
    }

    pub fn try_eval(&self, t: T, x_r: &DVector<T>) -> Result<DVector<T>> {
        check_shape("reduced_vector_field", (self.dim(), 1), (x_r.len(), 1))?;
        let full = self.fom.eval(t, &self.rom.lift(x_r)?);
        let jac = self.rom.map.decode_jacobian(x_r)?;
        Ok(poisson_pullback(&jac, &single(&full)).column(0).clone_owned())
    }
}

impl<T: Real, A: Autoencoder<T> + ?Sized, F: VectorField<T> + ?Sized> VectorField<T> for ReducedField<'_, '_, T, A, F> {
    fn dim(&self) -> usize {
        self.rom.map.reduced_dim()
    }

    fn eval(&self, t: T, x_r: &DVector<T>) -> DVector<T> {
        self.try_eval(t, x_r)
            .unwrap_or_else(|_| DVector::from_element(self.dim(), lit::<T>(f64::NAN)))
    }

    fn jacobian(&self, t: T, x_r: &DVector<T>) -> Option<DMatrix<T>> {
        if !self.rom.map.is_linear() {
            return None;
        }
        let dd = self.rom.map.decode_jacobian(x_r).ok()?;
        let jf = self.fom.jacobian(t, &self.rom.lift(x_r).ok()?)?;
        Some(poisson_pullback(&dd, &(jf * &dd)))
    }

    fn is_linear(&self) -> bool {
        self.rom.map.is_linear() && self.fom.is_linear()
    }

    fn hamiltonian(&self, x_r: &DVector<T>) -> Option<T> {
        self.fom.hamiltonian(&self.rom.lift(x_r).ok()?)
    }
}

/// Integrates the ROM from its initial value.
pub fn solve_rom<T: Real, A: Autoencoder<T> + ?Sized, F: VectorField<T> + ?Sized>(
    rom: &Rom<'_, T, A>,
    fom: &F,
    t0: T,
    t1: T,
    steps: usize,
    opts: NewtonOptions<T>,
) -> Result<Trajectory<T>> {
    let field = ReducedField::new(rom, fom)?;
    implicit_midpoint(&field, &rom.x_r0, t0, t1, steps, opts)
}

/// Columnwise reconstruction of a reduced trajectory.
pub fn reconstruct<T: Real, A: Autoencoder<T> + ?Sized>(
    rom: &Rom<'_, T, A>,
    reduced: &Trajectory<T>,
) -> Result<Trajectory<T>> {
    Ok(Trajectory {
        states: reconstruct_states(rom, &reduced.states)?,
        t0: reduced.t0,
        t1: reduced.t1,
    })
}

fn reconstruct_states<T: Real, A: Autoencoder<T> + ?Sized>(
    rom: &Rom<'_, T, A>,
    reduced: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let mut out = DMatrix::zeros(rom.map.full_dim(), reduced.ncols());
    for (k, col) in reduced.column_iter().enumerate() {
        out.set_column(k, &rom.lift(&col.clone_owned())?);
    }
    Ok(out)
}

fn relative_error<T: Real>(exact: &DMatrix<T>, approx: &DMatrix<T>) -> Result<T> {
    check_shape("trajectory error", exact.shape(), approx.shape())?;
    let denom = exact.norm_squared();
    if denom == T::zero() {
        return Err(Error::DivisionDegenerate("trajectory error"));
    }
    Ok(((exact - approx).norm_squared() / denom).sqrt())
}

/// `√(Σ_k ‖x^k − x̃^k‖² / Σ_k ‖x^k‖²)` with `x̃^k` the ROM reconstruction,
/// including `x_ref` when the ROM has one.
pub fn reduction_error<T: Real, A: Autoencoder<T> + ?Sized>(
    exact: &DMatrix<T>,
    rom: &Rom<'_, T, A>,
    reduced: &DMatrix<T>,
) -> Result<T> {
    if exact.ncols() != reduced.ncols() {
        return Err(Error::ShapeMismatch {
            op: "reduction_error",
            expected: (reduced.nrows(), exact.ncols()),
            found: reduced.shape(),
        });
    }
    relative_error(exact, &reconstruct_states(rom, reduced)?)
}

/// `NoRef`: `√(Σ‖x^k − d(e(x^k))‖² / Σ‖x^k‖²)`;
/// `WithRef`: `√(Σ‖x_ref + d(e(x^k − x_ref)) − x^k‖² / Σ‖x^k‖²)`.
pub fn projection_error<T: Real, A: Autoencoder<T> + ?Sized>(
    variant: ErrorVariant,
    exact: &DMatrix<T>,
    map: &A,
    x_ref: Option<&DVector<T>>,
) -> Result<T> {
    let shift = match (variant, x_ref) {
        (ErrorVariant::WithRef, Some(r)) => Some(r),
        (ErrorVariant::WithRef, None) => {
            return Err(Error::InvalidParameter(
                "projection error with reference state needs x_ref".into(),
            ))
        }
        (ErrorVariant::NoRef, _) => None,
    };
    let mut approx = DMatrix::zeros(exact.nrows(), exact.ncols());
    for (k, col) in exact.column_iter().enumerate() {
        let x = col.clone_owned();
        let y = match shift {
            Some(r) => map.decode(&map.encode(&(&x - r))?)? + r,
            None => map.decode(&map.encode(&x)?)?,
        };
        approx.set_column(k, &y);
    }
    relative_error(exact, &approx)
}

/// `max_k ‖(Dd)⁺ r_k‖` with `(Dd)⁺ = J_{2n} Ddᵀ J_{2d}ᵀ` and `r_k` the residual
/// of the reconstructed trajectory at the step midpoints:
/// `(x̃^{k+1} − x̃^k)/τ − f(t_k + τ/2, x_ref + d((ξ^k + ξ^{k+1})/2))`.
pub fn symplectic_residual_projection<T: Real, A: Autoencoder<T> + ?Sized, F: VectorField<T> + ?Sized>(
    rom: &Rom<'_, T, A>,
    fom: &F,
    reduced: &Trajectory<T>,
) -> Result<T> {
    let steps = reduced.steps();
    let tau = (reduced.t1 - reduced.t0) / crate::scalar::from_usize::<T>(steps.max(1));
    let half = lit::<T>(0.5);
    let full = reconstruct_states(rom, &reduced.states)?;
    let mut worst = T::zero();
    for k in 0..steps {
        let mid = (reduced.states.column(k) + reduced.states.column(k + 1)) * half;
        let t = reduced.time(k) + tau * half;
        let rate = (full.column(k + 1) - full.column(k)) / tau;
        let r = rate - fom.eval(t, &rom.lift(&mid)?);
        let jac = rom.map.decode_jacobian(&mid)?;
        let v = poisson_pullback(&jac, &single(&r));
        let nv = v.norm();
        if nv > worst {
            worst = nv;
        }
    }
    Ok(worst)
}

/// Dense `−J_{2n} Dᵀ J_{2d} f`; the reference for [`poisson_pullback`].
pub fn dense_pullback<T: Real>(jac: &DMatrix<T>, f: &DVector<T>) -> DVector<T> {
    let j_full = poisson::<T>(jac.nrows());
    let j_red = poisson::<T>(jac.ncols());
    -(j_red * jac.transpose() * j_full * f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::OdeSystem;
    use crate::linalg::{normal_matrix, seeded_rng};
    use crate::stiefel::random_stiefel;

    #[test]
    fn normalize_round_trip_within_one_rounding() {
        let mut rng = seeded_rng(4);
        let data: DMatrix<f64> = normal_matrix(6, 8, &mut rng);
        let set = SnapshotSet::new(data.clone(), vec![0.5, 0.7], 3, 0.0, 1.0).unwrap();
        let norm = set.normalize().unwrap();
        assert!(norm.data.column(0).iter().all(|v| *v == 0.0));
        assert!(norm.data.column(4).iter().all(|v| *v == 0.0));
        assert_eq!(norm.normalize(), Err(Error::AlreadyNormalized));
        let back = norm.denormalize().unwrap();
        assert_eq!(back.initial_states, set.initial_states);
        for (i, (a, b)) in back.data.iter().zip(data.iter()).enumerate() {
            let row = i % 6;
            let col = i / 6;
            let x0 = set.initial_states[(row, col / 4)];
            assert!((a - b).abs() <= f64::EPSILON * x0.abs().max(b.abs()), "entry {i}");
        }
    }

    #[test]
    fn rank_one_lift_recovers_direction() {
        let mut m = DMatrix::<f64>::zeros(6, 4);
        for k in 0..4 {
            m[(0, k)] = (k as f64) - 1.5;
        }
        let (x, s) = psd_cotangent_lift(&m, 1).unwrap();
        assert!((x.matrix()[(0, 0)].abs() - 1.0).abs() < 1e-14);
        assert!(s[1] < 1e-14);
        let map = PsdMap::new(x);
        for col in m.column_iter() {
            let c = col.clone_owned();
            assert!((map.decode(&map.encode(&c).unwrap()).unwrap() - &c).norm() < 1e-14);
        }
    }

    #[test]
    fn pullback_matches_dense_formula() {
        let mut rng = seeded_rng(8);
        let jac: DMatrix<f64> = normal_matrix(6, 4, &mut rng);
        let f: DMatrix<f64> = normal_matrix(6, 1, &mut rng);
        let fast = poisson_pullback(&jac, &f);
        let dense = dense_pullback(&jac, &f.column(0).clone_owned());
        assert!((fast.column(0) - dense).norm() < 1e-13);
    }

    #[test]
    fn reference_state_reproduces_initial_value() {
        let map = PsdMap::new(random_stiefel::<f64>(5, 2, 3).unwrap());
        let x0 = DVector::from_fn(10, |i, _| (i as f64).cos());
        let rom = build_rom(&map, &x0, ErrorVariant::WithRef).unwrap();
        assert_eq!(rom.reference().unwrap(), &x0);
        assert!((rom.lift(rom.initial()).unwrap() - &x0).norm() < 1e-14);
    }

    #[test]
    fn zero_field_gives_constant_rom() {
        let map = PsdMap::new(random_stiefel::<f64>(4, 2, 1).unwrap());
        let x0 = DVector::from_fn(8, |i, _| i as f64 * 0.1);
        let rom = build_rom(&map, &x0, ErrorVariant::NoRef).unwrap();
        let zero = OdeSystem::new(8, |_, _: &DVector<f64>| DVector::zeros(8));
        let tr = solve_rom(&rom, &zero, 0.0, 1.0, 5, NewtonOptions::default()).unwrap();
        for k in 0..=5 {
            assert_eq!(tr.state(k), *rom.initial());
        }
        assert_eq!(symplectic_residual_projection(&rom, &zero, &tr).unwrap(), 0.0);
    }

    #[test]
    fn decoder_zero_gives_unit_error() {
        struct Null;
        impl Autoencoder<f64> for Null {
            fn full_dim(&self) -> usize {
                2
            }
            fn reduced_dim(&self) -> usize {
                2
            }
            fn encode(&self, _: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(DVector::zeros(2))
            }
            fn decode(&self, _: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(DVector::zeros(2))
            }
            fn decode_jacobian(&self, _: &DVector<f64>) -> Result<DMatrix<f64>> {
                Ok(DMatrix::zeros(2, 2))
            }
        }
        let exact = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let e = projection_error(ErrorVariant::NoRef, &exact, &Null, None).unwrap();
        assert_eq!(e, 1.0);
        assert!(projection_error(ErrorVariant::WithRef, &exact, &Null, None).is_err());
        assert_eq!(
            projection_error(ErrorVariant::NoRef, &DMatrix::zeros(2, 2), &Null, None),
            Err(Error::DivisionDegenerate("trajectory error"))
        );
    }
}
