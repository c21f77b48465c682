//! Geometry of the compact Stiefel manifold `St(n, N) = {X ∈ ℝ^{N×n} : XᵀX = I}`.
//!
//! Tangent vectors at `X` satisfy `XᵀZ + ZᵀX = 0`. Two metrics are supported:
//!
//! ```text
//! Euclidean   g_e(Z1, Z2) = tr(Z1ᵀ Z2)
//! Canonical   g_c(Z1, Z2) = tr(Z1ᵀ (I − ½XXᵀ) Z2)
//! ```
//!
//! The Cayley retraction `R_X(Z) = cay(½A) X` with
//! `A = (I − ½XXᵀ)ZXᵀ − XZᵀ(I − ½XXᵀ)` is evaluated through the rank-2n
//! factorization `A = UV` and the Sherman–Morrison–Woodbury identity, so no
//! `N×N` matrix is ever formed and every operation here costs `O(Nn²)`.

use std::hash::Hasher;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::linalg::{self, normal_matrix, orthonormality_residual, seeded_rng, thin_q};
use crate::scalar::{from_usize, lit, Real};

/// Point on `St(n, N)`: an `N×n` matrix with orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelPoint<T: Real> {
    data: DMatrix<T>,
    checksum: u64,
}

impl<T: Real> StiefelPoint<T> {
    /// Wraps `data`, rejecting matrices whose residual exceeds `1e−10·√n`.
    pub fn new(data: DMatrix<T>) -> Result<Self> {
        let (rows, cols) = data.shape();
        if cols == 0 || rows < cols {
            return Err(Error::Dimension(format!(
                "Stiefel point needs N ≥ n ≥ 1, got {rows}×{cols}"
            )));
        }
        let residual = orthonormality_residual(&data);
        if residual > T::ortho_tol() * from_usize::<T>(cols).sqrt() {
            return Err(Error::NotOrthonormal {
                residual: residual.to_f64_lossy(),
            });
        }
        Ok(Self::from_trusted(data))
    }

    /// Orthonormal factor of the thin QR factorization of `data`.
    pub fn orthonormalize(data: &DMatrix<T>) -> Result<Self> {
        let (rows, cols) = data.shape();
        if cols == 0 || rows < cols {
            return Err(Error::Dimension(format!(
                "Stiefel point needs N ≥ n ≥ 1, got {rows}×{cols}"
            )));
        }
        Ok(Self::from_trusted(thin_q(data).0))
    }

    /// Wraps `data` without checking orthonormality. Meant for derivative
    /// checks that perturb weights off the manifold.
    #[doc(hidden)]
    pub fn new_unchecked(data: DMatrix<T>) -> Self {
        Self::from_trusted(data)
    }

    pub(crate) fn from_trusted(data: DMatrix<T>) -> Self {
        let checksum = checksum(&data);
        Self { data, checksum }
    }

    /// Accepts a freshly retracted matrix. If its residual exceeds the
    /// re-orthonormalization threshold it is replaced by its thin-QR factor
    /// and the second tuple entry is `true`.
    pub(crate) fn from_retraction(data: DMatrix<T>) -> (Self, bool) {
        let residual = orthonormality_residual(&data);
        if residual > T::reorth_threshold() {
            log::warn!(
                "re-orthonormalizing Stiefel iterate (residual {:e})",
                residual.to_f64_lossy()
            );
            (Self::from_trusted(thin_q(&data).0), true)
        } else {
            (Self::from_trusted(data), false)
        }
    }

    /// First `n` columns of the `N×N` identity.
    pub fn canonical(rows: usize, cols: usize) -> Result<Self> {
        if cols == 0 || rows < cols {
            return Err(Error::Dimension(format!(
                "Stiefel point needs N ≥ n ≥ 1, got {rows}×{cols}"
            )));
        }
        Ok(Self::from_trusted(DMatrix::identity(rows, cols)))
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.data
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn residual(&self) -> T {
        orthonormality_residual(&self.data)
    }

    /// Bitwise fingerprint of the matrix entries, used for anchor checks.
    pub fn checksum(&self) -> u64 {
        self.checksum
    }

    fn same_point(&self, other: &Self) -> bool {
        self.data.shape() == other.data.shape() && self.checksum == other.checksum
    }
}

impl<T: Real> Serialize for StiefelPoint<T>
where
    DMatrix<T>: Serialize,
{
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.data.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for StiefelPoint<T>
where
    DMatrix<T>: Deserialize<'de>,
{
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let data = DMatrix::<T>::deserialize(d)?;
        StiefelPoint::new(data).map_err(serde::de::Error::custom)
    }
}

fn checksum<T: Real>(m: &DMatrix<T>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    h.write_usize(m.nrows());
    h.write_usize(m.ncols());
    for v in m.iter() {
        h.write_u64(v.to_f64_lossy().to_bits());
    }
    h.finish()
}

/// Tangent vector together with (a copy of) the point it is attached to.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector<T: Real> {
    data: DMatrix<T>,
    anchor: StiefelPoint<T>,
}

impl<T: Real> TangentVector<T> {
    /// Wraps `data` as a tangent vector at `anchor` after checking the
    /// condition `XᵀZ + ZᵀX = 0` to `1e−9·√n` (relative to `‖Z‖` when large).
    pub fn new(anchor: &StiefelPoint<T>, data: DMatrix<T>) -> Result<Self> {
        check_shape("TangentVector::new", anchor.data.shape(), data.shape())?;
        let r = tangency_residual(anchor.matrix(), &data);
        let scale = T::one() + data.norm();
        let tol = lit::<T>(1e-9).max(T::default_epsilon() * lit(1e3))
            * from_usize::<T>(anchor.ncols()).sqrt()
            * scale;
        if r > tol {
            return Err(Error::InvalidParameter(format!(
                "matrix is not tangent at the anchor (residual {:e})",
                r.to_f64_lossy()
            )));
        }
        Ok(Self {
            data,
            anchor: anchor.clone(),
        })
    }

    pub(crate) fn from_trusted(anchor: &StiefelPoint<T>, data: DMatrix<T>) -> Self {
        Self {
            data,
            anchor: anchor.clone(),
        }
    }

    pub fn zeros(anchor: &StiefelPoint<T>) -> Self {
        Self::from_trusted(anchor, DMatrix::zeros(anchor.nrows(), anchor.ncols()))
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.data
    }

    pub fn anchor(&self) -> &StiefelPoint<T> {
        &self.anchor
    }

    /// `‖XᵀZ + ZᵀX‖_F` at the anchor.
    pub fn tangency_residual(&self) -> T {
        tangency_residual(self.anchor.matrix(), &self.data)
    }

    pub fn is_anchored_at(&self, x: &StiefelPoint<T>) -> bool {
        self.anchor.same_point(x)
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_trusted(&self.anchor, &self.data * s)
    }

    /// `a·self + b·other`; both must share the anchor.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Result<Self> {
        if !self.anchor.same_point(&other.anchor) {
            return Err(Error::AnchorMismatch);
        }
        Ok(Self::from_trusted(
            &self.anchor,
            &self.data * a + &other.data * b,
        ))
    }
}

fn tangency_residual<T: Real>(x: &DMatrix<T>, z: &DMatrix<T>) -> T {
    let xtz = x.tr_mul(z);
    (&xtz + xtz.transpose()).norm()
}

fn ensure_anchor<T: Real>(x: &StiefelPoint<T>, z: &TangentVector<T>) -> Result<()> {
    if z.is_anchored_at(x) {
        Ok(())
    } else {
        Err(Error::AnchorMismatch)
    }
}

/// Riemannian metric on the tangent spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Canonical,
}

/// Vector transport along the Cayley retraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    /// Projection onto the tangent space at the retracted point.
    Submanifold,
    /// Differentiated Cayley retraction.
    Differential,
}

/// Thin-QR orthonormal factor of an `N×n` standard normal matrix drawn from
/// a generator seeded with `seed`.
pub fn random_stiefel<T: Real>(rows: usize, cols: usize, seed: u64) -> Result<StiefelPoint<T>> {
    if cols == 0 || rows < cols {
        return Err(Error::Dimension(format!(
            "random_stiefel needs N ≥ n ≥ 1, got N={rows}, n={cols}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let a: DMatrix<T> = normal_matrix(rows, cols, &mut rng);
    StiefelPoint::orthonormalize(&a)
}

/// Orthogonal projection `(I − XXᵀ)Y + X skew(XᵀY)`.
pub fn project_tangent<T: Real>(x: &StiefelPoint<T>, y: &DMatrix<T>) -> Result<TangentVector<T>> {
    check_shape("project_tangent", x.matrix().shape(), y.shape())?;
    let xm = x.matrix();
    let xty = xm.tr_mul(y);
    // (I − XXᵀ)Y + X skew(XᵀY) = Y − X sym(XᵀY)
    let out = y - xm * linalg::sym(&xty);
    Ok(TangentVector::from_trusted(x, out))
}

/// Riemannian gradient of a function with Euclidean gradient `egrad`.
pub fn riemannian_gradient<T: Real>(
    metric: Metric,
    x: &StiefelPoint<T>,
    egrad: &DMatrix<T>,
) -> Result<TangentVector<T>> {
    check_shape("riemannian_gradient", x.matrix().shape(), egrad.shape())?;
    let xm = x.matrix();
    let out = match metric {
        Metric::Euclidean => {
            let xtg = xm.tr_mul(egrad);
            egrad - xm * ((&xtg + xtg.transpose()) * lit::<T>(0.5))
        }
        Metric::Canonical => egrad - xm * (egrad.tr_mul(xm)),
    };
    Ok(TangentVector::from_trusted(x, out))
}

/// Inner product of two tangent vectors at `x`.
pub fn metric_inner<T: Real>(
    metric: Metric,
    x: &StiefelPoint<T>,
    z1: &TangentVector<T>,
    z2: &TangentVector<T>,
) -> Result<T> {
    ensure_anchor(x, z1)?;
    ensure_anchor(x, z2)?;
    let a = z1.matrix();
    let b = z2.matrix();
    let euclid = a.dot(b);
    Ok(match metric {
        Metric::Euclidean => euclid,
        Metric::Canonical => {
            let xm = x.matrix();
            // tr(Z1ᵀ X Xᵀ Z2) = <XᵀZ1, XᵀZ2>
            let p1 = xm.tr_mul(a);
            let p2 = xm.tr_mul(b);
            euclid - p1.dot(&p2) * lit::<T>(0.5)
        }
    })
}

/// Low-rank factors with `U V = A_{X,Z}`:
/// `U = [Z − ½X(XᵀZ − ZᵀX) | −X]` (N×2n), `V = [Xᵀ; Zᵀ]` (2n×N).
pub fn cayley_factors<T: Real>(
    x: &StiefelPoint<T>,
    z: &TangentVector<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    ensure_anchor(x, z)?;
    Ok(factors(x.matrix(), z.matrix()))
}

fn factors<T: Real>(x: &DMatrix<T>, z: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let (rows, n) = x.shape();
    let xtz = x.tr_mul(z);
    let w = &xtz - xtz.transpose();
    let first = z - x * (w * lit::<T>(0.5));
    let mut u = DMatrix::zeros(rows, 2 * n);
    u.view_mut((0, 0), (rows, n)).copy_from(&first);
    u.view_mut((0, n), (rows, n)).copy_from(&(-x));
    let mut v = DMatrix::zeros(2 * n, rows);
    v.view_mut((0, 0), (n, rows)).copy_from(&x.transpose());
    v.view_mut((n, 0), (n, rows)).copy_from(&z.transpose());
    (u, v)
}

/// Right-multiplied Cayley transform `cay(½UV)·B` for an `N×m` block `B`
/// via Sherman–Morrison–Woodbury: only a `2n×2n` system is solved.
pub(crate) fn cayley_apply<T: Real>(
    u: &DMatrix<T>,
    v: &DMatrix<T>,
    b: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let half = lit::<T>(0.5);
    let k = u.ncols();
    let vb = v * b;
    let vu = v * u;
    let system = DMatrix::<T>::identity(k, k) - &vu * half;
    let rhs = &vb + (&vu * &vb) * half;
    let solved = linalg::solve_small(&system, &rhs)?;
    Ok(b + u * (vb + solved) * half)
}

/// Cayley retraction `R_X(Z) = cay(½A_{X,Z}) X`.
pub fn cayley_retract<T: Real>(x: &StiefelPoint<T>, z: &TangentVector<T>) -> Result<StiefelPoint<T>> {
    Ok(cayley_retract_flagged(x, z)?.0)
}

/// As [`cayley_retract`], also reporting whether the output had to be
/// re-orthonormalized.
pub fn cayley_retract_flagged<T: Real>(
    x: &StiefelPoint<T>,
    z: &TangentVector<T>,
) -> Result<(StiefelPoint<T>, bool)> {
    ensure_anchor(x, z)?;
    let (u, v) = factors(x.matrix(), z.matrix());
    let out = cayley_apply(&u, &v, x.matrix())?;
    Ok(StiefelPoint::from_retraction(out))
}

/// Submanifold transport of `y` along `R_X` in direction `z`:
/// the tangent projection of `y` at `Φ = R_X(z)`.
pub fn transport_submanifold<T: Real>(
    x: &StiefelPoint<T>,
    z: &TangentVector<T>,
    y: &TangentVector<T>,
) -> Result<TangentVector<T>> {
    ensure_anchor(x, y)?;
    let phi = cayley_retract(x, z)?;
    Ok(project_onto(&phi, y.matrix()))
}

/// `Y − ½Φ(ΦᵀY + YᵀΦ)`, anchored at `phi`.
pub(crate) fn project_onto<T: Real>(phi: &StiefelPoint<T>, y: &DMatrix<T>) -> TangentVector<T> {
    let p = phi.matrix();
    let pty = p.tr_mul(y);
    let out = y - p * ((&pty + pty.transpose()) * lit::<T>(0.5));
    TangentVector::from_trusted(phi, out)
}

/// Differentiated-retraction transport
/// `(I − ½A_Z)⁻¹ A_Y (I − ½A_Z)⁻¹ X`, evaluated in factored form.
pub fn transport_differential<T: Real>(
    x: &StiefelPoint<T>,
    z: &TangentVector<T>,
    y: &TangentVector<T>,
) -> Result<TangentVector<T>> {
    ensure_anchor(x, z)?;
    ensure_anchor(x, y)?;
    let phi = cayley_retract(x, z)?;
    let out = differential_transport_matrix(x.matrix(), z.matrix(), y.matrix())?;
    Ok(TangentVector::from_trusted(&phi, out))
}

pub(crate) fn differential_transport_matrix<T: Real>(
    x: &DMatrix<T>,
    z: &DMatrix<T>,
    y: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let half = lit::<T>(0.5);
    let (u, v) = factors(x, z);
    let (uy, vy) = factors(x, y);
    let k = u.ncols();
    let vu = &v * &u;
    let system = DMatrix::<T>::identity(k, k) - &vu * half;
    // (I − ½UV)⁻¹ B = B + ½U (I − ½VU)⁻¹ V B
    let mut rhs = DMatrix::zeros(k, uy.ncols() + x.ncols());
    rhs.view_mut((0, 0), (k, uy.ncols())).copy_from(&(&v * &uy));
    rhs.view_mut((0, uy.ncols()), (k, x.ncols()))
        .copy_from(&(&v * x));
    let solved = linalg::solve_small(&system, &rhs)?;
    let left = &uy + &u * solved.columns(0, uy.ncols()) * half;
    let inner = x + &u * solved.columns(uy.ncols(), x.ncols()) * half;
    Ok(left * (vy * inner))
}

/// Transport `y` (tangent at `x`) to the already-computed point
/// `phi = R_X(z)`.
pub(crate) fn transport_to<T: Real>(
    kind: Transport,
    x: &StiefelPoint<T>,
    z: &TangentVector<T>,
    phi: &StiefelPoint<T>,
    y: &TangentVector<T>,
) -> Result<TangentVector<T>> {
    ensure_anchor(x, y)?;
    match kind {
        Transport::Submanifold => Ok(project_onto(phi, y.matrix())),
        Transport::Differential => {
            let out = differential_transport_matrix(x.matrix(), z.matrix(), y.matrix())?;
            Ok(TangentVector::from_trusted(phi, out))
        }
    }
}
