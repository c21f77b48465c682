//! Dense helpers shared by the geometry, reduction and integration code.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Condition estimate above which a small SMW system counts as singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e14;

/// Deterministic generator used everywhere a seed is accepted.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix of i.i.d. standard normal samples, filled column by column.
pub fn normal_matrix<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<T> {
    let data: Vec<T> = (0..rows * cols)
        .map(|_| lit::<T>(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    DMatrix::from_vec(rows, cols, data)
}

pub fn skew<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m - m.transpose()) * lit::<T>(0.5)
}

pub fn sym<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

/// `‖MᵀM − I‖_F`.
pub fn orthonormality_residual<T: Real>(m: &DMatrix<T>) -> T {
    let gram = m.tr_mul(m);
    (gram - DMatrix::identity(m.ncols(), m.ncols())).norm()
}

/// Orthonormal factor of a thin QR factorization, with column signs fixed so
/// that `R` has a non-negative diagonal.
pub fn thin_q<T: Real>(m: &DMatrix<T>) -> (DMatrix<T>, DVector<T>) {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    let mut diag = DVector::zeros(r.nrows().min(r.ncols()));
    for j in 0..diag.len() {
        let rjj = r[(j, j)];
        if rjj < T::zero() {
            q.column_mut(j).neg_mut();
        }
        diag[j] = rjj.abs();
    }
    (q, diag)
}

/// 1-norm (maximum absolute column sum).
pub fn norm1<T: Real>(m: &DMatrix<T>) -> T {
    m.column_iter()
        .map(|c| c.iter().fold(T::zero(), |acc, v| acc + v.abs()))
        .fold(T::zero(), |acc, v| if v > acc { v } else { acc })
}

/// Solves the small dense system `M Y = B` with a pivoted LU factorization.
///
/// Fails with [`Error::RetractionSingular`] when `‖M‖₁‖M⁻¹‖₁` exceeds
/// [`SINGULARITY_THRESHOLD`].
pub fn solve_small<T: Real>(m: &DMatrix<T>, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
    let lu = m.clone().lu();
    let inv = lu.try_inverse().ok_or(Error::RetractionSingular {
        condition: f64::INFINITY,
    })?;
    let condition = (norm1(m) * norm1(&inv)).to_f64_lossy();
    if !condition.is_finite() || condition > SINGULARITY_THRESHOLD {
        return Err(Error::RetractionSingular { condition });
    }
    Ok(inv * rhs)
}

/// Poisson matrix `J_{2m} = [[0, I], [−I, 0]]`.
pub fn poisson<T: Real>(dim: usize) -> DMatrix<T> {
    assert!(dim % 2 == 0, "Poisson matrix needs an even dimension");
    let m = dim / 2;
    let mut j = DMatrix::zeros(dim, dim);
    for i in 0..m {
        j[(i, m + i)] = T::one();
        j[(m + i, i)] = -T::one();
    }
    j
}

/// Block-diagonal embedding `[[X, 0], [0, X]]`.
pub fn block_diag2<T: Real>(x: &DMatrix<T>) -> DMatrix<T> {
    let (r, c) = x.shape();
    let mut a = DMatrix::zeros(2 * r, 2 * c);
    a.view_mut((0, 0), (r, c)).copy_from(x);
    a.view_mut((r, c), (r, c)).copy_from(x);
    a
}

/// Left singular vectors and singular values of `m` by one-sided Jacobi.
///
/// Hestenes rotations are applied to the columns of `mᵀ`; the accumulated
/// right rotation is the left singular basis of `m`. Singular values come
/// back in non-increasing order and every vector has its first
/// non-negligible entry positive.
pub fn left_singular_vectors<T: Real>(m: &DMatrix<T>) -> (DMatrix<T>, Vec<T>) {
    let mut b = m.transpose();
    let n = b.ncols();
    let mut v = DMatrix::<T>::identity(n, n);
    let eps = T::default_epsilon();
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha = b.column(i).norm_squared();
                let beta = b.column(j).norm_squared();
                let gamma = b.column(i).dot(&b.column(j));
                if alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut b, i, j, c, s);
                rotate_columns(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(usize, T)> = (0..n).map(|k| (k, b.column(k).norm())).collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let mut left = DMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let tiny = eps * lit::<T>(100.0);
    for (dst, (src, s)) in order.into_iter().enumerate() {
        let mut col = v.column(src).clone_owned();
        if let Some(first) = col.iter().copied().find(|e| e.abs() > tiny) {
            if first < T::zero() {
                col.neg_mut();
            }
        }
        left.set_column(dst, &col);
        sigma.push(s);
    }
    (left, sigma)
}

fn rotate_columns<T: Real>(m: &mut DMatrix<T>, i: usize, j: usize, c: T, s: T) {
    for r in 0..m.nrows() {
        let a = m[(r, i)];
        let b = m[(r, j)];
        m[(r, i)] = c * a - s * b;
        m[(r, j)] = s * a + c * b;
    }
}
