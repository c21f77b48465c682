//! `St(n, N)` as a homogeneous space of `O(N)`.
//!
//! A section `λ(X) = [X | λ̄]` completes `X` to an orthogonal matrix. Tangent
//! vectors are lifted into the fixed space of `N×N` skew matrices of the
//! form `[[W, −Cᵀ], [C, 0]]`, where optimizer state can live without
//! transport. Only the blocks `W` (skew, `n×n`) and `C` (`(N−n)×n`) are
//! ever stored.

use nalgebra::DMatrix;

use crate::error::{check_shape, Error, Result};
use crate::linalg::{normal_matrix, seeded_rng, solve_small, thin_q};
use crate::scalar::{from_usize, lit, Real};
use crate::stiefel::{StiefelPoint, TangentVector};

/// Orthogonal completion `[X | λ̄]` of a Stiefel point.
#[derive(Clone, Debug)]
pub struct OrthoSection<T: Real> {
    base: StiefelPoint<T>,
    complement: DMatrix<T>,
}

impl<T: Real> OrthoSection<T> {
    pub fn base(&self) -> &StiefelPoint<T> {
        &self.base
    }

    /// The `N×(N−n)` block `λ̄`.
    pub fn complement(&self) -> &DMatrix<T> {
        &self.complement
    }

    /// Dense `N×N` orthogonal matrix `[X | λ̄]`.
    pub fn to_dense(&self) -> DMatrix<T> {
        let (rows, n) = self.base.matrix().shape();
        let mut m = DMatrix::zeros(rows, rows);
        m.view_mut((0, 0), (rows, n)).copy_from(self.base.matrix());
        m.view_mut((0, n), (rows, rows - n))
            .copy_from(&self.complement);
        m
    }
}

/// Random orthogonal completion of `x`.
///
/// Draws a standard normal `N×(N−n)` block, removes its component along
/// `span(X)` and keeps the orthonormal factor of its thin QR decomposition.
pub fn section_qr<T: Real>(x: &StiefelPoint<T>, seed: u64) -> Result<OrthoSection<T>> {
    let (rows, n) = x.matrix().shape();
    if rows <= n {
        return Err(Error::Dimension(format!(
            "a section needs N > n, got N={rows}, n={n}"
        )));
    }
    let xm = x.matrix();
    let mut rng = seeded_rng(seed);
    let mut a: DMatrix<T> = normal_matrix(rows, rows - n, &mut rng);
    // two deflation passes keep λ̄ orthogonal to X at working precision
    for _ in 0..2 {
        let coef = xm.tr_mul(&a);
        a -= xm * coef;
    }
    let (q, rdiag) = thin_q(&a);
    let largest = rdiag.iter().copied().fold(T::zero(), |m, v| m.max(v));
    let smallest = rdiag.iter().copied().fold(largest, |m, v| m.min(v));
    if !(smallest > largest * T::default_epsilon() * from_usize::<T>(rows) * lit(10.0)) {
        return Err(Error::SectionDegenerate { seed });
    }
    Ok(OrthoSection {
        base: x.clone(),
        complement: q,
    })
}

/// Dense lift `Ω_X(Z) = (I − ½XXᵀ)ZXᵀ − XZᵀ(I − ½XXᵀ)`. Costs `O(N²n)`; meant
/// for checks rather than training.
pub fn lift_omega<T: Real>(x: &StiefelPoint<T>, z: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_shape("lift_omega", x.matrix().shape(), z.shape())?;
    let xm = x.matrix();
    let half = lit::<T>(0.5);
    // (I − ½XXᵀ)Z = Z − ½X(XᵀZ)
    let pz = z - xm * (xm.tr_mul(z) * half);
    let left = &pz * xm.transpose();
    Ok(&left - left.transpose())
}

/// Compact storage for elements `[[W, −Cᵀ], [C, 0]]` of the global
/// tangent space. `W` is kept through its strictly lower triangle so it is
/// skew by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizontalElement<T: Real> {
    lower: DMatrix<T>,
    comp: DMatrix<T>,
}

/// Pointwise operations on [`HorizontalElement`] storage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pointwise<T> {
    Mul,
    Add,
    Scale(T),
    SqrtAddDelta(T),
}

impl<T: Real> HorizontalElement<T> {
    pub fn zeros(n: usize, complement_rows: usize) -> Self {
        Self {
            lower: DMatrix::zeros(n, n),
            comp: DMatrix::zeros(complement_rows, n),
        }
    }

    /// Builds from a (nominally skew) `W` and `C`. Only the strictly lower
    /// triangle of `skew(W)` is kept.
    pub fn from_blocks(w: &DMatrix<T>, c: DMatrix<T>) -> Result<Self> {
        let n = w.nrows();
        check_shape("HorizontalElement::from_blocks", (n, n), w.shape())?;
        if c.ncols() != n {
            return Err(Error::ShapeMismatch {
                op: "HorizontalElement::from_blocks",
                expected: (c.nrows(), n),
                found: c.shape(),
            });
        }
        let half = lit::<T>(0.5);
        let lower = DMatrix::from_fn(n, n, |i, j| {
            if i > j {
                (w[(i, j)] - w[(j, i)]) * half
            } else {
                T::zero()
            }
        });
        Ok(Self { lower, comp: c })
    }

    /// Builds directly from stored entries; entries on or above the
    /// diagonal of `lower` are discarded.
    pub fn from_storage(lower: DMatrix<T>, comp: DMatrix<T>) -> Result<Self> {
        let n = lower.nrows();
        check_shape("HorizontalElement::from_storage", (n, n), lower.shape())?;
        if comp.ncols() != n {
            return Err(Error::ShapeMismatch {
                op: "HorizontalElement::from_storage",
                expected: (comp.nrows(), n),
                found: comp.shape(),
            });
        }
        let lower = DMatrix::from_fn(n, n, |i, j| if i > j { lower[(i, j)] } else { T::zero() });
        Ok(Self { lower, comp })
    }

    pub fn n(&self) -> usize {
        self.lower.nrows()
    }

    /// `N − n`.
    pub fn complement_rows(&self) -> usize {
        self.comp.nrows()
    }

    /// Strictly lower triangle of `W`.
    pub fn lower(&self) -> &DMatrix<T> {
        &self.lower
    }

    /// The block `C`.
    pub fn comp_block(&self) -> &DMatrix<T> {
        &self.comp
    }

    /// `W = L − Lᵀ`.
    pub fn skew_block(&self) -> DMatrix<T> {
        &self.lower - self.lower.transpose()
    }

    /// Dense `N×N` matrix `[[W, −Cᵀ], [C, 0]]`; for checks only.
    pub fn to_dense(&self) -> DMatrix<T> {
        let n = self.n();
        let m = self.complement_rows();
        let mut d = DMatrix::zeros(n + m, n + m);
        d.view_mut((0, 0), (n, n)).copy_from(&self.skew_block());
        d.view_mut((n, 0), (m, n)).copy_from(&self.comp);
        d.view_mut((0, n), (n, m)).copy_from(&(-self.comp.transpose()));
        d
    }

    fn check_like(&self, other: &Self) -> Result<()> {
        check_shape("horizontal_pointwise", self.lower.shape(), other.lower.shape())?;
        check_shape("horizontal_pointwise", self.comp.shape(), other.comp.shape())
    }

    /// Applies `op` to the stored entries; `other` is ignored by the unary
    /// operations. The result is shape-compatible storage and need not be
    /// a tangent element in any geometric sense.
    pub fn pointwise(&self, other: &Self, op: Pointwise<T>) -> Result<Self> {
        self.check_like(other)?;
        let n = self.n();
        let strict = |m: DMatrix<T>| DMatrix::from_fn(n, n, |i, j| if i > j { m[(i, j)] } else { T::zero() });
        Ok(match op {
            Pointwise::Mul => Self {
                lower: self.lower.component_mul(&other.lower),
                comp: self.comp.component_mul(&other.comp),
            },
            Pointwise::Add => Self {
                lower: &self.lower + &other.lower,
                comp: &self.comp + &other.comp,
            },
            Pointwise::Scale(s) => Self {
                lower: &self.lower * s,
                comp: &self.comp * s,
            },
            Pointwise::SqrtAddDelta(delta) => {
                let f = |v: T| {
                    let arg = v + delta;
                    if arg < T::zero() {
                        Err(Error::InvalidParameter(
                            "negative operand under square root".into(),
                        ))
                    } else {
                        Ok(arg.sqrt())
                    }
                };
                let mut lower = self.lower.clone();
                for v in lower.iter_mut() {
                    *v = f(*v)?;
                }
                let mut comp = self.comp.clone();
                for v in comp.iter_mut() {
                    *v = f(*v)?;
                }
                Self {
                    lower: strict(lower),
                    comp,
                }
            }
        })
    }

    /// `self ⊙ self`.
    pub fn square(&self) -> Self {
        Self {
            lower: self.lower.component_mul(&self.lower),
            comp: self.comp.component_mul(&self.comp),
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            lower: &self.lower * s,
            comp: &self.comp * s,
        }
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: T, other: &Self, b: T) -> Self {
        Self {
            lower: &self.lower * a + &other.lower * b,
            comp: &self.comp * a + &other.comp * b,
        }
    }

    /// Elementwise `self / √(denom + δ)` over stored entries.
    pub fn div_sqrt(&self, denom: &Self, delta: T) -> Self {
        let n = self.n();
        let lower = DMatrix::from_fn(n, n, |i, j| {
            if i > j {
                self.lower[(i, j)] / (denom.lower[(i, j)] + delta).sqrt()
            } else {
                T::zero()
            }
        });
        let comp = self
            .comp
            .zip_map(&denom.comp, |v, d| v / (d + delta).sqrt());
        Self { lower, comp }
    }

    /// Squared Frobenius norm of the dense representation.
    pub fn dense_norm_squared(&self) -> T {
        let two = lit::<T>(2.0);
        two * self.lower.norm_squared() + two * self.comp.norm_squared()
    }
}

/// Lift of a tangent vector into the global tangent space:
/// `W = XᵀZ`, `C = λ̄ᵀZ`. Equals `λᵀ Ω_X(Z) λ` in block form.
pub fn lift_to_global<T: Real>(
    section: &OrthoSection<T>,
    z: &TangentVector<T>,
) -> Result<HorizontalElement<T>> {
    if !z.is_anchored_at(section.base()) {
        return Err(Error::AnchorMismatch);
    }
    let w = section.base.matrix().tr_mul(z.matrix());
    let c = section.complement.tr_mul(z.matrix());
    HorizontalElement::from_blocks(&w, c)
}

/// `λ(X) · cay(½M) · E` with `M = [[W, −Cᵀ], [C, 0]]`.
///
/// Uses `M = U′V′`, `U′ = [[W, −I], [C, 0]]`, `V′ = [[I, 0], [0, Cᵀ]]`, so
/// only a `2n×2n` system is solved and no `N×N` matrix is formed.
pub fn retract_global<T: Real>(
    section: &OrthoSection<T>,
    v: &HorizontalElement<T>,
) -> Result<StiefelPoint<T>> {
    Ok(retract_global_flagged(section, v)?.0)
}

pub(crate) fn retract_global_flagged<T: Real>(
    section: &OrthoSection<T>,
    v: &HorizontalElement<T>,
) -> Result<(StiefelPoint<T>, bool)> {
    let x = section.base.matrix();
    let (rows, n) = x.shape();
    check_shape(
        "retract_global",
        (rows - n, n),
        (v.complement_rows(), v.n()),
    )?;
    let half = lit::<T>(0.5);
    let w = v.skew_block();
    let c = &v.comp;
    let k = 2 * n;
    // V′U′ = [[W, −I], [CᵀC, 0]], V′E = [I; 0]
    let mut vu = DMatrix::zeros(k, k);
    vu.view_mut((0, 0), (n, n)).copy_from(&w);
    vu.view_mut((0, n), (n, n))
        .copy_from(&(-DMatrix::<T>::identity(n, n)));
    vu.view_mut((n, 0), (n, n)).copy_from(&c.tr_mul(c));
    let mut ve = DMatrix::zeros(k, n);
    ve.view_mut((0, 0), (n, n))
        .copy_from(&DMatrix::<T>::identity(n, n));
    let system = DMatrix::<T>::identity(k, k) - &vu * half;
    let rhs = &ve + (&vu * &ve) * half;
    let s = ve + solve_small(&system, &rhs)?;
    let s_top = s.rows(0, n);
    let s_bot = s.rows(n, n);
    // cay(½M)E = E + ½U′S
    let y_top = DMatrix::<T>::identity(n, n) + (&w * s_top - s_bot) * half;
    let y_bot = (c * s_top) * half;
    let out = x * y_top + &section.complement * y_bot;
    Ok(StiefelPoint::from_retraction(out))
}
