use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the library: `f32` or `f64`.
///
/// All constants are written as `f64` literals and converted with [`lit`].
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Orthonormality tolerance per column block: `‖XᵀX − I‖_F ≤ ortho_tol · √n`.
    fn ortho_tol() -> Self {
        let floor = Self::default_epsilon() * lit::<Self>(1e4);
        let target = lit::<Self>(1e-10);
        if floor > target {
            floor
        } else {
            target
        }
    }

    /// Residual above which an iterate is re-orthonormalized by thin QR.
    fn reorth_threshold() -> Self {
        let floor = Self::default_epsilon() * lit::<Self>(1e5);
        let target = lit::<Self>(1e-8);
        if floor > target {
            floor
        } else {
            target
        }
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: FromPrimitive>(v: f64) -> T {
    T::from_f64(v).expect("literal representable in scalar type")
}

/// Converts a count into `T`.
#[inline]
pub fn from_usize<T: FromPrimitive>(v: usize) -> T {
    T::from_usize(v).expect("count representable in scalar type")
}
