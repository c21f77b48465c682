//! Semi-discrete Hamiltonian test problems: the 1D linear wave equation
//! with homogeneous Dirichlet data and the 1D sine-Gordon equation with
//! single-soliton or soliton-doublet data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::VectorField;
use crate::scalar::{from_usize, lit, Real};

/// `h(s) = 1 − 3/2 s² + 3/4 s³` on `[0, 1]`, `¼(2 − s)³` on `(1, 2]`, 0 beyond.
pub fn wave_bump<T: Real>(s: T) -> T {
    let one = T::one();
    let two = lit::<T>(2.0);
    if s < T::zero() {
        T::zero()
    } else if s <= one {
        one - lit::<T>(1.5) * s * s + lit::<T>(0.75) * s * s * s
    } else if s <= two {
        let r = two - s;
        lit::<T>(0.25) * r * r * r
    } else {
        T::zero()
    }
}

/// Derivative of [`wave_bump`].
pub fn wave_bump_derivative<T: Real>(s: T) -> T {
    let one = T::one();
    let two = lit::<T>(2.0);
    if s < T::zero() {
        T::zero()
    } else if s <= one {
        -lit::<T>(3.0) * s + lit::<T>(2.25) * s * s
    } else if s <= two {
        let r = two - s;
        -lit::<T>(0.75) * r * r
    } else {
        T::zero()
    }
}

fn signum0<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Linear wave equation `u_tt = μ² u_ξξ` on `Ω = [−½, ½]` discretized on
/// `N + 2` nodes including both boundary nodes (state dimension `2(N+2)`).
#[derive(Clone, Debug, PartialEq)]
pub struct WaveModel<T: Real> {
    n: usize,
    mu: T,
    h: T,
    k_mat: DMatrix<T>,
    /// `(K + Kᵀ)/h`.
    stiffness: DMatrix<T>,
}

pub const WAVE_DOMAIN: (f64, f64) = (-0.5, 0.5);
pub const WAVE_TIME: (f64, f64) = (0.0, 1.0);

impl<T: Real> WaveModel<T> {
    pub fn new(n: usize, mu: T) -> Result<Self> {
        if n == 0 || !(mu > T::zero()) {
            return Err(Error::InvalidParameter(
                "wave model needs N ≥ 1 and μ > 0".into(),
            ));
        }
        let m = n + 2;
        let h = lit::<T>(WAVE_DOMAIN.1 - WAVE_DOMAIN.0) / from_usize::<T>(n + 1);
        let scale = mu * mu / h;
        // qᵀKq = (μ²/4h) Σ_{i=1..N} (q_i − q_{i−1})² + (q_{i+1} − q_i)²; the
        // diagonal counts how often each node enters a squared difference
        let mut k = DMatrix::zeros(m, m);
        let quarter = lit::<T>(0.25) * scale;
        for i in 1..m - 1 {
            k[(i - 1, i - 1)] += quarter;
            k[(i, i)] += quarter + quarter;
            k[(i + 1, i + 1)] += quarter;
            k[(i, i - 1)] = -lit::<T>(0.5) * scale;
            k[(i, i + 1)] = -lit::<T>(0.5) * scale;
        }
        let stiffness = (&k + k.transpose()) / h;
        Ok(Self {
            n,
            mu,
            h,
            k_mat: k,
            stiffness,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn spacing(&self) -> T {
        self.h
    }

    pub fn k_matrix(&self) -> &DMatrix<T> {
        &self.k_mat
    }

    /// Nodes `ξ_i = a + i h`, `i = 0..=N+1`.
    pub fn nodes(&self) -> Vec<T> {
        (0..self.n + 2)
            .map(|i| lit::<T>(WAVE_DOMAIN.0) + self.h * from_usize::<T>(i))
            .collect()
    }

    /// `[[0, I], [−(K+Kᵀ)/h, 0]]`.
    pub fn system_matrix(&self) -> DMatrix<T> {
        let m = self.n + 2;
        let mut a = DMatrix::zeros(2 * m, 2 * m);
        a.view_mut((0, m), (m, m))
            .copy_from(&DMatrix::<T>::identity(m, m));
        a.view_mut((m, 0), (m, m)).copy_from(&(-&self.stiffness));
        a
    }

    /// `qᵀKq + (h/2)pᵀp`.
    pub fn energy(&self, x: &DVector<T>) -> T {
        let m = self.n + 2;
        let q = x.rows(0, m);
        let p = x.rows(m, m);
        (q.transpose() * &self.k_mat * q)[(0, 0)] + self.h * lit::<T>(0.5) * p.dot(&p)
    }

    /// `q_i = h(s(ξ_i))`, `p_i = −μ·h′(s(ξ_i))·28·sign(ξ_i + ½)` with
    /// `s(ξ) = 28|ξ + ½|`.
    pub fn initial_state(&self) -> DVector<T> {
        let m = self.n + 2;
        let mut x = DVector::zeros(2 * m);
        let c = lit::<T>(28.0);
        for (i, xi) in self.nodes().into_iter().enumerate() {
            let shift = xi + lit::<T>(0.5);
            let s = c * shift.abs();
            x[i] = wave_bump(s);
            x[m + i] = -self.mu * wave_bump_derivative(s) * c * signum0(shift);
        }
        x
    }
}

impl<T: Real> VectorField<T> for WaveModel<T> {
    fn dim(&self) -> usize {
        2 * (self.n + 2)
    }

    fn eval(&self, _t: T, x: &DVector<T>) -> DVector<T> {
        let m = self.n + 2;
        let mut out = DVector::zeros(2 * m);
        out.rows_mut(0, m).copy_from(&x.rows(m, m));
        out.rows_mut(m, m)
            .copy_from(&(-(&self.stiffness * x.rows(0, m))));
        out
    }

    fn jacobian(&self, _t: T, _x: &DVector<T>) -> Option<DMatrix<T>> {
        Some(self.system_matrix())
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn hamiltonian(&self, x: &DVector<T>) -> Option<T> {
        Some(self.energy(x))
    }
}

/// Initial/boundary data family of the sine-Gordon problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SgCondition {
    SingleSoliton,
    Doublets,
}

fn check_nu<T: Real>(nu: T) -> Result<T> {
    if !(nu.abs() < T::one()) {
        return Err(Error::InvalidParameter(format!(
            "sine-Gordon parameter must satisfy |ν| < 1, got {}",
            nu.to_f64_lossy()
        )));
    }
    Ok((T::one() - nu * nu).sqrt())
}

fn sech<T: Real>(v: T) -> T {
    T::one() / v.cosh()
}

/// Closed-form solution `(u, u_t)` at `(t, ξ)`.
pub fn sg_exact<T: Real>(bc: SgCondition, nu: T, t: T, xi: T) -> Result<(T, T)> {
    let c = check_nu(nu)?;
    let four = lit::<T>(4.0);
    Ok(match bc {
        SgCondition::SingleSoliton => {
            let z = (xi - nu * t) / c;
            let u = four * z.exp().atan();
            // d/dt 4 atan(e^z) = 4 z_t e^z / (1 + e^{2z}) = −(2ν/c) sech z
            let ut = -four * nu / c * lit::<T>(0.5) * sech(z);
            (u, ut)
        }
        SgCondition::Doublets => {
            let arg = nu * t / c;
            let g = nu * sech(arg);
            let dg = -(nu * nu / c) * sech(arg) * arg.tanh();
            let s = (xi / c).sinh();
            let gs = g * s;
            (four * gs.atan(), four * s * dg / (T::one() + gs * gs))
        }
    })
}

/// Sine-Gordon equation `u_tt = u_ξξ − sin u` on `[a, b]` with `N` interior
/// nodes (state dimension `2N`); boundary values enter through the forcing.
#[derive(Clone, Debug, PartialEq)]
pub struct SineGordonModel<T: Real> {
    n: usize,
    nu: T,
    a: T,
    b: T,
    h: T,
    bc: SgCondition,
}

impl<T: Real> SineGordonModel<T> {
    pub fn new(n: usize, nu: T, a: T, b: T, bc: SgCondition) -> Result<Self> {
        check_nu(nu)?;
        if n == 0 || !(b > a) {
            return Err(Error::InvalidParameter(
                "sine-Gordon model needs N ≥ 1 and b > a".into(),
            ));
        }
        let h = (b - a) / from_usize::<T>(n + 1);
        Ok(Self { n, nu, a, b, h, bc })
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn spacing(&self) -> T {
        self.h
    }

    pub fn condition(&self) -> SgCondition {
        self.bc
    }

    /// Interior nodes `ξ_i = a + i h`, `i = 1..=N`.
    pub fn nodes(&self) -> Vec<T> {
        (1..=self.n)
            .map(|i| self.a + self.h * from_usize::<T>(i))
            .collect()
    }

    /// `(1/h²)·tridiag(1, −2, 1)`.
    pub fn laplacian(&self) -> DMatrix<T> {
        let n = self.n;
        let s = T::one() / (self.h * self.h);
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                -lit::<T>(2.0) * s
            } else if i.abs_diff(j) == 1 {
                s
            } else {
                T::zero()
            }
        })
    }

    fn apply_laplacian(&self, q: &[T]) -> Vec<T> {
        let n = self.n;
        let s = T::one() / (self.h * self.h);
        (0..n)
            .map(|i| {
                let left = if i > 0 { q[i - 1] } else { T::zero() };
                let right = if i + 1 < n { q[i + 1] } else { T::zero() };
                (left - lit::<T>(2.0) * q[i] + right) * s
            })
            .collect()
    }

    /// Boundary values `(φ, φ̇)` at `a` and `(ψ, ψ̇)` at `b`.
    pub fn boundary(&self, t: T) -> ((T, T), (T, T)) {
        let left = sg_exact(self.bc, self.nu, t, self.a).expect("validated ν");
        let right = sg_exact(self.bc, self.nu, t, self.b).expect("validated ν");
        (left, right)
    }

    /// Nonlinearity `f(q) = sin q − (φ e₁ + ψ e_N)/h²`.
    pub fn nonlinearity(&self, t: T, q: &[T]) -> Vec<T> {
        let ((phi, _), (psi, _)) = self.boundary(t);
        let inv = T::one() / (self.h * self.h);
        let mut f: Vec<T> = q.iter().map(|v| v.sin()).collect();
        f[0] -= phi * inv;
        let last = self.n - 1;
        f[last] -= psi * inv;
        f
    }

    /// Exact state `[u(t, ξ_i); u_t(t, ξ_i)]` at the interior nodes.
    pub fn exact_state(&self, t: T) -> DVector<T> {
        let n = self.n;
        let mut x = DVector::zeros(2 * n);
        for (i, xi) in self.nodes().into_iter().enumerate() {
            let (u, ut) = sg_exact(self.bc, self.nu, t, xi).expect("validated ν");
            x[i] = u;
            x[n + i] = ut;
        }
        x
    }

    pub fn initial_state(&self) -> DVector<T> {
        self.exact_state(T::zero())
    }

    /// Discrete energy including the boundary contributions.
    pub fn energy(&self, t: T, x: &DVector<T>) -> T {
        let n = self.n;
        let h = self.h;
        let half = lit::<T>(0.5);
        let q: Vec<T> = x.rows(0, n).iter().copied().collect();
        let p = x.rows(n, n);
        let lq = self.apply_laplacian(&q);
        let qlq = q.iter().zip(&lq).fold(T::zero(), |acc, (a, b)| acc + *a * *b);
        let ((phi, dphi), (psi, dpsi)) = self.boundary(t);
        let h2 = h * h;
        let two = lit::<T>(2.0);
        let one = T::one();
        let cos_sum = q.iter().fold(T::zero(), |acc, v| acc + (one - v.cos()));
        -h * half * qlq
            + h * half * p.dot(&p)
            + h * half
                * (-two * q[0] * phi / h2 + phi * phi / h2 + psi * psi / h2
                    - two * q[n - 1] * psi / h2)
            + h * lit::<T>(0.25) * (dphi * dphi + dpsi * dpsi)
            + h * half * ((one - phi.cos()) + (one - psi.cos()))
            + h * cos_sum
    }
}

impl<T: Real> VectorField<T> for SineGordonModel<T> {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn eval(&self, t: T, x: &DVector<T>) -> DVector<T> {
        let n = self.n;
        let q: Vec<T> = x.rows(0, n).iter().copied().collect();
        let lq = self.apply_laplacian(&q);
        let f = self.nonlinearity(t, &q);
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&x.rows(n, n));
        for i in 0..n {
            out[n + i] = lq[i] - f[i];
        }
        out
    }

    /// `[[0, I], [L − diag(cos q), 0]]`.
    fn jacobian(&self, _t: T, x: &DVector<T>) -> Option<DMatrix<T>> {
        let n = self.n;
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        j.view_mut((0, n), (n, n))
            .copy_from(&DMatrix::<T>::identity(n, n));
        let mut lower = self.laplacian();
        for i in 0..n {
            lower[(i, i)] -= x[i].cos();
        }
        j.view_mut((n, 0), (n, n)).copy_from(&lower);
        Some(j)
    }
}

/// Maximum central-difference residual of `u_tt − u_ξξ + sin u` over the
/// interior of a space-time grid (`u[(k, i)]` at time `k·τ`, node `i·h`).
pub fn sg_residual_check<T: Real>(u: &DMatrix<T>, tau: T, h: T) -> T {
    let (nt, nx) = u.shape();
    let mut worst = T::zero();
    if nt < 3 || nx < 3 {
        return worst;
    }
    let two = lit::<T>(2.0);
    for k in 1..nt - 1 {
        for i in 1..nx - 1 {
            let utt = (u[(k + 1, i)] - two * u[(k, i)] + u[(k - 1, i)]) / (tau * tau);
            let uxx = (u[(k, i + 1)] - two * u[(k, i)] + u[(k, i - 1)]) / (h * h);
            let r = (utt - uxx + u[(k, i)].sin()).abs();
            if r > worst {
                worst = r;
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wave_k_matrix_small_case() {
        let m = WaveModel::<f64>::new(3, 1.0).unwrap();
        let h = 0.25;
        let diag: Vec<f64> = (0..5).map(|i| m.k_matrix()[(i, i)] * h).collect();
        assert_eq!(diag, vec![0.25, 0.75, 1.0, 0.75, 0.25]);
        assert_eq!(m.k_matrix()[(0, 1)], 0.0);
        assert_eq!(m.k_matrix()[(1, 0)], -0.5 / h);
        let s = m.k_matrix() + m.k_matrix().transpose();
        assert_eq!(&s, &s.transpose());
    }

    #[test]
    fn wave_initial_values() {
        assert_eq!(wave_bump(0.0f64), 1.0);
        assert_eq!(wave_bump(2.0f64), 0.0);
        let m = WaveModel::<f64>::new(32, 0.5).unwrap();
        let x = m.initial_state();
        assert_eq!(x[0], 1.0);
        assert_eq!(x[34], 0.0);
        assert_eq!(x[33], 0.0);
    }

    #[test]
    fn sg_laplacian_display() {
        // h = 1 with N = 3 on [0, 4]
        let m = SineGordonModel::<f64>::new(3, 0.5, 0.0, 4.0, SgCondition::Doublets).unwrap();
        let l = m.laplacian();
        assert_eq!(l, DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.0, 1.0, -2.0, 1.0, 0.0, 1.0, -2.0]));
    }

    #[test]
    fn sg_exact_special_values() {
        let (u, _) = sg_exact(SgCondition::SingleSoliton, 0.3f64, 0.0, 0.0).unwrap();
        assert!((u - std::f64::consts::PI).abs() < 1e-15);
        let (_, ut) = sg_exact(SgCondition::Doublets, -0.8f64, 0.0, 1.3).unwrap();
        assert_eq!(ut, 0.0);
        assert!(sg_exact(SgCondition::Doublets, 1.0f64, 0.0, 0.0).is_err());
    }

    #[test]
    fn trivial_solution_has_no_residual() {
        let u = DMatrix::<f64>::zeros(5, 6);
        assert_eq!(sg_residual_check(&u, 0.1, 0.1), 0.0);
    }
}
