//! Implicit midpoint rule
//! `x_{k+1} = x_k + h·f(t_k + h/2, (x_k + x_{k+1})/2)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

/// Right-hand side of `ẋ = f(t, x)`.
pub trait VectorField<T: Real> {
    fn dim(&self) -> usize;

    fn eval(&self, t: T, x: &DVector<T>) -> DVector<T>;

    /// Analytic Jacobian `∂f/∂x`, if available.
    fn jacobian(&self, _t: T, _x: &DVector<T>) -> Option<DMatrix<T>> {
        None
    }

    /// `true` if `f(t, x) = A x + c(t)` with constant `A`. The integrator
    /// then factors `I − (h/2)A` once and solves one linear system per step.
    fn is_linear(&self) -> bool {
        false
    }

    /// Energy, for diagnostics.
    fn hamiltonian(&self, _x: &DVector<T>) -> Option<T> {
        None
    }
}

/// Vector field given by closures.
pub struct OdeSystem<'a, T: Real> {
    pub dim: usize,
    pub field: Box<dyn Fn(T, &DVector<T>) -> DVector<T> + Send + Sync + 'a>,
    pub jacobian: Option<Box<dyn Fn(T, &DVector<T>) -> DMatrix<T> + Send + Sync + 'a>>,
    pub hamiltonian: Option<Box<dyn Fn(&DVector<T>) -> T + Send + Sync + 'a>>,
    pub linear: bool,
}

impl<'a, T: Real> OdeSystem<'a, T> {
    pub fn new(dim: usize, field: impl Fn(T, &DVector<T>) -> DVector<T> + Send + Sync + 'a) -> Self {
        Self {
            dim,
            field: Box::new(field),
            jacobian: None,
            hamiltonian: None,
            linear: false,
        }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(T, &DVector<T>) -> DMatrix<T> + Send + Sync + 'a) -> Self {
        self.jacobian = Some(Box::new(jac));
        self
    }

    pub fn with_hamiltonian(mut self, h: impl Fn(&DVector<T>) -> T + Send + Sync + 'a) -> Self {
        self.hamiltonian = Some(Box::new(h));
        self
    }

    /// Marks the field as affine in `x` with a constant Jacobian.
    pub fn linear(mut self) -> Self {
        self.linear = true;
        self
    }
}

impl<T: Real> VectorField<T> for OdeSystem<'_, T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: T, x: &DVector<T>) -> DVector<T> {
        (self.field)(t, x)
    }

    fn jacobian(&self, t: T, x: &DVector<T>) -> Option<DMatrix<T>> {
        self.jacobian.as_ref().map(|j| j(t, x))
    }

    fn is_linear(&self) -> bool {
        self.linear
    }

    fn hamiltonian(&self, x: &DVector<T>) -> Option<T> {
        self.hamiltonian.as_ref().map(|h| h(x))
    }
}

/// States at `t0 + k(t1 − t0)/K`, `k = 0..=K`, one per column.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T: Real> {
    pub states: DMatrix<T>,
    pub t0: T,
    pub t1: T,
}

impl<T: Real> Trajectory<T> {
    pub fn steps(&self) -> usize {
        self.states.ncols() - 1
    }

    pub fn dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn time(&self, k: usize) -> T {
        self.t0 + (self.t1 - self.t0) * from_usize::<T>(k) / from_usize::<T>(self.steps().max(1))
    }

    pub fn state(&self, k: usize) -> DVector<T> {
        self.states.column(k).clone_owned()
    }
}

/// Newton settings. Iteration stops once `‖Δ‖ ≤ tol·(1 + ‖x‖)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self {
            tol: lit(1e-12),
            max_iter: 50,
        }
    }
}

/// Central-difference Jacobian of `f(t, ·)` at `x`.
pub fn finite_difference_jacobian<T: Real, F: VectorField<T> + ?Sized>(
    f: &F,
    t: T,
    x: &DVector<T>,
) -> DMatrix<T> {
    let n = x.len();
    let base_step = T::default_epsilon().cbrt();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for j in 0..n {
        let step = base_step * (T::one() + x[j].abs());
        let orig = xp[j];
        xp[j] = orig + step;
        let fp = f.eval(t, &xp);
        xp[j] = orig - step;
        let fm = f.eval(t, &xp);
        xp[j] = orig;
        jac.set_column(j, &((fp - fm) / (step + step)));
    }
    jac
}

fn jacobian_at<T: Real, F: VectorField<T> + ?Sized>(f: &F, t: T, x: &DVector<T>) -> DMatrix<T> {
    f.jacobian(t, x)
        .unwrap_or_else(|| finite_difference_jacobian(f, t, x))
}

/// Integrates `f` from `x0` over `[t0, t1]` in `steps` equal steps.
pub fn implicit_midpoint<T: Real, F: VectorField<T> + ?Sized>(
    f: &F,
    x0: &DVector<T>,
    t0: T,
    t1: T,
    steps: usize,
    opts: NewtonOptions<T>,
) -> Result<Trajectory<T>> {
    let dim = f.dim();
    if x0.len() != dim {
        return Err(Error::ShapeMismatch {
            op: "implicit_midpoint",
            expected: (dim, 1),
            found: (x0.len(), 1),
        });
    }
    if steps == 0 || !(t1 > t0) || !(opts.tol > T::zero()) {
        return Err(Error::InvalidParameter(
            "implicit midpoint needs K ≥ 1, t1 > t0 and tol > 0".into(),
        ));
    }
    let h = (t1 - t0) / from_usize::<T>(steps);
    let half = lit::<T>(0.5);
    let mut states = DMatrix::zeros(dim, steps + 1);
    states.set_column(0, x0);
    let eye = DMatrix::<T>::identity(dim, dim);

    let linear_lu = if f.is_linear() {
        let a = jacobian_at(f, t0, x0);
        Some((eye.clone() - a * (h * half)).lu())
    } else {
        None
    };

    let mut x = x0.clone();
    for k in 0..steps {
        let tk = t0 + h * from_usize::<T>(k);
        let tm = tk + h * half;
        let residual = |y: &DVector<T>| -> DVector<T> {
            let mid = (&x + y) * half;
            y - &x - f.eval(tm, &mid) * h
        };
        // explicit Euler predictor
        let mut y = &x + f.eval(tk, &x) * h;
        if let Some(lu) = &linear_lu {
            let delta = lu.solve(&residual(&y)).ok_or(Error::IntegrationFailure {
                step: k,
                iterations: 1,
                last_update: f64::NAN,
            })?;
            y -= delta;
        } else {
            let mut converged = false;
            let mut last = f64::INFINITY;
            for it in 0..opts.max_iter {
                let mid = (&x + &y) * half;
                let jac = jacobian_at(f, tm, &mid);
                let g = eye.clone() - jac * (h * half);
                let delta = g.lu().solve(&residual(&y)).ok_or(Error::IntegrationFailure {
                    step: k,
                    iterations: it + 1,
                    last_update: last,
                })?;
                y -= &delta;
                let dn = delta.norm();
                last = dn.to_f64_lossy();
                if !last.is_finite() {
                    break;
                }
                if dn <= opts.tol * (T::one() + y.norm()) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::IntegrationFailure {
                    step: k,
                    iterations: opts.max_iter,
                    last_update: last,
                });
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationFailure {
                step: k,
                iterations: 0,
                last_update: f64::NAN,
            });
        }
        states.set_column(k + 1, &y);
        x = y;
    }
    Ok(Trajectory { states, t0, t1 })
}
