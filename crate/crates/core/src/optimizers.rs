//! Adam-type update rules.
//!
//! * [`adam_step`]: classic Adam for unconstrained parameters.
//! * [`homogeneous_psd_update`]: Adam in the global tangent space of the
//!   homogeneous space `O(N)/O(N−n)`, with a fresh section every step.
//! * [`stiefel_psd_update`]: Adam carried out directly on `St(n, N)` with a
//!   single transported first moment.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::homogeneous::{lift_to_global, retract_global_flagged, section_qr, HorizontalElement};
use crate::scalar::{lit, Real};
use crate::stiefel::{
    cayley_retract_flagged, project_onto, riemannian_gradient, transport_to, Metric,
    StiefelPoint, TangentVector, Transport,
};

/// Learning rate, moment decay rates and cached powers `βᵢᵗ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper<T> {
    pub eta: T,
    pub beta1: T,
    pub beta2: T,
    pub delta: T,
    /// Multiplicative learning-rate decay applied after every step.
    pub decay: Option<T>,
    pub t: u64,
    pub beta1_t: T,
    pub beta2_t: T,
}

/// Learning-rate factor used by the decaying variants.
pub const DEFAULT_DECAY: f64 = 0.9995;

impl<T: Real> Default for AdamHyper<T> {
    fn default() -> Self {
        Self::new(lit(0.001), lit(0.9), lit(0.99), lit(1e-8), None).expect("valid defaults")
    }
}

impl<T: Real> AdamHyper<T> {
    pub fn new(eta: T, beta1: T, beta2: T, delta: T, decay: Option<T>) -> Result<Self> {
        let unit = |b: T| b > T::zero() && b < T::one();
        if !(eta > T::zero()) || !unit(beta1) || !unit(beta2) || !(delta > T::zero()) {
            return Err(Error::InvalidParameter(
                "Adam needs η > 0, 0 < β₁, β₂ < 1 and δ > 0".into(),
            ));
        }
        if let Some(d) = decay {
            if !(d > T::zero() && d <= T::one()) {
                return Err(Error::InvalidParameter(
                    "learning-rate decay factor must lie in (0, 1]".into(),
                ));
            }
        }
        Ok(Self {
            eta,
            beta1,
            beta2,
            delta,
            decay,
            t: 1,
            beta1_t: beta1,
            beta2_t: beta2,
        })
    }

    pub fn with_decay(mut self, decay: T) -> Self {
        self.decay = Some(decay);
        self
    }

    /// Weights `((β−βᵗ)/(1−βᵗ), (1−β)/(1−βᵗ))` of the first moment.
    pub fn first_weights(&self) -> (T, T) {
        weights(self.beta1, self.beta1_t)
    }

    /// Weights of the second moment.
    pub fn second_weights(&self) -> (T, T) {
        weights(self.beta2, self.beta2_t)
    }
}

fn weights<T: Real>(beta: T, beta_t: T) -> (T, T) {
    let denom = T::one() - beta_t;
    ((beta - beta_t) / denom, (T::one() - beta) / denom)
}

/// Advances the step counter, the cached powers and, when enabled, decays
/// the learning rate.
pub fn update_hyper<T: Real>(hyper: &AdamHyper<T>) -> AdamHyper<T> {
    let mut next = hyper.clone();
    next.t += 1;
    next.beta1_t *= next.beta1;
    next.beta2_t *= next.beta2;
    if let Some(d) = next.decay {
        next.eta *= d;
    }
    next
}

/// First and second moments of classic Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct EuclideanAdamCache<T: Real> {
    pub b1: DMatrix<T>,
    pub b2: DMatrix<T>,
}

impl<T: Real> EuclideanAdamCache<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            b1: DMatrix::zeros(rows, cols),
            b2: DMatrix::zeros(rows, cols),
        }
    }
}

/// Updates the moments with gradient `y` and returns `V = −η B₁/√(B₂+δ)`.
/// The caller advances `hyper` afterwards.
pub fn adam_step<T: Real>(
    hyper: &AdamHyper<T>,
    cache: &mut EuclideanAdamCache<T>,
    y: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    check_shape("adam_step", cache.b1.shape(), y.shape())?;
    let (a1, c1) = hyper.first_weights();
    let (a2, c2) = hyper.second_weights();
    cache.b1.zip_apply(y, |b, g| *b = a1 * *b + c1 * g);
    cache.b2.zip_apply(y, |b, g| *b = a2 * *b + c2 * g * g);
    let eta = hyper.eta;
    let delta = hyper.delta;
    Ok(cache.b1.zip_map(&cache.b2, |m, v| -eta * m / (v + delta).sqrt()))
}

/// Adam moments stored in the compact global-tangent-space layout.
#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneousAdamCache<T: Real> {
    pub b1: HorizontalElement<T>,
    pub b2: HorizontalElement<T>,
}

impl<T: Real> HomogeneousAdamCache<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            b1: HorizontalElement::zeros(cols, rows - cols),
            b2: HorizontalElement::zeros(cols, rows - cols),
        }
    }
}

/// One Adam step in the global tangent space. Returns the new point and
/// whether it had to be re-orthonormalized.
pub fn homogeneous_psd_update<T: Real>(
    hyper: &AdamHyper<T>,
    cache: &mut HomogeneousAdamCache<T>,
    x: &StiefelPoint<T>,
    egrad: &DMatrix<T>,
    seed: u64,
) -> Result<(StiefelPoint<T>, bool)> {
    let (rows, n) = x.matrix().shape();
    check_shape("homogeneous_psd_update", (rows - n, n), cache.b1.comp_block().shape())?;
    let z = riemannian_gradient(Metric::Canonical, x, egrad)?;
    let section = section_qr(x, seed)?;
    let b = lift_to_global(&section, &z)?;
    let (a1, c1) = hyper.first_weights();
    let (a2, c2) = hyper.second_weights();
    cache.b1 = cache.b1.axpby(a1, &b, c1);
    cache.b2 = cache.b2.axpby(a2, &b.square(), c2);
    let v = cache
        .b1
        .div_sqrt(&cache.b2, hyper.delta)
        .scaled(-hyper.eta);
    retract_global_flagged(&section, &v)
}

/// First moment of StiefelAdam, tangent at the current iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelAdamCache<T: Real> {
    pub b1: TangentVector<T>,
}

impl<T: Real> StiefelAdamCache<T> {
    pub fn zeros(x: &StiefelPoint<T>) -> Self {
        Self {
            b1: TangentVector::zeros(x),
        }
    }
}

/// Search direction of StiefelAdam. Updates the first moment in place.
///
/// The second moment is rebuilt each step from the previous first moment
/// and the current gradient. The `XW` part is scaled by the elementwise
/// square root of the Gram matrix `B₂ᵀB₂`, the complement part by `B₂`
/// itself.
pub fn stiefel_adam_step<T: Real>(
    hyper: &AdamHyper<T>,
    cache: &mut StiefelAdamCache<T>,
    x: &StiefelPoint<T>,
    z: &TangentVector<T>,
) -> Result<TangentVector<T>> {
    if !z.is_anchored_at(x) || !cache.b1.is_anchored_at(x) {
        return Err(Error::AnchorMismatch);
    }
    let xm = x.matrix();
    let zm = z.matrix();
    let (a1, c1) = hyper.first_weights();
    let (a2, c2) = hyper.second_weights();
    let delta = hyper.delta;
    let old = cache.b1.matrix();
    let b2 = old.zip_map(zm, |m, g| (a2 * m * m + c2 * g * g + delta).sqrt());
    let b1 = old * a1 + zm * c1;
    let w = xm.tr_mul(&b1);
    let perp = &b1 - xm * &w;
    let gram = b2.tr_mul(&b2);
    let scaled_w = w.zip_map(&gram, |v, g| v / g.sqrt());
    let scaled_perp = perp.component_div(&b2);
    // (I − XXᵀ)P = P − X(XᵀP)
    let comp = &scaled_perp - xm * xm.tr_mul(&scaled_perp);
    let v = (xm * scaled_w + comp) * (-hyper.eta);
    cache.b1 = TangentVector::from_trusted(x, b1);
    Ok(TangentVector::from_trusted(x, v))
}

/// One StiefelAdam step: gradient, direction, Cayley retraction and
/// transport of the first moment to the new point.
pub fn stiefel_psd_update<T: Real>(
    hyper: &AdamHyper<T>,
    cache: &mut StiefelAdamCache<T>,
    x: &StiefelPoint<T>,
    egrad: &DMatrix<T>,
    metric: Metric,
    transport: Transport,
) -> Result<(StiefelPoint<T>, bool)> {
    let z = riemannian_gradient(metric, x, egrad)?;
    let v = stiefel_adam_step(hyper, cache, x, &z)?;
    let (next, reorth) = cayley_retract_flagged(x, &v)?;
    let moved = transport_to(transport, x, &v, &next, &cache.b1)?;
    cache.b1 = if reorth {
        project_onto(&next, moved.matrix())
    } else {
        moved
    };
    Ok((next, reorth))
}

/// Plain Riemannian gradient descent with the Cayley retraction.
pub fn gradient_descent_update<T: Real>(
    eta: T,
    x: &StiefelPoint<T>,
    egrad: &DMatrix<T>,
    metric: Metric,
) -> Result<(StiefelPoint<T>, bool)> {
    let z = riemannian_gradient(metric, x, egrad)?;
    cayley_retract_flagged(x, &z.scale(-eta))
}

/// Update rule for Stiefel-valued weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldMethod {
    HomogeneousAdam,
    StiefelAdam { metric: Metric, transport: Transport },
    /// No moments; kept for debugging.
    GradientDescent { metric: Metric },
}

#[derive(Clone, Debug)]
enum ManifoldState<T: Real> {
    Homogeneous(HomogeneousAdamCache<T>),
    Stiefel(Option<StiefelAdamCache<T>>),
    Stateless,
}

/// Optimizer owning the state of a single Stiefel weight.
#[derive(Clone, Debug)]
pub struct ManifoldOptimizer<T: Real> {
    method: ManifoldMethod,
    hyper: AdamHyper<T>,
    state: ManifoldState<T>,
    section_seed: u64,
    steps: u64,
    reorthonormalizations: u64,
}

impl<T: Real> ManifoldOptimizer<T> {
    /// `section_seed` is the base for the per-step section seeds
    /// (`section_seed + step`).
    pub fn new(
        method: ManifoldMethod,
        hyper: AdamHyper<T>,
        rows: usize,
        cols: usize,
        section_seed: u64,
    ) -> Result<Self> {
        let state = match method {
            ManifoldMethod::HomogeneousAdam => {
                if rows <= cols {
                    return Err(Error::Dimension(format!(
                        "homogeneous Adam needs N > n, got N={rows}, n={cols}"
                    )));
                }
                ManifoldState::Homogeneous(HomogeneousAdamCache::zeros(rows, cols))
            }
            ManifoldMethod::StiefelAdam { .. } => ManifoldState::Stiefel(None),
            ManifoldMethod::GradientDescent { .. } => ManifoldState::Stateless,
        };
        Ok(Self {
            method,
            hyper,
            state,
            section_seed,
            steps: 0,
            reorthonormalizations: 0,
        })
    }

    pub fn method(&self) -> ManifoldMethod {
        self.method
    }

    pub fn hyper(&self) -> &AdamHyper<T> {
        &self.hyper
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// How often an iterate drifted far enough to be re-orthonormalized.
    pub fn reorthonormalizations(&self) -> u64 {
        self.reorthonormalizations
    }

    /// Current StiefelAdam first moment, if any.
    pub fn first_moment(&self) -> Option<&TangentVector<T>> {
        match &self.state {
            ManifoldState::Stiefel(Some(c)) => Some(&c.b1),
            _ => None,
        }
    }

    pub fn step(&mut self, x: &StiefelPoint<T>, egrad: &DMatrix<T>) -> Result<StiefelPoint<T>> {
        let (next, reorth) = match (&mut self.state, self.method) {
            (ManifoldState::Homogeneous(cache), _) => homogeneous_psd_update(
                &self.hyper,
                cache,
                x,
                egrad,
                self.section_seed.wrapping_add(self.steps),
            )?,
            (ManifoldState::Stiefel(slot), ManifoldMethod::StiefelAdam { metric, transport }) => {
                let cache = slot.get_or_insert_with(|| StiefelAdamCache::zeros(x));
                stiefel_psd_update(&self.hyper, cache, x, egrad, metric, transport)?
            }
            (_, ManifoldMethod::GradientDescent { metric }) => {
                gradient_descent_update(self.hyper.eta, x, egrad, metric)?
            }
            _ => unreachable!("optimizer state matches its method"),
        };
        if reorth {
            self.reorthonormalizations += 1;
        }
        self.steps += 1;
        self.hyper = update_hyper(&self.hyper);
        Ok(next)
    }
}

/// Classic Adam for one unconstrained parameter block.
#[derive(Clone, Debug)]
pub struct EuclideanAdam<T: Real> {
    hyper: AdamHyper<T>,
    cache: EuclideanAdamCache<T>,
}

impl<T: Real> EuclideanAdam<T> {
    pub fn new(hyper: AdamHyper<T>, rows: usize, cols: usize) -> Self {
        Self {
            hyper,
            cache: EuclideanAdamCache::zeros(rows, cols),
        }
    }

    pub fn hyper(&self) -> &AdamHyper<T> {
        &self.hyper
    }

    /// Applies one update to `param` in place.
    pub fn step(&mut self, param: &mut DMatrix<T>, grad: &DMatrix<T>) -> Result<()> {
        let v = adam_step(&self.hyper, &mut self.cache, grad)?;
        *param += v;
        self.hyper = update_hyper(&self.hyper);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{normal_matrix, seeded_rng};
    use crate::stiefel::{project_tangent, random_stiefel};

    #[test]
    fn first_step_is_sign_like() {
        let h = AdamHyper::<f64>::default();
        let mut c = EuclideanAdamCache::zeros(2, 3);
        let y = DMatrix::from_element(2, 3, 1.0);
        let v = adam_step(&h, &mut c, &y).unwrap();
        let expected = -0.001 / (1.0f64 + 1e-8).sqrt();
        assert!(v.iter().all(|e| (e - expected).abs() < 1e-18));
        assert_eq!(c.b1, y);
    }

    #[test]
    fn update_hyper_powers_and_decay() {
        let h = AdamHyper::<f64>::default().with_decay(DEFAULT_DECAY);
        let h2 = update_hyper(&h);
        assert_eq!(h2.t, 2);
        assert!((h2.beta1_t - 0.81).abs() < 1e-15);
        assert!((h2.eta - 0.0009995).abs() < 1e-18);
        let mut h = AdamHyper::<f64>::default();
        for _ in 0..100 {
            h = update_hyper(&h);
        }
        assert!((h.beta2_t - 0.99f64.powi(101)).abs() < 1e-14);
    }

    #[test]
    fn invalid_hyper_rejected() {
        assert!(AdamHyper::<f64>::new(0.0, 0.9, 0.99, 1e-8, None).is_err());
        assert!(AdamHyper::<f64>::new(1e-3, 1.0, 0.99, 1e-8, None).is_err());
    }

    #[test]
    fn zero_gradient_fixpoints() {
        let x = random_stiefel::<f64>(6, 2, 3).unwrap();
        let h = AdamHyper::default();
        let g = DMatrix::zeros(6, 2);
        let mut hc = HomogeneousAdamCache::zeros(6, 2);
        let (y, _) = homogeneous_psd_update(&h, &mut hc, &x, &g, 9).unwrap();
        assert!((y.matrix() - x.matrix()).norm() < 1e-12);
        let mut sc = StiefelAdamCache::zeros(&x);
        let (y, _) = stiefel_psd_update(
            &h,
            &mut sc,
            &x,
            &g,
            Metric::Canonical,
            Transport::Submanifold,
        )
        .unwrap();
        assert!((y.matrix() - x.matrix()).norm() < 1e-12);
    }

    #[test]
    fn stiefel_direction_is_tangent() {
        let x = random_stiefel::<f64>(10, 3, 5).unwrap();
        let mut rng = seeded_rng(2);
        let h = AdamHyper::default();
        let mut c = StiefelAdamCache::zeros(&x);
        let z = project_tangent(&x, &normal_matrix(10, 3, &mut rng)).unwrap();
        let v = stiefel_adam_step(&h, &mut c, &x, &z).unwrap();
        assert!(v.tangency_residual() < 1e-12);
        // second step with a populated moment
        let h = update_hyper(&h);
        let z = project_tangent(&x, &normal_matrix(10, 3, &mut rng)).unwrap();
        let v = stiefel_adam_step(&h, &mut c, &x, &z).unwrap();
        assert!(v.tangency_residual() < 1e-12);
    }

    #[test]
    fn optimizer_dispatch_counts_steps() {
        let x = random_stiefel::<f64>(6, 2, 3).unwrap();
        let mut opt = ManifoldOptimizer::new(
            ManifoldMethod::StiefelAdam {
                metric: Metric::Euclidean,
                transport: Transport::Differential,
            },
            AdamHyper::default().with_decay(DEFAULT_DECAY),
            6,
            2,
            0,
        )
        .unwrap();
        let g = DMatrix::from_element(6, 2, 1.0);
        let y = opt.step(&x, &g).unwrap();
        assert_eq!(opt.steps(), 1);
        assert!(y.residual() < 1e-12);
        assert!(opt.first_moment().unwrap().is_anchored_at(&y));
        assert!((opt.hyper().eta - 0.0009995).abs() < 1e-18);
    }
}
