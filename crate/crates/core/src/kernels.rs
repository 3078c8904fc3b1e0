//! Negative definite squared-distance functions `h(x, y)`, the positive
//! kernels they induce, and their gradients.
//!
//! Every supported family is radial: `h(x, y) = φ(‖x − y‖²)` for a profile
//! `φ` with `φ(0) = 0`. Gradients are computed through the profile
//! derivative, `∇ₓh = 2 φ'(‖x − y‖²) (x − y)`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::special;

/// Kernel family names as they appear in run configuration files.
pub const FAMILY_HUBER_ENERGY: &str = "huber-energy";
pub const FAMILY_GAUSSIAN: &str = "gaussian";
pub const FAMILY_PENALIZED_MEAN: &str = "penalized-mean";

/// Squared-distance function between Dirac masses.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec<T> {
    /// `(a² + ‖x − y‖²)^{r/2} − a^r`, with `0 < r < 2`, `a ≥ 0`.
    HuberEnergy { r: T, a: T },
    /// `1 − exp(−‖x − y‖² / 2σ²)`.
    Gaussian { sigma: T },
    /// `h_base + λ‖x − y‖²`; pulls the quantizer mean towards the target mean.
    PenalizedMean { base: Box<KernelSpec<T>>, lambda: T },
}

/// Gradient of `h` in its first argument.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGradient<T> {
    pub value: Vec<T>,
    /// Set when `x = y` for a kernel that is not differentiable there
    /// (Huber-energy with `a = 0`, `r ≤ 1`); `value` is then the zero subgradient.
    pub at_kink: bool,
}

impl<T: Scalar> Default for KernelSpec<T> {
    /// Smoothed energy kernel, `r = 1`, `a = 1e-6`.
    fn default() -> Self {
        KernelSpec::HuberEnergy {
            r: T::one(),
            a: T::lit(1e-6),
        }
    }
}

impl<T: Scalar> KernelSpec<T> {
    pub fn huber_energy(r: T, a: T) -> Result<Self> {
        let k = KernelSpec::HuberEnergy { r, a };
        k.validate()?;
        Ok(k)
    }

    /// The energy kernel `‖x − y‖`.
    pub fn energy() -> Self {
        KernelSpec::HuberEnergy {
            r: T::one(),
            a: T::zero(),
        }
    }

    pub fn gaussian(sigma: T) -> Result<Self> {
        let k = KernelSpec::Gaussian { sigma };
        k.validate()?;
        Ok(k)
    }

    pub fn penalized_mean(base: KernelSpec<T>, lambda: T) -> Result<Self> {
        let k = KernelSpec::PenalizedMean {
            base: Box::new(base),
            lambda,
        };
        k.validate()?;
        Ok(k)
    }

    /// Builds a kernel from its serialized parts. For `penalized-mean` the
    /// base kernel is Huber-energy with the given `r` and `a`.
    pub fn from_parts(family: &str, r: T, a: T, sigma: T, lambda: T) -> Result<Self> {
        match family {
            FAMILY_HUBER_ENERGY => Self::huber_energy(r, a),
            FAMILY_GAUSSIAN => Self::gaussian(sigma),
            FAMILY_PENALIZED_MEAN => Self::penalized_mean(Self::huber_energy(r, a)?, lambda),
            other => Err(Error::InvalidInput(format!("unknown kernel family '{other}'"))),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            KernelSpec::HuberEnergy { .. } => FAMILY_HUBER_ENERGY,
            KernelSpec::Gaussian { .. } => FAMILY_GAUSSIAN,
            KernelSpec::PenalizedMean { .. } => FAMILY_PENALIZED_MEAN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::HuberEnergy { r, a } => {
                if !(r.is_finite() && *r > T::zero() && *r < T::lit(2.0)) {
                    return Err(Error::UnsupportedParameter(format!(
                        "huber-energy exponent r must lie in (0, 2), got {r}"
                    )));
                }
                if !(a.is_finite() && *a >= T::zero()) {
                    return Err(Error::UnsupportedParameter(format!(
                        "huber-energy smoothing a must be >= 0, got {a}"
                    )));
                }
            }
            KernelSpec::Gaussian { sigma } => {
                if !(sigma.is_finite() && *sigma > T::zero()) {
                    return Err(Error::UnsupportedParameter(format!(
                        "gaussian bandwidth must be > 0, got {sigma}"
                    )));
                }
            }
            KernelSpec::PenalizedMean { base, lambda } => {
                if !(lambda.is_finite() && *lambda >= T::zero()) {
                    return Err(Error::UnsupportedParameter(format!(
                        "penalty lambda must be >= 0, got {lambda}"
                    )));
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// `φ(s)` with `s = ‖x − y‖²`.
    #[inline]
    pub fn profile(&self, sq_dist: T) -> T {
        match self {
            KernelSpec::HuberEnergy { r, a } => {
                if *a == T::zero() {
                    if *r == T::one() {
                        sq_dist.sqrt()
                    } else {
                        sq_dist.powf(*r / T::lit(2.0))
                    }
                } else if *r == T::one() {
                    sq_dist / ((*a * *a + sq_dist).sqrt() + *a)
                } else {
                    a.powf(*r) * ((*r / T::lit(2.0)) * (sq_dist / (*a * *a)).ln_1p()).exp_m1()
                }
            }
            KernelSpec::Gaussian { sigma } => -(-sq_dist / (T::lit(2.0) * *sigma * *sigma)).exp_m1(),
            KernelSpec::PenalizedMean { base, lambda } => base.profile(sq_dist) + *lambda * sq_dist,
        }
    }

    /// `φ'(s)`; `None` where the derivative blows up (`s = 0` at a kink).
    #[inline]
    pub fn profile_derivative(&self, sq_dist: T) -> Option<T> {
        let two = T::lit(2.0);
        match self {
            KernelSpec::HuberEnergy { r, a } => {
                let base = *a * *a + sq_dist;
                if base == T::zero() {
                    // a = 0 and x = y: finite (zero) gradient only when r > 1
                    return if *r > T::one() { Some(T::zero()) } else { None };
                }
                if *r == T::one() {
                    Some(T::lit(0.5) / base.sqrt())
                } else {
                    Some(*r / two * base.powf(*r / two - T::one()))
                }
            }
            KernelSpec::Gaussian { sigma } => {
                let s2 = two * *sigma * *sigma;
                Some((-sq_dist / s2).exp() / s2)
            }
            KernelSpec::PenalizedMean { base, lambda } => base.profile_derivative(sq_dist).map(|d| d + *lambda),
        }
    }

    /// Adds `coeff · ∇ₓh(x, y)` to `out`. Returns `true` when evaluated at a
    /// kink, in which case the base kernel contributes nothing.
    #[inline]
    pub fn accumulate_grad(&self, x: &[T], y: &[T], coeff: T, out: &mut [T]) -> bool {
        let s = sq_dist(x, y);
        match self.profile_derivative(s) {
            Some(d) => {
                let c = coeff * T::lit(2.0) * d;
                for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
                    *o = *o + c * (*xi - *yi);
                }
                false
            }
            // the penalty gradient 2λ(x − y) also vanishes at x = y
            None => true,
        }
    }

    /// `h(x, y)` without input validation.
    #[inline]
    pub fn eval_unchecked(&self, x: &[T], y: &[T]) -> T {
        self.profile(sq_dist(x, y))
    }

    /// `h(x, y)`.
    pub fn h(&self, x: &[T], y: &[T]) -> Result<T> {
        check_pair(x, y)?;
        Ok(self.eval_unchecked(x, y))
    }

    /// `∇ₓ h(x, y)`.
    pub fn grad_x(&self, x: &[T], y: &[T]) -> Result<KernelGradient<T>> {
        check_pair(x, y)?;
        let mut value = vec![T::zero(); x.len()];
        let at_kink = self.accumulate_grad(x, y, T::one(), &mut value);
        Ok(KernelGradient { value, at_kink })
    }

    /// Positive kernel induced by `h` with base point `z0`:
    /// `k(x, y) = (h(x, z0) + h(y, z0) − h(x, y)) / 2`.
    pub fn k_from_h(&self, z0: &[T], x: &[T], y: &[T]) -> Result<T> {
        check_pair(x, y)?;
        check_pair(x, z0)?;
        Ok(self.k_unchecked(z0, x, y))
    }

    #[inline]
    pub fn k_unchecked(&self, z0: &[T], x: &[T], y: &[T]) -> T {
        (self.eval_unchecked(x, z0) + self.eval_unchecked(y, z0) - self.eval_unchecked(x, y)) / T::lit(2.0)
    }

    /// True for the Huber-energy family with `r = 1`, `a = 0`.
    pub fn is_energy(&self) -> bool {
        matches!(self, KernelSpec::HuberEnergy { r, a } if *r == T::one() && *a == T::zero())
    }
}

/// Free-function form of [`KernelSpec::h`].
pub fn h_eval<T: Scalar>(kernel: &KernelSpec<T>, x: &[T], y: &[T]) -> Result<T> {
    kernel.h(x, y)
}

/// Free-function form of [`KernelSpec::grad_x`].
pub fn h_grad_x<T: Scalar>(kernel: &KernelSpec<T>, x: &[T], y: &[T]) -> Result<KernelGradient<T>> {
    kernel.grad_x(x, y)
}

/// Free-function form of [`KernelSpec::k_from_h`].
pub fn k_from_h<T: Scalar>(kernel: &KernelSpec<T>, z0: &[T], x: &[T], y: &[T]) -> Result<T> {
    kernel.k_from_h(z0, x, y)
}

#[inline]
pub(crate) fn sq_dist<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = *a - *b;
            d * d
        })
        .fold(T::zero(), |acc, v| acc + v)
}

fn check_pair<T: Scalar>(x: &[T], y: &[T]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::InvalidInput("points must have dimension >= 1".into()));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel argument coordinates".into()));
    }
    Ok(())
}

/// Numerically integrates the Laplace mixture representation
/// `(1/−Γ(−r)) ∫₀^∞ (1 − e^{−ts}) e^{−as} s^{−1−r} ds`, which equals
/// `(a + t)^r − a^r` for `0 < r < 1`.
///
/// The s-axis is split at 1; the tail is mapped to the unit interval by
/// `s = 1/u` and both pieces use tanh-sinh quadrature starting from
/// `quad_nodes` nodes.
pub fn decomposition_check(r: f64, a: f64, t: f64, quad_nodes: usize) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::UnsupportedParameter(format!(
            "mixture representation requires 0 < r < 1, got {r}"
        )));
    }
    if !(a >= 0.0 && t >= 0.0) || !a.is_finite() || !t.is_finite() {
        return Err(Error::InvalidInput(format!("need a >= 0 and t >= 0, got a={a}, t={t}")));
    }
    if quad_nodes < 100 {
        return Err(Error::InvalidInput(format!(
            "quad_nodes must be >= 100, got {quad_nodes}"
        )));
    }
    let head = special::tanh_sinh_unit(|s| -(-t * s).exp_m1() * (-a * s).exp() * s.powf(-1.0 - r), quad_nodes);
    let tail = special::tanh_sinh_unit(|u| -(-t / u).exp_m1() * (-a / u).exp() * u.powf(r - 1.0), quad_nodes);
    // −Γ(−r) = Γ(1 − r) / r > 0 on (0, 1)
    let neg_gamma = special::gamma(1.0 - r) / r;
    Ok((head + tail) / neg_gamma)
}
