//! Kernel squared distances between measures: exact atomic evaluation, the
//! mini-batch loss of the stochastic quantizer and its gradient, and the
//! analytic energy distance to an isotropic Gaussian.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{sq_dist, KernelSpec};
use crate::measures::DiscreteMeasure;
use crate::scalar::Scalar;
use crate::special;

/// Absolute tolerance on the equal-mass requirement.
pub const MASS_TOL: f64 = 1e-9;

/// Row-count x column-count above which kernel sums are split across threads.
const PARALLEL_THRESHOLD: usize = 1 << 14;

/// `d(η₁, η₂)² = cross − self_quantizer − self_target`, where
/// `cross = ΣΣ α_i β_j h(x_i, y_j)` and each self term is `½ ΣΣ` over one measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub cross_term: T,
    pub self_term_quantizer: T,
    pub self_term_target: T,
    pub total: T,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn from_terms(cross_term: T, self_term_quantizer: T, self_term_target: T) -> Self {
        LossBreakdown {
            cross_term,
            self_term_quantizer,
            self_term_target,
            total: cross_term - self_term_quantizer - self_term_target,
        }
    }
}

/// `Σ_i Σ_j a_i b_j h(x_i, y_j)`. Rows are summed in a fixed order, so the
/// result does not depend on the thread count.
pub fn cross_term<T: Scalar>(
    kernel: &KernelSpec<T>,
    xs: ArrayView2<'_, T>,
    wx: ArrayView1<'_, T>,
    ys: ArrayView2<'_, T>,
    wy: ArrayView1<'_, T>,
) -> T {
    let row_sum = |i: usize| -> T {
        let x = xs.row(i);
        let x = x.as_slice().expect("standard layout");
        let mut acc = T::zero();
        for (j, y) in ys.outer_iter().enumerate() {
            acc = acc + wy[j] * kernel.eval_unchecked(x, y.as_slice().expect("standard layout"));
        }
        wx[i] * acc
    };
    if xs.nrows() * ys.nrows() >= PARALLEL_THRESHOLD {
        let rows: Vec<T> = (0..xs.nrows()).into_par_iter().map(row_sum).collect();
        rows.into_iter().fold(T::zero(), |a, b| a + b)
    } else {
        (0..xs.nrows()).map(row_sum).fold(T::zero(), |a, b| a + b)
    }
}

/// `½ Σ_i Σ_j w_i w_j h(x_i, x_j)`.
pub fn self_term<T: Scalar>(kernel: &KernelSpec<T>, xs: ArrayView2<'_, T>, w: ArrayView1<'_, T>) -> T {
    let n = xs.nrows();
    let row_sum = |i: usize| -> T {
        let x = xs.row(i);
        let x = x.as_slice().expect("standard layout");
        let mut acc = T::zero();
        for j in (i + 1)..n {
            let y = xs.row(j);
            acc = acc + w[j] * kernel.eval_unchecked(x, y.as_slice().expect("standard layout"));
        }
        w[i] * acc
    };
    if n * n >= 2 * PARALLEL_THRESHOLD {
        let rows: Vec<T> = (0..n).into_par_iter().map(row_sum).collect();
        rows.into_iter().fold(T::zero(), |a, b| a + b)
    } else {
        (0..n).map(row_sum).fold(T::zero(), |a, b| a + b)
    }
}

fn check_same_dim<T: Scalar>(a: &DiscreteMeasure<T>, b: &DiscreteMeasure<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

pub(crate) fn check_equal_mass<T: Scalar>(left: T, right: T) -> Result<()> {
    let (l, r) = (left.as_f64(), right.as_f64());
    if (l - r).abs() > MASS_TOL {
        return Err(Error::MassMismatch { left: l, right: r });
    }
    Ok(())
}

/// Exact `d(m1, m2)²` for two atomic measures of equal total mass.
pub fn squared_distance_atomic<T: Scalar>(
    kernel: &KernelSpec<T>,
    m1: &DiscreteMeasure<T>,
    m2: &DiscreteMeasure<T>,
) -> Result<LossBreakdown<T>> {
    check_same_dim(m1, m2)?;
    check_equal_mass(m1.weight_sum(), m2.weight_sum())?;
    Ok(LossBreakdown::from_terms(
        cross_term(kernel, m1.points(), m1.weights(), m2.points(), m2.weights()),
        self_term(kernel, m1.points(), m1.weights()),
        self_term(kernel, m2.points(), m2.weights()),
    ))
}

fn check_batch<T: Scalar>(quantizer: &DiscreteMeasure<T>, batch: ArrayView2<'_, T>) -> Result<()> {
    if batch.nrows() == 0 {
        return Err(Error::InvalidInput("batch must contain at least one sample".into()));
    }
    if batch.ncols() != quantizer.dim() {
        return Err(Error::DimensionMismatch {
            expected: quantizer.dim(),
            got: batch.ncols(),
        });
    }
    check_equal_mass(quantizer.weight_sum(), T::one())
}

/// Squared distance between the quantizer and the uniform empirical
/// measure of `batch`.
pub fn batch_loss<T: Scalar>(
    kernel: &KernelSpec<T>,
    quantizer: &DiscreteMeasure<T>,
    batch: ArrayView2<'_, T>,
) -> Result<LossBreakdown<T>> {
    check_batch(quantizer, batch)?;
    let batch = batch.as_standard_layout();
    let b = batch.nrows();
    let wb = ndarray::Array1::from_elem(b, T::one() / T::from_usize_lossy(b));
    Ok(LossBreakdown::from_terms(
        cross_term(kernel, quantizer.points(), quantizer.weights(), batch.view(), wb.view()),
        self_term(kernel, quantizer.points(), quantizer.weights()),
        self_term(kernel, batch.view(), wb.view()),
    ))
}

/// Gradient of [`batch_loss`]`.total` with respect to the quantizer points
/// (zero subgradient at kernel kinks).
pub fn batch_loss_grad<T: Scalar>(
    kernel: &KernelSpec<T>,
    quantizer: &DiscreteMeasure<T>,
    batch: ArrayView2<'_, T>,
) -> Result<Array2<T>> {
    check_batch(quantizer, batch)?;
    let batch = batch.as_standard_layout();
    let inv_b = T::one() / T::from_usize_lossy(batch.nrows());
    let q = quantizer.len();
    let n = quantizer.dim();
    let w = quantizer.weights();
    let rows: Vec<Vec<T>> = (0..q)
        .into_par_iter()
        .map(|i| {
            let xi = quantizer.point(i);
            let mut g = vec![T::zero(); n];
            for z in batch.outer_iter() {
                kernel.accumulate_grad(xi, z.as_slice().expect("standard layout"), inv_b, &mut g);
            }
            for j in 0..q {
                if j != i {
                    kernel.accumulate_grad(xi, quantizer.point(j), -w[j], &mut g);
                }
            }
            g.iter_mut().for_each(|v| *v = *v * w[i]);
            g
        })
        .collect();
    let flat: Vec<T> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((q, n), flat).expect("gradient shape"))
}

fn gamma_ratio(n: usize) -> f64 {
    // Γ((N+1)/2) / Γ(N/2)
    let nf = n as f64;
    (special::ln_gamma_fn((nf + 1.0) / 2.0) - special::ln_gamma_fn(nf / 2.0)).exp()
}

fn check_gaussian_args<T: Scalar>(x: &[T], mean: &[T], sigma: T) -> Result<()> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!("sigma must be > 0, got {sigma}")));
    }
    if x.is_empty() {
        return Err(Error::InvalidInput("points must have dimension >= 1".into()));
    }
    if x.len() != mean.len() {
        return Err(Error::DimensionMismatch {
            expected: mean.len(),
            got: x.len(),
        });
    }
    if x.iter().chain(mean).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gaussian argument".into()));
    }
    Ok(())
}

/// `E‖Y − x‖` for `Y ~ N(mean, σ² I)`: the mean of a scaled noncentral chi
/// law, `σ √2 Γ((N+1)/2)/Γ(N/2) ₁F₁(−½; N/2; −‖x − mean‖²/2σ²)`.
pub fn g_energy_gaussian<T: Scalar>(x: &[T], mean: &[T], sigma: T) -> Result<T> {
    check_gaussian_args(x, mean, sigma)?;
    let s = sigma.as_f64();
    let z = -sq_dist(x, mean).as_f64() / (2.0 * s * s);
    let n = x.len();
    let v = s * std::f64::consts::SQRT_2 * gamma_ratio(n) * special::hyp1f1_nonpositive(-0.5, n as f64 / 2.0, z);
    Ok(T::lit(v))
}

/// `∇ₓ E‖Y − x‖` for `Y ~ N(mean, σ² I)`.
pub fn g_energy_gaussian_grad<T: Scalar>(x: &[T], mean: &[T], sigma: T) -> Result<Vec<T>> {
    check_gaussian_args(x, mean, sigma)?;
    let s = sigma.as_f64();
    let z = -sq_dist(x, mean).as_f64() / (2.0 * s * s);
    let n = x.len();
    let nf = n as f64;
    let c = std::f64::consts::SQRT_2 * gamma_ratio(n) / (nf * s) * special::hyp1f1_nonpositive(0.5, nf / 2.0 + 1.0, z);
    Ok(x.iter().zip(mean).map(|(xi, mi)| T::lit(c) * (*xi - *mi)).collect())
}

fn check_analytic_quantizer<T: Scalar>(quantizer: &DiscreteMeasure<T>, mean: &[T]) -> Result<()> {
    if quantizer.dim() != mean.len() {
        return Err(Error::DimensionMismatch {
            expected: mean.len(),
            got: quantizer.dim(),
        });
    }
    check_equal_mass(quantizer.weight_sum(), T::one())
}

/// Full energy distance squared from the quantizer to `N(mean, σ² I)`,
/// including the constant `−½ E‖Y − Y′‖`.
pub fn analytic_loss_energy_gaussian<T: Scalar>(quantizer: &DiscreteMeasure<T>, mean: &[T], sigma: T) -> Result<T> {
    check_analytic_quantizer(quantizer, mean)?;
    let w = quantizer.weights();
    let mut cross = T::zero();
    for q in 0..quantizer.len() {
        cross = cross + w[q] * g_energy_gaussian(quantizer.point(q), mean, sigma)?;
    }
    let own = self_term(&KernelSpec::energy(), quantizer.points(), w);
    // Y − Y′ ~ N(0, 2σ² I)
    let target_self = g_energy_gaussian(mean, mean, sigma * T::lit(std::f64::consts::SQRT_2))? / T::lit(2.0);
    Ok(cross - own - target_self)
}

/// Gradient of [`analytic_loss_energy_gaussian`] with respect to the points.
pub fn analytic_loss_energy_gaussian_grad<T: Scalar>(
    quantizer: &DiscreteMeasure<T>,
    mean: &[T],
    sigma: T,
) -> Result<Array2<T>> {
    check_analytic_quantizer(quantizer, mean)?;
    let energy = KernelSpec::<T>::energy();
    let w = quantizer.weights();
    let (q, n) = (quantizer.len(), quantizer.dim());
    let mut out = Array2::zeros((q, n));
    for i in 0..q {
        let xi = quantizer.point(i);
        let mut g = g_energy_gaussian_grad(xi, mean, sigma)?;
        for j in 0..q {
            if j != i {
                energy.accumulate_grad(xi, quantizer.point(j), -w[j], &mut g);
            }
        }
        for (o, v) in out.row_mut(i).iter_mut().zip(g) {
            *o = w[i] * v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn energy() -> KernelSpec<f64> {
        KernelSpec::energy()
    }

    #[test]
    fn identical_diracs() {
        let m = DiscreteMeasure::dirac(&[0.0]).unwrap();
        assert_eq!(squared_distance_atomic(&energy(), &m, &m).unwrap().total, 0.0);
    }

    #[test]
    fn two_diracs() {
        let a = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let b = DiscreteMeasure::dirac(&[3.0]).unwrap();
        assert_eq!(squared_distance_atomic(&energy(), &a, &b).unwrap().total, 3.0);
    }

    #[test]
    fn hand_expanded_breakdown() {
        let q = DiscreteMeasure::uniform(array![[-1.0], [1.0]]).unwrap();
        let t = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let l = squared_distance_atomic(&energy(), &q, &t).unwrap();
        assert_eq!(l.cross_term, 1.0);
        assert_eq!(l.self_term_quantizer, 0.5);
        assert_eq!(l.self_term_target, 0.0);
        assert_eq!(l.total, 0.5);
    }

    #[test]
    fn permuted_atoms_give_zero() {
        let a =
            DiscreteMeasure::probability(array![[0.0, 1.0], [2.0, 3.0], [4.0, -1.0]], array![0.2, 0.3, 0.5]).unwrap();
        let b =
            DiscreteMeasure::probability(array![[4.0, -1.0], [0.0, 1.0], [2.0, 3.0]], array![0.5, 0.2, 0.3]).unwrap();
        let d = squared_distance_atomic(&energy(), &a, &b).unwrap().total;
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn mass_mismatch() {
        let a = DiscreteMeasure::new(array![[0.0]], array![1.0]).unwrap();
        let b = DiscreteMeasure::new(array![[0.0]], array![2.0]).unwrap();
        assert!(matches!(
            squared_distance_atomic(&energy(), &a, &b),
            Err(Error::MassMismatch { .. })
        ));
    }

    #[test]
    fn batch_losses() {
        let z = DiscreteMeasure::dirac(&[1.5]).unwrap();
        assert_eq!(batch_loss(&energy(), &z, array![[1.5]].view()).unwrap().total, 0.0);
        let u = DiscreteMeasure::uniform(array![[0.0], [1.0]]).unwrap();
        assert_eq!(
            batch_loss(&energy(), &u, array![[0.0], [1.0]].view()).unwrap().total,
            0.0
        );
        let o = DiscreteMeasure::dirac(&[0.0]).unwrap();
        assert_eq!(
            batch_loss(&energy(), &o, array![[-1.0], [1.0]].view()).unwrap().total,
            0.5
        );
        assert!(batch_loss(&energy(), &o, Array2::<f64>::zeros((0, 1)).view()).is_err());
    }

    #[test]
    fn batch_gradients() {
        let o = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let g = batch_loss_grad(&energy(), &o, array![[-1.0], [1.0]].view()).unwrap();
        assert_eq!(g, array![[0.0]]);
        let two = DiscreteMeasure::dirac(&[2.0]).unwrap();
        let g = batch_loss_grad(&energy(), &two, array![[0.0]].view()).unwrap();
        assert_eq!(g, array![[1.0]]);
    }

    #[test]
    fn noncentral_chi_means() {
        assert_relative_eq!(
            g_energy_gaussian(&[0.0], &[0.0], 1.0).unwrap(),
            (2.0 / std::f64::consts::PI).sqrt(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            g_energy_gaussian(&[0.0; 3], &[0.0; 3], 1.0).unwrap(),
            2.0 * (2.0 / std::f64::consts::PI).sqrt(),
            max_relative = 1e-12
        );
        let far = g_energy_gaussian(&[1e6, 0.0], &[0.0, 0.0], 1.0).unwrap();
        assert_relative_eq!(far / 1e6, 1.0, max_relative = 1e-9);
        assert!(g_energy_gaussian(&[0.0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn one_dimensional_closed_form() {
        // σ√(2/π) exp(−m²/2σ²) + m erf(m/(σ√2))
        for &(m, s) in &[(0.3, 1.0), (2.0, 0.7), (7.5, 1.3), (40.0, 1.0)] {
            let closed = s * (2.0 / std::f64::consts::PI).sqrt() * (-(m * m) / (2.0 * s * s)).exp()
                + m * special::erf(m / (s * std::f64::consts::SQRT_2));
            assert_relative_eq!(
                g_energy_gaussian(&[m], &[0.0], s).unwrap(),
                closed,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn single_atom_at_mean() {
        let q = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let expected = (2.0 / std::f64::consts::PI).sqrt() - (1.0 / std::f64::consts::PI).sqrt();
        assert_relative_eq!(
            analytic_loss_energy_gaussian(&q, &[0.0], 1.0).unwrap(),
            expected,
            max_relative = 1e-12
        );
        assert_relative_eq!(expected, 0.233_69, epsilon = 1e-5);
    }

    #[test]
    fn analytic_loss_translation_invariant() {
        let q =
            DiscreteMeasure::probability(array![[0.1, -0.3], [1.0, 0.4], [-0.7, 0.9]], array![0.2, 0.5, 0.3]).unwrap();
        let c = [3.0, -1.25];
        let a = analytic_loss_energy_gaussian(&q, &[0.0, 0.0], 1.5).unwrap();
        let b = analytic_loss_energy_gaussian(&q.translated(&c).unwrap(), &c, 1.5).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let q = DiscreteMeasure::uniform(array![[0.1, -0.3], [1.0, 0.4], [-0.7, 0.9]]).unwrap();
        let mean = [0.2, 0.1];
        let g = analytic_loss_energy_gaussian_grad(&q, &mean, 1.1).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            for d in 0..2 {
                let mut plus = q.points().to_owned();
                plus[[i, d]] += h;
                let mut minus = q.points().to_owned();
                minus[[i, d]] -= h;
                let mut qp = q.clone();
                qp.set_points(plus).unwrap();
                let mut qm = q.clone();
                qm.set_points(minus).unwrap();
                let fd = (analytic_loss_energy_gaussian(&qp, &mean, 1.1).unwrap()
                    - analytic_loss_energy_gaussian(&qm, &mean, 1.1).unwrap())
                    / (2.0 * h);
                assert_relative_eq!(g[[i, d]], fd, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }
}
