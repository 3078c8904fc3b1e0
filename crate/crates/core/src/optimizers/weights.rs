use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::distance::{check_equal_mass, squared_distance_atomic};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::measures::DiscreteMeasure;
use crate::scalar::Scalar;

const RIDGE: f64 = 1e-10;
const KKT_TOL: f64 = 1e-8;
const MAX_FISTA_ITERS: usize = 200_000;

/// Feasible set for the weights. Every mode keeps `Σα` equal to the
/// target mass, which the distance requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightConstraint {
    /// Signed weights.
    Unconstrained,
    /// `α ≥ 0`.
    Nonnegative,
    /// `α ≥ 0` with `Σα = 1`; the target must be a probability measure.
    Simplex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution<T> {
    pub weights: Array1<T>,
    /// `d²(δ_{α,X}, target)` at the returned weights.
    pub loss: T,
    /// The Gram system was singular; the weights are one minimizer among
    /// many (the measure itself is still optimal).
    pub degenerate: bool,
    pub iterations: usize,
}

/// Optimal weights for fixed atom locations.
///
/// With the reproducing kernel `k_{z0}` (`z0` the first target atom) the loss
/// is the quadratic `αᵀKα − 2αᵀb + c`, minimized over the affine set
/// `Σα = mass` intersected with the chosen constraint.
pub fn solve_weights<T: Scalar>(
    kernel: &KernelSpec<T>,
    points: ArrayView2<'_, T>,
    target: &DiscreteMeasure<T>,
    constraint: WeightConstraint,
) -> Result<WeightSolution<T>> {
    kernel.validate()?;
    let q = points.nrows();
    if q == 0 {
        return Err(Error::InvalidInput("need at least one point".into()));
    }
    if points.ncols() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: points.ncols(),
        });
    }
    let mass = target.weight_sum().as_f64();
    if constraint == WeightConstraint::Simplex {
        check_equal_mass(mass, 1.0)?;
    }
    if constraint != WeightConstraint::Unconstrained && !(mass > 0.0) {
        return Err(Error::InvalidInput(format!(
            "nonnegative weights need positive target mass, got {mass}"
        )));
    }

    let points = points.as_standard_layout();
    let row = |i: usize| points.row(i).to_slice().expect("standard layout").to_vec();
    let xs: Vec<Vec<T>> = (0..q).map(row).collect();
    let z0 = target.point(0);
    let gram = DMatrix::from_fn(q, q, |i, j| kernel.k_unchecked(z0, &xs[i], &xs[j]).as_f64());
    let tw = target.weights();
    let rhs = DVector::from_fn(q, |i, _| {
        (0..target.len())
            .map(|j| tw[j].as_f64() * kernel.k_unchecked(z0, &xs[i], target.point(j)).as_f64())
            .sum::<f64>()
    });
    if gram.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Gram matrix".into()));
    }

    let (alpha, degenerate, iterations) = match constraint {
        WeightConstraint::Unconstrained => {
            let (a, d) = equality_constrained(&gram, &rhs, mass);
            (a, d, 1)
        }
        WeightConstraint::Nonnegative | WeightConstraint::Simplex => simplex_constrained(&gram, &rhs, mass),
    };

    let weights = Array1::from_iter(alpha.iter().map(|v| T::lit(*v)));
    let measure = DiscreteMeasure::new(points.to_owned(), weights.clone())?;
    let loss = squared_distance_atomic(kernel, &measure, target)?.total;
    Ok(WeightSolution {
        weights,
        loss,
        degenerate,
        iterations,
    })
}

/// Minimizes `αᵀKα − 2αᵀb` subject to `Σα = mass` through the KKT system.
/// Returns the weights and whether the system was singular.
fn equality_constrained(gram: &DMatrix<f64>, rhs: &DVector<f64>, mass: f64) -> (DVector<f64>, bool) {
    let q = gram.nrows();
    let kkt = |ridge: f64| {
        let mut m = DMatrix::zeros(q + 1, q + 1);
        m.view_mut((0, 0), (q, q)).copy_from(&(gram * 2.0));
        for i in 0..q {
            m[(i, i)] += ridge;
            m[(i, q)] = 1.0;
            m[(q, i)] = 1.0;
        }
        m
    };
    let mut b = DVector::zeros(q + 1);
    b.rows_mut(0, q).copy_from(&(rhs * 2.0));
    b[q] = mass;

    let system = kkt(0.0);
    let svd = system.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin > smax * 1e-12 {
        if let Some(sol) = system.clone().lu().solve(&b) {
            return (sol.rows(0, q).into_owned(), false);
        }
    }
    if let Some(sol) = kkt(RIDGE).lu().solve(&b) {
        let residual = (&system * &sol - &b).amax();
        if residual <= KKT_TOL * (1.0 + b.amax()) {
            return (sol.rows(0, q).into_owned(), true);
        }
    }
    let sol = system
        .svd(true, true)
        .solve(&b, smax * 1e-12)
        .expect("SVD with both factors");
    (sol.rows(0, q).into_owned(), true)
}

/// Euclidean projection onto `{α ≥ 0, Σα = mass}`.
fn project_simplex(v: &DVector<f64>, mass: f64) -> DVector<f64> {
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite weights"));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - mass) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

fn kkt_residual(gram: &DMatrix<f64>, rhs: &DVector<f64>, alpha: &DVector<f64>, mass: f64) -> f64 {
    let grad = (gram * alpha - rhs) * 2.0;
    (alpha - project_simplex(&(alpha - &grad), mass)).amax()
}

/// Accelerated projected gradient followed by an exact solve on the
/// detected support.
fn simplex_constrained(gram: &DMatrix<f64>, rhs: &DVector<f64>, mass: f64) -> (DVector<f64>, bool, usize) {
    let q = gram.nrows();
    let lipschitz = 2.0 * gram.clone().symmetric_eigenvalues().amax().max(f64::MIN_POSITIVE);
    let step = 1.0 / lipschitz;
    let mut alpha = DVector::from_element(q, mass / q as f64);
    let mut y = alpha.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    while iterations < MAX_FISTA_ITERS {
        iterations += 1;
        let grad = (gram * &y - rhs) * 2.0;
        let next = project_simplex(&(&y - grad * step), mass);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + (&next - &alpha) * ((t - 1.0) / t_next);
        alpha = next;
        t = t_next;
        if iterations % 50 == 0 && kkt_residual(gram, rhs, &alpha, mass) <= KKT_TOL {
            break;
        }
    }

    let support: Vec<usize> = (0..q).filter(|&i| alpha[i] > KKT_TOL * mass).collect();
    let sub_gram = DMatrix::from_fn(support.len(), support.len(), |i, j| gram[(support[i], support[j])]);
    let sub_rhs = DVector::from_fn(support.len(), |i, _| rhs[support[i]]);
    let (sub, degenerate) = equality_constrained(&sub_gram, &sub_rhs, mass);
    if sub.iter().all(|v| *v >= 0.0) {
        let mut polished = DVector::zeros(q);
        for (k, &i) in support.iter().enumerate() {
            polished[i] = sub[k];
        }
        if kkt_residual(gram, rhs, &polished, mass) <= kkt_residual(gram, rhs, &alpha, mass).max(KKT_TOL) {
            return (polished, degenerate, iterations);
        }
    }
    let degenerate = gram.clone().svd(false, false).singular_values.min() <= 1e-12 * lipschitz;
    (alpha, degenerate, iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn recovers_target_weights_on_its_atoms() {
        let target = DiscreteMeasure::uniform(array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]).unwrap();
        let sol = solve_weights(
            &KernelSpec::<f64>::energy(),
            target.points(),
            &target,
            WeightConstraint::Simplex,
        )
        .unwrap();
        for w in sol.weights.iter() {
            assert!((w - 1.0 / 3.0).abs() < 1e-7, "{w}");
        }
        assert!(sol.loss.abs() < 1e-12);
    }

    #[test]
    fn far_point_gets_no_weight() {
        let target = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let sol = solve_weights(
            &KernelSpec::<f64>::energy(),
            array![[0.0], [10.0]].view(),
            &target,
            WeightConstraint::Unconstrained,
        )
        .unwrap();
        assert!((sol.weights[0] - 1.0).abs() < 1e-12 && sol.weights[1].abs() < 1e-12);
        assert!(!sol.degenerate);
    }

    #[test]
    fn duplicated_points_are_degenerate_but_optimal() {
        let target = DiscreteMeasure::uniform(array![[0.0], [1.0]]).unwrap();
        let sol = solve_weights(
            &KernelSpec::<f64>::energy(),
            array![[0.0], [1.0], [1.0]].view(),
            &target,
            WeightConstraint::Unconstrained,
        )
        .unwrap();
        assert!(sol.degenerate);
        assert!((sol.weights[0] - 0.5).abs() < 1e-6);
        assert!((sol.weights[1] + sol.weights[2] - 0.5).abs() < 1e-6);
        assert!(sol.loss.abs() < 1e-9);
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&DVector::from_vec(vec![0.5, -1.0, 2.0]), 1.0);
        assert!((p.sum() - 1.0).abs() < 1e-15);
        assert_eq!(p[1], 0.0);
        assert!((p[2] - p[0] - 1.5).abs() < 1e-15 || p[0] == 0.0);
    }

    #[test]
    fn simplex_requires_unit_mass() {
        let target = DiscreteMeasure::new(array![[0.0]], array![2.0]).unwrap();
        let err = solve_weights(
            &KernelSpec::<f64>::energy(),
            array![[0.0]].view(),
            &target,
            WeightConstraint::Simplex,
        );
        assert!(matches!(err, Err(Error::MassMismatch { .. })));
        let ok = solve_weights(
            &KernelSpec::<f64>::energy(),
            array![[0.0]].view(),
            &target,
            WeightConstraint::Nonnegative,
        )
        .unwrap();
        assert!((ok.weights[0] - 2.0).abs() < 1e-12);
    }
}
