//! Property checks shared by the property suite and the acceptance runner.
#![allow(dead_code)]

use hemq::{
    batch_loss, batch_loss_grad, shemq, squared_distance_atomic, DiscreteMeasure, KernelSpec, OptimizerConfig,
    TargetMeasure,
};
use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type Check = std::result::Result<(), TestCaseError>;

/// Any supported kernel with parameters away from the edges of their ranges.
pub fn kernel_strategy() -> impl Strategy<Value = KernelSpec<f64>> {
    prop_oneof![
        (0.1f64..1.95, 0.0f64..2.0).prop_map(|(r, a)| KernelSpec::huber_energy(r, a).unwrap()),
        Just(KernelSpec::energy()),
        (0.3f64..3.0).prop_map(|s| KernelSpec::gaussian(s).unwrap()),
        (0.2f64..1.9, 0.0f64..1.0, 0.01f64..1.0)
            .prop_map(|(r, a, l)| { KernelSpec::penalized_mean(KernelSpec::huber_energy(r, a).unwrap(), l).unwrap() }),
    ]
}

/// Kernels that are differentiable everywhere.
pub fn smooth_kernel_strategy() -> impl Strategy<Value = KernelSpec<f64>> {
    prop_oneof![
        (0.1f64..1.95, 0.1f64..2.0).prop_map(|(r, a)| KernelSpec::huber_energy(r, a).unwrap()),
        (0.3f64..3.0).prop_map(|s| KernelSpec::gaussian(s).unwrap()),
        (0.2f64..1.9, 0.1f64..1.0, 0.01f64..1.0)
            .prop_map(|(r, a, l)| { KernelSpec::penalized_mean(KernelSpec::huber_energy(r, a).unwrap(), l).unwrap() }),
    ]
}

pub fn point_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, dim)
}

/// `n` points of dimension `dim`, as rows.
pub fn points_strategy(n: std::ops::RangeInclusive<usize>, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(point_strategy(dim), n)
}

/// A probability measure with 1..=6 atoms in dimension `dim`.
pub fn measure_strategy(dim: usize) -> impl Strategy<Value = DiscreteMeasure<f64>> {
    (1usize..=6)
        .prop_flat_map(move |n| (points_strategy(n..=n, dim), prop::collection::vec(0.05f64..1.0, n)))
        .prop_map(|(pts, w)| {
            let total: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|v| v / total).collect();
            DiscreteMeasure::probability(rows(&pts), ndarray::Array1::from(w)).unwrap()
        })
}

pub fn rows(pts: &[Vec<f64>]) -> Array2<f64> {
    let dim = pts[0].len();
    Array2::from_shape_vec((pts.len(), dim), pts.concat()).unwrap()
}

fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `h ≥ 0`, `h(x, x) = 0` and exact symmetry.
pub fn kernel_basics(kernel: &KernelSpec<f64>, x: &[f64], y: &[f64]) -> Check {
    let hxy = kernel.h(x, y).unwrap();
    let hyx = kernel.h(y, x).unwrap();
    prop_assert!(hxy >= 0.0, "h = {hxy}");
    prop_assert_eq!(hxy, hyx);
    prop_assert_eq!(kernel.h(x, x).unwrap(), 0.0);
    Ok(())
}

/// `Σ α_i α_j h(x_i, x_j) ≤ 1e-9` whenever `Σ α_i = 0`.
pub fn negative_definite(kernel: &KernelSpec<f64>, pts: &[Vec<f64>], raw: &[f64]) -> Check {
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let alpha: Vec<f64> = raw.iter().map(|v| v - mean).collect();
    let mut q = 0.0;
    for (i, xi) in pts.iter().enumerate() {
        for (j, xj) in pts.iter().enumerate() {
            q += alpha[i] * alpha[j] * kernel.h(xi, xj).unwrap();
        }
    }
    prop_assert!(q <= 1e-9, "quadratic form {q}");
    Ok(())
}

/// The Gram matrix of `k_{z0}` has min eigenvalue `≥ −1e-8 · trace`.
pub fn gram_positive(kernel: &KernelSpec<f64>, z0: &[f64], pts: &[Vec<f64>]) -> Check {
    let n = pts.len();
    let gram = DMatrix::from_fn(n, n, |i, j| kernel.k_from_h(z0, &pts[i], &pts[j]).unwrap());
    let trace = gram.trace();
    let min = gram.symmetric_eigenvalues().min();
    prop_assert!(
        min >= -1e-8 * trace.abs().max(1e-300),
        "min eigenvalue {min}, trace {trace}"
    );
    Ok(())
}

/// `∇_x h` against central differences with step 1e-5.
pub fn gradient_matches_differences(kernel: &KernelSpec<f64>, x: &[f64], y: &[f64]) -> Check {
    if dist2(x, y) < 1e-4 {
        return Ok(());
    }
    let g = kernel.grad_x(x, y).unwrap();
    prop_assert!(!g.at_kink);
    let step = 1e-5;
    let mut err2 = 0.0;
    let mut norm2 = 0.0;
    for k in 0..x.len() {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[k] += step;
        minus[k] -= step;
        let fd = (kernel.h(&plus, y).unwrap() - kernel.h(&minus, y).unwrap()) / (2.0 * step);
        err2 += (fd - g.value[k]).powi(2);
        norm2 += g.value[k].powi(2);
    }
    let (err, norm) = (err2.sqrt(), norm2.sqrt());
    prop_assert!(err <= 1e-4 * norm.max(1e-6), "gradient error {err} vs norm {norm}");
    Ok(())
}

/// `d(μ, λν₁+(1−λ)ν₂)² = λd(μ,ν₁)² + (1−λ)d(μ,ν₂)² − λ(1−λ)d(ν₁,ν₂)²`.
pub fn parallelogram(
    kernel: &KernelSpec<f64>,
    mu: &DiscreteMeasure<f64>,
    nu1: &DiscreteMeasure<f64>,
    nu2: &DiscreteMeasure<f64>,
    lambda: f64,
) -> Check {
    let d = |a: &DiscreteMeasure<f64>, b: &DiscreteMeasure<f64>| squared_distance_atomic(kernel, a, b).unwrap().total;
    let mix = nu1.combined(nu2, lambda, 1.0 - lambda).unwrap();
    let lhs = d(mu, &mix);
    let rhs = lambda * d(mu, nu1) + (1.0 - lambda) * d(mu, nu2) - lambda * (1.0 - lambda) * d(nu1, nu2);
    prop_assert!((lhs - rhs).abs() <= 1e-9, "lhs {lhs} rhs {rhs}");
    Ok(())
}

/// Gradient of the batch loss in the quantizer points against central
/// differences.
pub fn batch_gradient_matches_differences(
    kernel: &KernelSpec<f64>,
    quantizer: &DiscreteMeasure<f64>,
    batch: &Array2<f64>,
) -> Check {
    let q = quantizer.len();
    for i in 0..q {
        for j in 0..q {
            if i != j && dist2(quantizer.point(i), quantizer.point(j)) < 1e-4 {
                return Ok(());
            }
        }
        for row in batch.rows() {
            if dist2(quantizer.point(i), row.as_slice().unwrap()) < 1e-4 {
                return Ok(());
            }
        }
    }
    let grad = batch_loss_grad(kernel, quantizer, batch.view()).unwrap();
    let loss = |pts: Array2<f64>| {
        let mut m = quantizer.clone();
        m.set_points(pts).unwrap();
        batch_loss(kernel, &m, batch.view()).unwrap().total
    };
    let step = 1e-5;
    let mut err2 = 0.0;
    let mut norm2 = 0.0;
    for ((i, k), g) in grad.indexed_iter() {
        let mut plus = quantizer.points().to_owned();
        let mut minus = plus.clone();
        plus[[i, k]] += step;
        minus[[i, k]] -= step;
        let fd = (loss(plus) - loss(minus)) / (2.0 * step);
        err2 += (fd - g).powi(2);
        norm2 += g * g;
    }
    let (err, norm) = (err2.sqrt(), norm2.sqrt());
    prop_assert!(err <= 1e-4 * norm.max(1e-6), "gradient error {err} vs norm {norm}");
    Ok(())
}

/// Two runs with the same configuration and seed agree exactly.
pub fn shemq_deterministic(seed: u64, q: usize, dim: usize) -> Check {
    let target = TargetMeasure::gaussian(vec![0.0; dim], 1.0).unwrap();
    let config = OptimizerConfig {
        seed,
        max_iterations: 40,
        batch_size: 16,
        ..OptimizerConfig::default()
    };
    let a = shemq(&KernelSpec::default(), &target, q, &config).unwrap();
    let b = shemq(&KernelSpec::default(), &target, q, &config).unwrap();
    prop_assert!(a.same_result(&b));
    Ok(())
}
