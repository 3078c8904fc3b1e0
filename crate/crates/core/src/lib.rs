//! Measure quantization with kernel-induced distances.
//!
//! A target law, given by samples, atoms or a Gaussian mixture, is
//! approximated by `Q` weighted Dirac masses minimizing the squared distance
//! `d(η₁, η₂)² = −½ ∬ h(x, y) d(η₁−η₂)(x) d(η₁−η₂)(y)` for a negative definite
//! kernel `h` such as the Huber-energy kernel `(a² + ‖x − y‖²)^{r/2} − a^r`.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distance;
pub mod error;
pub mod estimators;
pub mod io;
pub mod kernels;
pub mod measures;
pub mod metrics;
pub mod optimizers;
pub mod scalar;
pub mod special;

pub use distance::{
    analytic_loss_energy_gaussian, analytic_loss_energy_gaussian_grad, batch_loss, batch_loss_grad, cross_term,
    g_energy_gaussian, g_energy_gaussian_grad, self_term, squared_distance_atomic, LossBreakdown,
};
pub use error::{Error, Result};
pub use estimators::{
    batch_bias_correction, blue_one_sample, blue_two_sample, blue_two_sample_with, monte_carlo, v_statistic,
    CrossDenominator, DistanceEstimate, EstimatorKind, LinearEstimatorWeights, MonteCarloSummary,
};
pub use kernels::{decomposition_check, h_eval, h_grad_x, k_from_h, KernelGradient, KernelSpec};
pub use measures::{
    brownian_path, seeded_rng, DiscreteMeasure, GaussianComponent, SeededRng, TargetMeasure, WeightNormalization,
};
pub use metrics::{
    adjusted_rand, assign_nearest, confusion, dve, kmeans, nearest_labels, AssignmentResult, ConfusionMatrix,
    KMeansResult,
};
pub use optimizers::{
    differential_evolution, exact_quantile_1d, exact_quantile_normal, exact_quantile_uniform, gradient_flow,
    project_weights, shemq, solve_weights, DeStrategy, IterationRecord, Method, OptimizerConfig, RunRecord, RunStatus,
    WeightConstraint, WeightMode, WeightSolution,
};
pub use scalar::Scalar;

pub type Kernel = KernelSpec<f64>;
pub type Measure = DiscreteMeasure<f64>;
pub type Target = TargetMeasure<f64>;
pub type Config = OptimizerConfig<f64>;
pub type Record = RunRecord<f64>;
pub type Breakdown = LossBreakdown<f64>;
pub type Estimate = DistanceEstimate<f64>;
pub type Weights = WeightSolution<f64>;
