//! Quantization solvers.
//!
//! * [`shemq`]: stochastic Huber-energy quantization, fresh target batch per
//!   iteration and Adam steps on the atom locations.
//! * [`gradient_flow`]: normalized flow `dX/dt = −L ∇L / (‖∇L‖² + ε)` for an
//!   isotropic Gaussian target under the energy kernel, integrated with RK4.
//! * [`differential_evolution`]: derivative-free joint search over points and
//!   nonnegative weights.
//! * [`solve_weights`]: optimal weights for fixed points (a quadratic program).
//! * [`exact_quantile_1d`]: closed-form 1D energy-kernel quantizer.

mod adam;
mod de;
mod flow;
mod quantile;
mod shemq;
mod weights;

pub use adam::Adam;
pub use de::{differential_evolution, project_weights};
pub use flow::{flow_velocity, gradient_flow};
pub use quantile::{exact_quantile_1d, exact_quantile_normal, exact_quantile_uniform};
pub use shemq::shemq;
pub use weights::{solve_weights, WeightConstraint, WeightSolution};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Shemq,
    GradientFlow,
    DifferentialEvolution,
    ExactQuantile1d,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Shemq => "shemq",
            Method::GradientFlow => "gradient-flow",
            Method::DifferentialEvolution => "differential-evolution",
            Method::ExactQuantile1d => "exact-quantile-1d",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shemq" => Ok(Method::Shemq),
            "gradient-flow" | "flow" => Ok(Method::GradientFlow),
            "differential-evolution" | "de" => Ok(Method::DifferentialEvolution),
            "exact-quantile-1d" | "exact1d" => Ok(Method::ExactQuantile1d),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// `α_q = mass / Q`.
    FixedUniform,
    /// Weights taken from [`OptimizerConfig::weights`].
    FixedGiven,
    /// Weights are decision variables, constrained to `α ≥ 0`, `Σα = mass`.
    OptimizeNonnegative,
}

/// Differential evolution mutation base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeStrategy {
    /// `x_r1 + F (x_r2 − x_r3)`.
    #[default]
    Rand1Bin,
    /// `x_best + F (x_r1 − x_r2)`, best taken at the start of the generation.
    Best1Bin,
}

impl std::str::FromStr for DeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rand1bin" | "rand-1-bin" => Ok(DeStrategy::Rand1Bin),
            "best1bin" | "best-1-bin" => Ok(DeStrategy::Best1Bin),
            other => Err(Error::InvalidInput(format!("unknown DE strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig<T> {
    pub method: Method,
    pub batch_size: usize,
    pub learning_rate: T,
    /// When set, the learning rate follows a cosine from `learning_rate`
    /// down to this value over `max_iterations`; otherwise it is constant.
    pub lr_final: Option<T>,
    pub adam_beta1: T,
    pub adam_beta2: T,
    pub adam_epsilon: T,
    pub max_iterations: usize,
    pub flow_total_time: T,
    /// RK4 step; `None` means `min(1e-3, T/2000)`.
    pub flow_step: Option<T>,
    pub eps_tol: T,
    pub seed: u64,
    pub weight_mode: WeightMode,
    pub weights: Option<Vec<T>>,
    /// Report the bias-corrected batch loss instead of the plug-in one.
    pub unbiased_loss: bool,
    pub de_strategy: DeStrategy,
    pub de_population_factor: usize,
    pub de_mutation: T,
    pub de_crossover: T,
    /// Population energy spread (relative) below which DE stops early.
    pub de_tol: T,
}

impl<T: Scalar> Default for OptimizerConfig<T> {
    fn default() -> Self {
        OptimizerConfig {
            method: Method::Shemq,
            batch_size: 64,
            learning_rate: T::lit(0.1),
            lr_final: None,
            adam_beta1: T::lit(0.9),
            adam_beta2: T::lit(0.999),
            adam_epsilon: T::lit(1e-8),
            max_iterations: 2000,
            flow_total_time: T::lit(1.75),
            flow_step: None,
            eps_tol: T::lit(1e-14),
            seed: 0,
            weight_mode: WeightMode::FixedUniform,
            weights: None,
            unbiased_loss: false,
            de_strategy: DeStrategy::Rand1Bin,
            de_population_factor: 15,
            de_mutation: T::lit(0.8),
            de_crossover: T::lit(0.9),
            de_tol: T::lit(1e-10),
        }
    }
}

impl<T: Scalar> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let min_batch = if self.unbiased_loss { 2 } else { 1 };
        if self.batch_size < min_batch {
            return Err(Error::Config(format!(
                "batch size must be >= {min_batch}, got {}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > T::zero()) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if let Some(lr) = self.lr_final {
            if !(lr > T::zero() && lr <= self.learning_rate) {
                return Err(Error::Config("lr_final must lie in (0, learning_rate]".into()));
            }
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b >= T::zero() && b < T::one()) {
                return Err(Error::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.eps_tol >= T::zero()) {
            return Err(Error::Config("eps_tol must be >= 0".into()));
        }
        if !(self.flow_total_time > T::zero()) {
            return Err(Error::Config("flow total time must be > 0".into()));
        }
        if let Some(dt) = self.flow_step {
            if !(dt > T::zero()) {
                return Err(Error::Config("flow step must be > 0".into()));
            }
        }
        if self.weight_mode == WeightMode::FixedGiven && self.weights.is_none() {
            return Err(Error::Config("weight mode fixed-given requires weights".into()));
        }
        Ok(())
    }

    /// Learning rate used at `iteration` (0-based).
    pub fn learning_rate_at(&self, iteration: usize) -> T {
        match self.lr_final {
            None => self.learning_rate,
            Some(end) => {
                let span = self.max_iterations.saturating_sub(1).max(1);
                let frac = T::from_usize_lossy(iteration.min(span)) / T::from_usize_lossy(span);
                let cos = (T::PI() * frac).cos();
                end + (self.learning_rate - end) * T::lit(0.5) * (T::one() + cos)
            }
        }
    }

    /// Effective RK4 step.
    pub fn flow_dt(&self) -> T {
        self.flow_step
            .unwrap_or_else(|| T::lit(1e-3).min(self.flow_total_time / T::lit(2000.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub loss: T,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    /// The flow reached a point with zero gradient and positive loss.
    Stationary,
    /// Early stop on a convergence criterion.
    Converged,
}

/// Optimizer trajectory and result.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord<T> {
    pub trajectory: Vec<IterationRecord<T>>,
    pub initial_loss: T,
    pub quantizer: DiscreteMeasure<T>,
    pub config: OptimizerConfig<T>,
    pub status: RunStatus,
}

impl<T: Scalar> RunRecord<T> {
    pub fn final_loss(&self) -> T {
        self.trajectory.last().map(|r| r.loss).unwrap_or(self.initial_loss)
    }

    /// Equality ignoring wall-clock timings.
    pub fn same_result(&self, other: &RunRecord<T>) -> bool {
        self.quantizer == other.quantizer
            && self.initial_loss == other.initial_loss
            && self.status == other.status
            && self.trajectory.len() == other.trajectory.len()
            && self
                .trajectory
                .iter()
                .zip(&other.trajectory)
                .all(|(a, b)| a.iteration == b.iteration && a.loss == b.loss)
    }
}

pub(crate) fn initial_weights<T: Scalar>(q: usize, mass: T, config: &OptimizerConfig<T>) -> Result<Vec<T>> {
    match config.weight_mode {
        WeightMode::FixedUniform | WeightMode::OptimizeNonnegative => Ok(vec![mass / T::from_usize_lossy(q); q]),
        WeightMode::FixedGiven => {
            let w = config.weights.clone().unwrap_or_default();
            if w.len() != q {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    got: w.len(),
                });
            }
            Ok(w)
        }
    }
}

pub(crate) fn divergence<T: Scalar>(iteration: usize, last: &DiscreteMeasure<T>) -> Error {
    Error::Divergence {
        iteration,
        last_points: last
            .points_rows()
            .into_iter()
            .map(|r| r.into_iter().map(|v| v.as_f64()).collect())
            .collect(),
        last_weights: last.weights().iter().map(|w| w.as_f64()).collect(),
    }
}
