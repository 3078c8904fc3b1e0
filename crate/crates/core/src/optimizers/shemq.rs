use std::time::Instant;

use ndarray::{Array1, Array2};

use super::{divergence, initial_weights, Adam, IterationRecord, OptimizerConfig, RunRecord, RunStatus, WeightMode};
use crate::distance::{batch_loss, batch_loss_grad};
use crate::error::{Error, Result};
use crate::estimators::batch_bias_correction;
use crate::kernels::KernelSpec;
use crate::measures::{seeded_rng, DiscreteMeasure, TargetMeasure};
use crate::scalar::Scalar;

/// Stochastic Huber-energy measure quantization.
///
/// Atoms start at `Q` i.i.d. target draws. Every iteration draws a fresh
/// batch of `B` target samples, evaluates the kernel distance between the
/// quantizer and the batch, and takes one Adam step on the atom locations.
/// Weights stay fixed. With `unbiased_loss` the recorded loss has the batch
/// self-term bias removed; the gradient is the same either way. Setting
/// `lr_final` anneals the step size, which damps the batch noise in the
/// final iterate.
pub fn shemq<T: Scalar>(
    kernel: &KernelSpec<T>,
    target: &TargetMeasure<T>,
    q: usize,
    config: &OptimizerConfig<T>,
) -> Result<RunRecord<T>> {
    kernel.validate()?;
    config.validate()?;
    if q == 0 {
        return Err(Error::InvalidInput("Q must be >= 1".into()));
    }
    if config.weight_mode == WeightMode::OptimizeNonnegative {
        return Err(Error::UnsupportedParameter(
            "stochastic quantization keeps weights fixed; use differential evolution to optimize them".into(),
        ));
    }
    let start = Instant::now();
    let mut rng = seeded_rng(config.seed);
    let init = target.sample_with(q, &mut rng)?;
    let weights = Array1::from_vec(initial_weights(q, T::one(), config)?);
    let mut quantizer = DiscreteMeasure::probability(init, weights)?;
    let n = quantizer.dim();

    let mut adam = Adam::new(
        q * n,
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_epsilon,
    );
    let mut params: Vec<T> = quantizer.points().iter().copied().collect();
    let mut trajectory = Vec::with_capacity(config.max_iterations);

    for iteration in 0..config.max_iterations {
        let batch = target.sample_with(config.batch_size, &mut rng)?;
        let mut loss = batch_loss(kernel, &quantizer, batch.view())?.total;
        if config.unbiased_loss {
            loss = loss - batch_bias_correction(kernel, batch.view())?;
        }
        let grad = batch_loss_grad(kernel, &quantizer, batch.view())?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(divergence(iteration, &quantizer));
        }
        let grad: Vec<T> = grad.iter().copied().collect();
        adam.set_learning_rate(config.learning_rate_at(iteration));
        adam.step(&mut params, &grad);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(divergence(iteration, &quantizer));
        }
        quantizer.set_points(Array2::from_shape_vec((q, n), params.clone()).expect("shape"))?;
        trajectory.push(IterationRecord {
            iteration,
            loss,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }

    let initial_loss = trajectory.first().map(|r| r.loss).unwrap_or_else(T::nan);
    Ok(RunRecord {
        trajectory,
        initial_loss,
        quantizer,
        config: config.clone(),
        status: RunStatus::Completed,
    })
}
