use std::time::Instant;

use ndarray::Array2;

use super::{IterationRecord, OptimizerConfig, RunRecord, RunStatus};
use crate::distance::{analytic_loss_energy_gaussian, analytic_loss_energy_gaussian_grad};
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::scalar::Scalar;

/// Right-hand side `−L ∇L / (‖∇L‖² + ε)` at the given quantizer.
///
/// Returns `None` when the gradient vanishes identically while `L > 0`.
pub fn flow_velocity<T: Scalar>(
    quantizer: &DiscreteMeasure<T>,
    mean: &[T],
    sigma: T,
    eps_tol: T,
) -> Result<Option<Array2<T>>> {
    let loss = analytic_loss_energy_gaussian(quantizer, mean, sigma)?;
    let grad = analytic_loss_energy_gaussian_grad(quantizer, mean, sigma)?;
    let norm2 = grad.iter().fold(T::zero(), |acc, g| acc + *g * *g);
    if norm2 == T::zero() {
        return Ok(None);
    }
    let scale = -loss / (norm2 + eps_tol);
    Ok(Some(grad.mapv(|g| g * scale)))
}

fn shifted<T: Scalar>(base: &DiscreteMeasure<T>, direction: &Array2<T>, step: T) -> Result<DiscreteMeasure<T>> {
    let mut out = base.clone();
    let pts = &base.points() + &direction.mapv(|v| v * step);
    out.set_points(pts)?;
    Ok(out)
}

/// Integrates the normalized gradient flow of the energy distance to
/// `N(mean, σ² I)` with classical RK4 up to time `flow_total_time`.
///
/// With `ε = 0` the loss obeys `L(t) = e^{−t} L(0)` exactly. The run halts
/// with [`RunStatus::Stationary`] if the gradient vanishes while `L > 0`.
/// Trajectory entry `k` holds the loss after `k` steps (`k ≥ 1`); the
/// starting loss is in [`RunRecord::initial_loss`].
pub fn gradient_flow<T: Scalar>(
    quantizer0: &DiscreteMeasure<T>,
    mean: &[T],
    sigma: T,
    config: &OptimizerConfig<T>,
) -> Result<RunRecord<T>> {
    config.validate()?;
    if !quantizer0.is_probability() {
        return Err(Error::InvalidInput(
            "gradient flow needs a probability-mode quantizer".into(),
        ));
    }
    let start = Instant::now();
    let dt = config.flow_dt();
    let steps = (config.flow_total_time / dt).round().to_usize().unwrap_or(0).max(1);
    let eps = config.eps_tol;
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);

    let mut x = quantizer0.clone();
    let initial_loss = analytic_loss_energy_gaussian(&x, mean, sigma)?;
    let mut trajectory = Vec::with_capacity(steps);
    let mut status = RunStatus::Completed;

    for step in 1..=steps {
        let Some(k1) = flow_velocity(&x, mean, sigma, eps)? else {
            status = RunStatus::Stationary;
            break;
        };
        let stage = |dir: &Array2<T>, h: T| -> Result<Array2<T>> {
            let y = shifted(&x, dir, h)?;
            Ok(flow_velocity(&y, mean, sigma, eps)?.unwrap_or_else(|| Array2::zeros(dir.dim())))
        };
        let k2 = stage(&k1, dt * half)?;
        let k3 = stage(&k2, dt * half)?;
        let k4 = stage(&k3, dt)?;
        let incr = (&k1 + &k2.mapv(|v| v * T::lit(2.0)) + &k3.mapv(|v| v * T::lit(2.0)) + &k4).mapv(|v| v * sixth);
        let next = shifted(&x, &incr, dt);
        let next = match next {
            Ok(n) => n,
            Err(_) => return Err(super::divergence(step, &x)),
        };
        let loss = analytic_loss_energy_gaussian(&next, mean, sigma)?;
        if !loss.is_finite() {
            return Err(super::divergence(step, &x));
        }
        x = next;
        trajectory.push(IterationRecord {
            iteration: step,
            loss,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    if status == RunStatus::Stationary {
        log::warn!("gradient flow reached a stationary point with positive loss; halting");
    }

    Ok(RunRecord {
        trajectory,
        initial_loss,
        quantizer: x,
        config: config.clone(),
        status,
    })
}
