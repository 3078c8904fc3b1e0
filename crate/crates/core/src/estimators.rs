//! Unbiased estimators of `d(ν, μ)²` from i.i.d. samples, a biased plug-in
//! baseline, and a small Monte Carlo harness used to validate them.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{cross_term, self_term, squared_distance_atomic};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::measures::{seeded_rng, DiscreteMeasure, SeededRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    BlueTwoSample,
    BlueOneSample,
    VStatistic,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::BlueTwoSample => "blue-two-sample",
            EstimatorKind::BlueOneSample => "blue-one-sample",
            EstimatorKind::VStatistic => "v-statistic",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blue-two-sample" => Ok(EstimatorKind::BlueTwoSample),
            "blue-one-sample" => Ok(EstimatorKind::BlueOneSample),
            "v-statistic" => Ok(EstimatorKind::VStatistic),
            other => Err(Error::InvalidInput(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Value of a squared-distance estimator plus the sample sizes it used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate<T> {
    pub value: T,
    pub kind: EstimatorKind,
    #[serde(rename = "q")]
    pub q_samples: usize,
    #[serde(rename = "j")]
    pub j_samples: usize,
    pub seed: Option<u64>,
}

impl<T> DistanceEstimate<T> {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// Denominator of the cross block in the two-sample estimator.
///
/// `ProductOfSizes` (`Q·J`) is the unbiased choice. `SizesMinusOne`
/// (`(Q−1)(J−1)`) is kept only to measure the bias of that variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossDenominator {
    #[default]
    ProductOfSizes,
    SizesMinusOne,
}

/// `Σ_{i≠j} h(x_i, x_j)` over the rows of `xs`.
fn off_diagonal_sum<T: Scalar>(kernel: &KernelSpec<T>, xs: ArrayView2<'_, T>) -> T {
    let ones = Array1::from_elem(xs.nrows(), T::one());
    T::lit(2.0) * self_term(kernel, xs, ones.view())
}

fn check_dims<T: Scalar>(xs: ArrayView2<'_, T>, ys: ArrayView2<'_, T>) -> Result<()> {
    if xs.ncols() != ys.ncols() {
        return Err(Error::DimensionMismatch {
            expected: xs.ncols(),
            got: ys.ncols(),
        });
    }
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("samples".into()));
    }
    Ok(())
}

/// Minimal-variance unbiased estimator from `Q` draws of ν and `J` draws of μ:
/// `Σ h(x_q, y_j)/(QJ) − Σ_{q≠q′} h(x_q, x_q′)/(2Q(Q−1)) − Σ_{j≠j′} h(y_j, y_j′)/(2J(J−1))`.
pub fn blue_two_sample<T: Scalar>(
    kernel: &KernelSpec<T>,
    xs: ArrayView2<'_, T>,
    ys: ArrayView2<'_, T>,
) -> Result<DistanceEstimate<T>> {
    blue_two_sample_with(kernel, xs, ys, CrossDenominator::ProductOfSizes)
}

pub fn blue_two_sample_with<T: Scalar>(
    kernel: &KernelSpec<T>,
    xs: ArrayView2<'_, T>,
    ys: ArrayView2<'_, T>,
    denominator: CrossDenominator,
) -> Result<DistanceEstimate<T>> {
    let (q, j) = (xs.nrows(), ys.nrows());
    if q < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: q });
    }
    if j < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: j });
    }
    check_dims(xs, ys)?;
    let (xs, ys) = (xs.as_standard_layout(), ys.as_standard_layout());
    let ones_x = Array1::from_elem(q, T::one());
    let ones_y = Array1::from_elem(j, T::one());
    let cross = cross_term(kernel, xs.view(), ones_x.view(), ys.view(), ones_y.view());
    let qf = T::from_usize_lossy(q);
    let jf = T::from_usize_lossy(j);
    let cross_den = match denominator {
        CrossDenominator::ProductOfSizes => qf * jf,
        CrossDenominator::SizesMinusOne => (qf - T::one()) * (jf - T::one()),
    };
    let two = T::lit(2.0);
    let value = cross / cross_den
        - off_diagonal_sum(kernel, xs.view()) / (two * qf * (qf - T::one()))
        - off_diagonal_sum(kernel, ys.view()) / (two * jf * (jf - T::one()));
    Ok(DistanceEstimate {
        value,
        kind: EstimatorKind::BlueTwoSample,
        q_samples: q,
        j_samples: j,
        seed: None,
    })
}

/// Bias correction `Σ_{j≠j′} h(z_j, z_j′) / (2J²(J−1))` separating the
/// plug-in loss against a uniform batch from an unbiased estimate.
pub fn batch_bias_correction<T: Scalar>(kernel: &KernelSpec<T>, zs: ArrayView2<'_, T>) -> Result<T> {
    let j = zs.nrows();
    if j < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: j });
    }
    let jf = T::from_usize_lossy(j);
    let zs = zs.as_standard_layout();
    Ok(off_diagonal_sum(kernel, zs.view()) / (T::lit(2.0) * jf * jf * (jf - T::one())))
}

/// Unbiased estimator of `d(ν, μ)²` for a known atomic ν and `J` draws of μ:
/// `d(ν, (1/J)Σ δ_{z_j})² − Σ_{j≠j′} h(z_j, z_j′)/(2J²(J−1))`.
pub fn blue_one_sample<T: Scalar>(
    kernel: &KernelSpec<T>,
    nu: &DiscreteMeasure<T>,
    zs: ArrayView2<'_, T>,
) -> Result<DistanceEstimate<T>> {
    let j = zs.nrows();
    if j < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: j });
    }
    if !nu.is_probability() {
        return Err(Error::InvalidInput(
            "one-sample estimator needs a probability-mode ν".into(),
        ));
    }
    if zs.ncols() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: nu.dim(),
            got: zs.ncols(),
        });
    }
    let empirical = DiscreteMeasure::uniform(zs.as_standard_layout().to_owned())?;
    let plug_in = squared_distance_atomic(kernel, nu, &empirical)?.total;
    Ok(DistanceEstimate {
        value: plug_in - batch_bias_correction(kernel, zs)?,
        kind: EstimatorKind::BlueOneSample,
        q_samples: nu.len(),
        j_samples: j,
        seed: None,
    })
}

/// Plug-in (biased) distance between the two empirical measures.
pub fn v_statistic<T: Scalar>(
    kernel: &KernelSpec<T>,
    xs: ArrayView2<'_, T>,
    ys: ArrayView2<'_, T>,
) -> Result<DistanceEstimate<T>> {
    let (q, j) = (xs.nrows(), ys.nrows());
    if q < 1 || j < 1 {
        return Err(Error::InsufficientSamples {
            needed: 1,
            got: q.min(j),
        });
    }
    check_dims(xs, ys)?;
    let a = DiscreteMeasure::uniform(xs.as_standard_layout().to_owned())?;
    let b = DiscreteMeasure::uniform(ys.as_standard_layout().to_owned())?;
    Ok(DistanceEstimate {
        value: squared_distance_atomic(kernel, &a, &b)?.total,
        kind: EstimatorKind::VStatistic,
        q_samples: q,
        j_samples: j,
        seed: None,
    })
}

/// Weight matrix `w` of a linear estimator `Σ_{a,b} w_ab h(X_a, X_b)` over
/// the stacked sample `(x_1..x_Q, y_1..y_J)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEstimatorWeights<T> {
    pub q: usize,
    pub j: usize,
    pub w: Array2<T>,
}

impl<T: Scalar> LinearEstimatorWeights<T> {
    /// The weights of [`blue_two_sample`].
    pub fn blue(q: usize, j: usize) -> Self {
        let n = q + j;
        let (qf, jf) = (T::from_usize_lossy(q), T::from_usize_lossy(j));
        let half = T::lit(0.5);
        let w = Array2::from_shape_fn((n, n), |(a, b)| {
            if a == b {
                T::zero()
            } else if a < q && b < q {
                -half / (qf * (qf - T::one()))
            } else if a >= q && b >= q {
                -half / (jf * (jf - T::one()))
            } else {
                half / (qf * jf)
            }
        });
        LinearEstimatorWeights { q, j, w }
    }

    /// Block sums `(Σ_{ν-block, a≠b}, Σ_{μ-block, a≠b}, Σ_{cross})`.
    pub fn block_sums(&self) -> (T, T, T) {
        let (mut xx, mut yy, mut xy) = (T::zero(), T::zero(), T::zero());
        for ((a, b), v) in self.w.indexed_iter() {
            if a == b {
                continue;
            }
            match (a < self.q, b < self.q) {
                (true, true) => xx = xx + *v,
                (false, false) => yy = yy + *v,
                _ => xy = xy + *v,
            }
        }
        (xx, yy, xy)
    }

    /// Zero-bias constraints: the two within-sample blocks sum to −½, the
    /// cross blocks to 1, with a zero diagonal.
    pub fn is_unbiased(&self, tol: f64) -> bool {
        let diag_zero = (0..self.q + self.j).all(|a| self.w[[a, a]] == T::zero());
        let (xx, yy, xy) = self.block_sums();
        diag_zero
            && (xx.as_f64() + 0.5).abs() <= tol
            && (yy.as_f64() + 0.5).abs() <= tol
            && (xy.as_f64() - 1.0).abs() <= tol
    }

    /// Evaluates the estimator on `xs` (Q rows) and `ys` (J rows).
    pub fn estimate(&self, kernel: &KernelSpec<T>, xs: ArrayView2<'_, T>, ys: ArrayView2<'_, T>) -> Result<T> {
        if xs.nrows() != self.q || ys.nrows() != self.j {
            return Err(Error::InvalidInput(
                "sample counts do not match the weight matrix".into(),
            ));
        }
        check_dims(xs, ys)?;
        let row = |a: usize| -> Vec<T> {
            if a < self.q {
                xs.row(a).to_vec()
            } else {
                ys.row(a - self.q).to_vec()
            }
        };
        let rows: Vec<Vec<T>> = (0..self.q + self.j).map(row).collect();
        let mut acc = T::zero();
        for ((a, b), v) in self.w.indexed_iter() {
            if a != b && *v != T::zero() {
                acc = acc + *v * kernel.eval_unchecked(&rows[a], &rows[b]);
            }
        }
        Ok(acc)
    }
}

/// Mean and spread of a Monte Carlo experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub mean: f64,
    /// Sample variance (n − 1 normalization).
    pub variance: f64,
    pub std_error: f64,
}

impl MonteCarloSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        MonteCarloSummary {
            trials: n,
            mean,
            variance,
            std_error: (variance / n as f64).sqrt(),
        }
    }

    /// `|mean − expected| ≤ k · std_error`.
    pub fn within(&self, expected: f64, k: f64) -> bool {
        (self.mean - expected).abs() <= k * self.std_error
    }
}

/// Runs `trials` independent evaluations of `trial` in parallel. Trial `i`
/// gets its own generator seeded with `seed + i`, so results do not depend
/// on scheduling.
pub fn monte_carlo<F>(trials: usize, seed: u64, trial: F) -> Vec<f64>
where
    F: Fn(&mut SeededRng) -> f64 + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded_rng(seed.wrapping_add(i as u64));
            trial(&mut rng)
        })
        .collect()
}
