use ndarray::Array2;

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::scalar::Scalar;
use crate::special::normal_quantile;

/// Optimal `J`-point uniform-weight quantizer of a 1D law under the energy
/// kernel: `x_j = F⁻¹((j − ½)/J)`.
pub fn exact_quantile_1d<T: Scalar, F: Fn(T) -> T>(inverse_cdf: F, j: usize) -> Result<DiscreteMeasure<T>> {
    if j == 0 {
        return Err(Error::InvalidInput("J must be >= 1".into()));
    }
    let denom = T::from_usize_lossy(2 * j);
    let xs: Vec<T> = (1..=j)
        .map(|k| inverse_cdf(T::from_usize_lossy(2 * k - 1) / denom))
        .collect();
    if let Some(bad) = xs.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("inverse CDF returned {bad}")));
    }
    if let Some(k) = xs.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput(format!(
            "inverse CDF is not monotone: x[{}] = {} > x[{}] = {}",
            k,
            xs[k],
            k + 1,
            xs[k + 1]
        )));
    }
    DiscreteMeasure::uniform(Array2::from_shape_vec((j, 1), xs).expect("column shape"))
}

pub fn exact_quantile_normal<T: Scalar>(mean: T, sigma: T, j: usize) -> Result<DiscreteMeasure<T>> {
    if !(sigma > T::zero()) {
        return Err(Error::InvalidInput(format!("sigma must be > 0, got {sigma}")));
    }
    exact_quantile_1d(|p: T| mean + sigma * T::lit(normal_quantile(p.as_f64())), j)
}

pub fn exact_quantile_uniform<T: Scalar>(lo: T, hi: T, j: usize) -> Result<DiscreteMeasure<T>> {
    if !(hi > lo) {
        return Err(Error::InvalidInput(format!("empty interval [{lo}, {hi}]")));
    }
    exact_quantile_1d(|p: T| lo + (hi - lo) * p, j)
}
