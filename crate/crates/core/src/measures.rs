//! Discrete quantizer measures and sampleable target measures.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on `Σ α = 1` for probability-mode measures.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// Deterministic generator used by every sampling routine.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightNormalization {
    /// Arbitrary real weights (signed measures).
    Signed,
    /// Nonnegative weights summing to one.
    Probability,
}

/// `Σ_q α_q δ_{x_q}`: Q atoms in `R^N` with real weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure<T> {
    points: Array2<T>,
    weights: Array1<T>,
    normalization: WeightNormalization,
}

impl<T: Scalar> DiscreteMeasure<T> {
    /// Signed measure; weights are taken as given and never renormalized.
    pub fn new(points: Array2<T>, weights: Array1<T>) -> Result<Self> {
        validate_atoms(&points, &weights)?;
        Ok(DiscreteMeasure {
            points,
            weights,
            normalization: WeightNormalization::Signed,
        })
    }

    /// Probability measure; weights must be nonnegative and sum to one.
    pub fn probability(points: Array2<T>, weights: Array1<T>) -> Result<Self> {
        validate_atoms(&points, &weights)?;
        check_probability(weights.view())?;
        Ok(DiscreteMeasure {
            points,
            weights,
            normalization: WeightNormalization::Probability,
        })
    }

    /// Probability measure with weight `1/Q` on each row of `points`.
    pub fn uniform(points: Array2<T>) -> Result<Self> {
        let q = points.nrows();
        if q == 0 {
            return Err(Error::InvalidInput("measure needs at least one atom".into()));
        }
        let w = T::one() / T::from_usize_lossy(q);
        Self::probability(points, Array1::from_elem(q, w))
    }

    /// Single unit atom.
    pub fn dirac(point: &[T]) -> Result<Self> {
        let pts =
            Array2::from_shape_vec((1, point.len()), point.to_vec()).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::uniform(pts)
    }

    /// Builds a measure from nested rows.
    pub fn from_rows(rows: &[Vec<T>], weights: &[T], normalization: WeightNormalization) -> Result<Self> {
        let points = rows_to_array(rows)?;
        let weights = Array1::from_vec(weights.to_vec());
        match normalization {
            WeightNormalization::Signed => Self::new(points, weights),
            WeightNormalization::Probability => Self::probability(points, weights),
        }
    }

    pub fn points(&self) -> ArrayView2<'_, T> {
        self.points.view()
    }

    pub fn weights(&self) -> ArrayView1<'_, T> {
        self.weights.view()
    }

    pub fn point(&self, q: usize) -> &[T] {
        self.points.row(q).to_slice().expect("points stored in standard layout")
    }

    pub fn normalization(&self) -> WeightNormalization {
        self.normalization
    }

    pub fn is_probability(&self) -> bool {
        self.normalization == WeightNormalization::Probability
    }

    /// Number of atoms Q.
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    /// Ambient dimension N.
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn weight_sum(&self) -> T {
        self.weights.iter().copied().sum()
    }

    /// Replaces the atom locations; shape must match.
    pub fn set_points(&mut self, points: Array2<T>) -> Result<()> {
        if points.dim() != self.points.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                got: points.len(),
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("atom coordinates".into()));
        }
        self.points = points.as_standard_layout().to_owned();
        Ok(())
    }

    /// Replaces the weights, re-checking probability mode when applicable.
    pub fn set_weights(&mut self, weights: Array1<T>) -> Result<()> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weights".into()));
        }
        if self.is_probability() {
            check_probability(weights.view())?;
        }
        self.weights = weights;
        Ok(())
    }

    pub fn points_rows(&self) -> Vec<Vec<T>> {
        self.points.outer_iter().map(|r| r.to_vec()).collect()
    }

    /// Shifts every atom by `offset`.
    pub fn translated(&self, offset: &[T]) -> Result<Self> {
        if offset.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: offset.len(),
            });
        }
        let mut out = self.clone();
        for mut row in out.points.outer_iter_mut() {
            for (v, o) in row.iter_mut().zip(offset) {
                *v = *v + *o;
            }
        }
        Ok(out)
    }

    /// Concatenation `scale_self · self + scale_other · other` as a signed measure.
    pub fn combined(&self, other: &DiscreteMeasure<T>, scale_self: T, scale_other: T) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let points = ndarray::concatenate(Axis(0), &[self.points.view(), other.points.view()])
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let weights: Array1<T> = self
            .weights
            .iter()
            .map(|w| *w * scale_self)
            .chain(other.weights.iter().map(|w| *w * scale_other))
            .collect();
        Self::new(points.as_standard_layout().to_owned(), weights)
    }
}

fn validate_atoms<T: Scalar>(points: &Array2<T>, weights: &Array1<T>) -> Result<()> {
    if points.nrows() == 0 {
        return Err(Error::InvalidInput("measure needs at least one atom".into()));
    }
    if points.ncols() == 0 {
        return Err(Error::InvalidInput("points must have dimension >= 1".into()));
    }
    if weights.len() != points.nrows() {
        return Err(Error::DimensionMismatch {
            expected: points.nrows(),
            got: weights.len(),
        });
    }
    if points.iter().chain(weights.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("measure atoms or weights".into()));
    }
    Ok(())
}

fn check_probability<T: Scalar>(weights: ArrayView1<'_, T>) -> Result<()> {
    if let Some(w) = weights.iter().find(|w| **w < T::zero()) {
        return Err(Error::InvalidInput(format!(
            "probability weights must be >= 0, got {w}"
        )));
    }
    let sum: T = weights.iter().copied().sum();
    if (sum.as_f64() - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(Error::InvalidInput(format!(
            "probability weights sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

pub(crate) fn rows_to_array<T: Scalar>(rows: &[Vec<T>]) -> Result<Array2<T>> {
    let n = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput("ragged point rows".into()));
    }
    let flat: Vec<T> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), n), flat).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// One isotropic component `mixture_weight · N(mean, σ² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent<T> {
    pub mean: Vec<T>,
    pub sigma: T,
    pub mixture_weight: T,
}

/// Measure to be quantized.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetMeasure<T> {
    Empirical { data: Array2<T>, labels: Option<Vec<i64>> },
    GaussianMixture { components: Vec<GaussianComponent<T>> },
    Atomic(DiscreteMeasure<T>),
}

impl<T: Scalar> TargetMeasure<T> {
    pub fn empirical(data: Array2<T>, labels: Option<Vec<i64>>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput("empirical dataset must be non-empty".into()));
        }
        if let Some(l) = &labels {
            if l.len() != data.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: data.nrows(),
                    got: l.len(),
                });
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset".into()));
        }
        Ok(TargetMeasure::Empirical {
            data: data.as_standard_layout().to_owned(),
            labels,
        })
    }

    pub fn gaussian_mixture(components: Vec<GaussianComponent<T>>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidInput("mixture needs at least one component".into()))?;
        let n = first.mean.len();
        if n == 0 {
            return Err(Error::InvalidInput("mixture mean must have dimension >= 1".into()));
        }
        let mut total = 0.0;
        for c in &components {
            if c.mean.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.mean.len(),
                });
            }
            if !(c.sigma > T::zero()) || !c.sigma.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "component sigma must be > 0, got {}",
                    c.sigma
                )));
            }
            if !(c.mixture_weight >= T::zero()) {
                return Err(Error::InvalidInput("mixture weights must be >= 0".into()));
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("component mean".into()));
            }
            total += c.mixture_weight.as_f64();
        }
        if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(TargetMeasure::GaussianMixture { components })
    }

    /// Single isotropic normal `N(mean, σ² I)`.
    pub fn gaussian(mean: Vec<T>, sigma: T) -> Result<Self> {
        Self::gaussian_mixture(vec![GaussianComponent {
            mean,
            sigma,
            mixture_weight: T::one(),
        }])
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetMeasure::Empirical { data, .. } => data.ncols(),
            TargetMeasure::GaussianMixture { components } => components[0].mean.len(),
            TargetMeasure::Atomic(m) => m.dim(),
        }
    }

    pub fn total_mass(&self) -> T {
        match self {
            TargetMeasure::Atomic(m) => m.weight_sum(),
            _ => T::one(),
        }
    }

    pub fn labels(&self) -> Option<&[i64]> {
        match self {
            TargetMeasure::Empirical { labels, .. } => labels.as_deref(),
            _ => None,
        }
    }

    /// Exact atomic representation when one exists (empirical data as
    /// uniform atoms, atomic targets as themselves).
    pub fn as_atoms(&self) -> Option<DiscreteMeasure<T>> {
        match self {
            TargetMeasure::Empirical { data, .. } => DiscreteMeasure::uniform(data.clone()).ok(),
            TargetMeasure::Atomic(m) => Some(m.clone()),
            TargetMeasure::GaussianMixture { .. } => None,
        }
    }

    /// `n` i.i.d. draws, reproducible for a given `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Array2<T>> {
        let mut rng = seeded_rng(seed);
        self.sample_with(n, &mut rng)
    }

    /// `n` i.i.d. draws from a caller-owned generator.
    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Array2<T>> {
        if n == 0 {
            return Err(Error::InvalidInput("sample size must be >= 1".into()));
        }
        let dim = self.dim();
        let mut out = Array2::<T>::zeros((n, dim));
        match self {
            TargetMeasure::Empirical { data, .. } => {
                let m = data.nrows();
                for mut row in out.outer_iter_mut() {
                    let i = rng.random_range(0..m);
                    row.assign(&data.row(i));
                }
            }
            TargetMeasure::GaussianMixture { components } => {
                let cumulative = cumulative_weights(components.iter().map(|c| c.mixture_weight.as_f64()));
                for mut row in out.outer_iter_mut() {
                    let c = &components[pick(&cumulative, rng)];
                    for (v, mu) in row.iter_mut().zip(&c.mean) {
                        let z: f64 = rng.sample(StandardNormal);
                        *v = *mu + c.sigma * T::lit(z);
                    }
                }
            }
            TargetMeasure::Atomic(m) => {
                if let Some(w) = m.weights().iter().find(|w| **w < T::zero()) {
                    return Err(Error::SignedMeasureSampling(w.as_f64()));
                }
                let cumulative = cumulative_weights(m.weights().iter().map(|w| w.as_f64()));
                for mut row in out.outer_iter_mut() {
                    row.assign(&m.points().row(pick(&cumulative, rng)));
                }
            }
        }
        Ok(out)
    }
}

fn cumulative_weights(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    let total = acc;
    for v in &mut out {
        *v /= total;
    }
    out
}

fn pick<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cumulative.iter().position(|c| u < *c).unwrap_or(cumulative.len() - 1)
}

/// Brownian path whose increments are the coordinates of `point`, scaled
/// by `1/√N` so a standard normal input gives a path on `[0, 1]` sampled at
/// `j/N`. The output has `N + 1` entries and starts at 0.
pub fn brownian_path<T: Scalar>(point: &[T]) -> Vec<T> {
    let n = point.len();
    let mut path = Vec::with_capacity(n + 1);
    path.push(T::zero());
    if n == 0 {
        return path;
    }
    let scale = T::one() / T::from_usize_lossy(n).sqrt();
    let mut acc = T::zero();
    for x in point {
        acc = acc + *x;
        path.push(acc * scale);
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn probability_mode_is_enforced() {
        assert!(DiscreteMeasure::probability(array![[0.0], [1.0]], array![0.5, 0.6]).is_err());
        assert!(DiscreteMeasure::probability(array![[0.0], [1.0]], array![1.5, -0.5]).is_err());
        let mut m = DiscreteMeasure::uniform(array![[0.0], [1.0]]).unwrap();
        assert_eq!(m.weight_sum(), 1.0);
        assert!(m.set_weights(array![0.2, 0.2]).is_err());
        m.set_weights(array![0.25, 0.75]).unwrap();
        assert_eq!(m.weight_sum(), 1.0);
    }

    #[test]
    fn signed_weights_kept_verbatim() {
        let m = DiscreteMeasure::new(array![[0.0], [1.0]], array![2.0, -0.5]).unwrap();
        assert_eq!(m.weight_sum(), 1.5);
        assert!(DiscreteMeasure::new(array![[f64::NAN]], array![1.0]).is_err());
        assert!(DiscreteMeasure::new(Array2::<f64>::zeros((0, 1)), array![]).is_err());
    }

    #[test]
    fn single_atom_sampling() {
        let t = TargetMeasure::Atomic(DiscreteMeasure::dirac(&[0.0]).unwrap());
        let s = t.sample(5, 3).unwrap();
        assert_eq!(s, Array2::<f64>::zeros((5, 1)));
    }

    #[test]
    fn empirical_sampling_is_uniform() {
        let t = TargetMeasure::empirical(array![[0.0], [1.0]], None).unwrap();
        let n = 10_000;
        let s = t.sample(n, 11).unwrap();
        let ones = s.iter().filter(|v| **v == 1.0).count() as f64 / n as f64;
        assert!((ones - 0.5).abs() <= 3.0 * (0.25f64 / n as f64).sqrt());
    }

    #[test]
    fn gaussian_sampling_mean() {
        let t = TargetMeasure::gaussian(vec![0.0], 1.0).unwrap();
        let n = 100_000;
        let s = t.sample(n, 5).unwrap();
        let mean = s.sum() / n as f64;
        assert!(mean.abs() <= 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn sampling_is_reproducible() {
        let t = TargetMeasure::gaussian(vec![0.0, 1.0], 0.5).unwrap();
        assert_eq!(t.sample(100, 42).unwrap(), t.sample(100, 42).unwrap());
        assert_ne!(t.sample(100, 42).unwrap(), t.sample(100, 43).unwrap());
    }

    #[test]
    fn signed_atomic_cannot_be_sampled() {
        let m = DiscreteMeasure::new(array![[0.0], [1.0]], array![2.0, -1.0]).unwrap();
        let t = TargetMeasure::Atomic(m);
        assert!(matches!(t.sample(3, 0), Err(Error::SignedMeasureSampling(_))));
    }

    #[test]
    fn mixture_validation() {
        let c = |w: f64| GaussianComponent {
            mean: vec![0.0],
            sigma: 1.0,
            mixture_weight: w,
        };
        assert!(TargetMeasure::gaussian_mixture(vec![c(0.5), c(0.4)]).is_err());
        assert!(TargetMeasure::gaussian_mixture(vec![c(0.5), c(0.5)]).is_ok());
        assert!(TargetMeasure::gaussian(vec![0.0], 0.0).is_err());
        assert!(TargetMeasure::empirical(array![[0.0]], Some(vec![1, 2])).is_err());
    }

    #[test]
    fn brownian_paths() {
        assert_eq!(brownian_path(&[0.0, 0.0, 0.0]), vec![0.0; 4]);
        let p = brownian_path(&[1.0, 1.0]);
        assert_eq!(p[0], 0.0);
        assert_relative_eq!(p[1], std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-15);
        assert_relative_eq!(p[2], std::f64::consts::SQRT_2, max_relative = 1e-15);
    }

    #[test]
    fn brownian_endpoint_variance() {
        let t = TargetMeasure::gaussian(vec![0.0; 64], 1.0).unwrap();
        let s = t.sample(10_000, 99).unwrap();
        let ends: Vec<f64> = s
            .outer_iter()
            .map(|r| *brownian_path(r.as_slice().unwrap()).last().unwrap())
            .collect();
        let mean = ends.iter().sum::<f64>() / ends.len() as f64;
        let var = ends.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (ends.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }
}
