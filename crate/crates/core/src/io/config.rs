use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::kernels::{KernelSpec, FAMILY_HUBER_ENERGY};
use crate::measures::{DiscreteMeasure, GaussianComponent, TargetMeasure};
use crate::optimizers::{Method, OptimizerConfig, WeightMode};

use super::data::{load_csv, load_idx, standardize};

/// Flat key-value run description, read from TOML. Every key is optional
/// except `seed`; command-line flags override file values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Option<String>,

    pub kernel: Option<String>,
    pub r: Option<f64>,
    pub a: Option<f64>,
    pub sigma: Option<f64>,
    pub lambda: Option<f64>,

    #[serde(rename = "Q")]
    pub q: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub lr_final: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub iters: Option<usize>,
    pub seed: Option<u64>,
    pub unbiased_loss: Option<bool>,
    pub flow_time: Option<f64>,
    pub flow_step: Option<f64>,
    pub eps_tol: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub mass: Option<f64>,
    pub de_population_factor: Option<usize>,
    pub de_tol: Option<f64>,
    /// `rand1bin` (default) or `best1bin`.
    pub de_strategy: Option<String>,

    /// `csv`, `idx`, `gaussian`, `gaussian-mixture`, `grid-mixture`,
    /// `atomic` or `uniform` (exact1d only).
    pub target: Option<String>,
    pub csv: Option<PathBuf>,
    pub label_col: Option<usize>,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub limit: Option<usize>,
    pub standardize: Option<bool>,
    pub mean: Option<Vec<f64>>,
    pub means: Option<Vec<Vec<f64>>>,
    pub target_sigma: Option<f64>,
    pub mixture_weights: Option<Vec<f64>>,
    pub grid: Option<Vec<usize>>,
    pub spacing: Option<f64>,
    pub atoms: Option<Vec<Vec<f64>>>,
    pub atom_weights: Option<Vec<f64>>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,

    pub estimator: Option<String>,
    #[serde(rename = "J")]
    pub j: Option<usize>,
    pub quantizer: Option<PathBuf>,

    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative data paths are resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.csv,
            &mut cfg.idx_images,
            &mut cfg.idx_labels,
            &mut cfg.quantizer,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("seed is required (no wall-clock seeding)".into()))
    }

    pub fn q(&self) -> Result<usize> {
        match self.q {
            Some(q) if q >= 1 => Ok(q),
            Some(q) => Err(Error::Config(format!("Q must be >= 1, got {q}"))),
            None => Err(Error::Config("Q is required".into())),
        }
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec<f64>> {
        let d = KernelSpec::<f64>::default();
        let (r0, a0) = match d {
            KernelSpec::HuberEnergy { r, a } => (r, a),
            _ => unreachable!(),
        };
        KernelSpec::from_parts(
            self.kernel.as_deref().unwrap_or(FAMILY_HUBER_ENERGY),
            self.r.unwrap_or(r0),
            self.a.unwrap_or(a0),
            self.sigma.unwrap_or(1.0),
            self.lambda.unwrap_or(0.0),
        )
    }

    /// Whether any kernel key was set explicitly.
    pub fn kernel_overridden(&self) -> bool {
        self.kernel.is_some() || self.r.is_some() || self.a.is_some() || self.sigma.is_some() || self.lambda.is_some()
    }

    pub fn method(&self) -> Result<Method> {
        self.method.as_deref().unwrap_or("shemq").parse()
    }

    pub fn estimator(&self) -> Result<EstimatorKind> {
        self.estimator.as_deref().unwrap_or("blue-two-sample").parse()
    }

    pub fn optimizer_config(&self) -> Result<OptimizerConfig<f64>> {
        let method = self.method()?;
        let d = OptimizerConfig::<f64>::default();
        let weight_mode = if method == Method::DifferentialEvolution {
            WeightMode::OptimizeNonnegative
        } else if self.weights.is_some() {
            WeightMode::FixedGiven
        } else {
            WeightMode::FixedUniform
        };
        let cfg = OptimizerConfig {
            method,
            batch_size: self.batch.unwrap_or(d.batch_size),
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            lr_final: self.lr_final,
            adam_beta1: self.beta1.unwrap_or(d.adam_beta1),
            adam_beta2: self.beta2.unwrap_or(d.adam_beta2),
            max_iterations: self.iters.unwrap_or(d.max_iterations),
            flow_total_time: self.flow_time.unwrap_or(d.flow_total_time),
            flow_step: self.flow_step.or(d.flow_step),
            eps_tol: self.eps_tol.unwrap_or(d.eps_tol),
            seed: self.seed()?,
            weight_mode,
            weights: self.weights.clone(),
            unbiased_loss: self.unbiased_loss.unwrap_or(false),
            de_population_factor: self.de_population_factor.unwrap_or(d.de_population_factor),
            de_tol: self.de_tol.unwrap_or(d.de_tol),
            de_strategy: match &self.de_strategy {
                Some(s) => s.parse()?,
                None => d.de_strategy,
            },
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn require<'a, V>(&self, v: &'a Option<V>, key: &str) -> Result<&'a V> {
        v.as_ref()
            .ok_or_else(|| Error::Config(format!("target '{}' needs key '{key}'", self.target_kind())))
    }

    pub fn target_kind(&self) -> &str {
        self.target.as_deref().unwrap_or("")
    }

    /// Builds the target measure, reading any referenced files.
    pub fn target_measure(&self) -> Result<TargetMeasure<f64>> {
        let target = match self.target_kind() {
            "csv" => {
                let path = self.require(&self.csv, "csv")?;
                check_exists(path)?;
                load_csv(path, self.label_col)?
            }
            "idx" => {
                let images = self.require(&self.idx_images, "idx_images")?;
                let labels = self.require(&self.idx_labels, "idx_labels")?;
                check_exists(images)?;
                check_exists(labels)?;
                load_idx(images, labels)?
            }
            "gaussian" => {
                let mean = self.require(&self.mean, "mean")?;
                TargetMeasure::gaussian(mean.clone(), self.target_sigma.unwrap_or(1.0))?
            }
            "gaussian-mixture" => {
                let means = self.require(&self.means, "means")?;
                self.mixture(means.clone())?
            }
            "grid-mixture" => {
                let grid = self.require(&self.grid, "grid")?;
                let spacing = self.spacing.unwrap_or(1.0);
                let means = grid_centers(grid, spacing)?;
                self.mixture(means)?
            }
            "atomic" => {
                let atoms = self.require(&self.atoms, "atoms")?;
                let measure = match &self.atom_weights {
                    Some(w) => {
                        DiscreteMeasure::new(crate::measures::rows_to_array(atoms)?, ndarray::Array1::from(w.clone()))?
                    }
                    None => DiscreteMeasure::uniform(crate::measures::rows_to_array(atoms)?)?,
                };
                TargetMeasure::Atomic(measure)
            }
            "uniform" => {
                return Err(Error::Config("target 'uniform' is only available to exact1d".into()));
            }
            "" => return Err(Error::Config("target is required".into())),
            other => return Err(Error::Config(format!("unknown target '{other}'"))),
        };
        self.postprocess(target)
    }

    fn mixture(&self, means: Vec<Vec<f64>>) -> Result<TargetMeasure<f64>> {
        let k = means.len();
        let weights = match &self.mixture_weights {
            Some(w) if w.len() != k => return Err(Error::Config(format!("{k} mixture means but {} weights", w.len()))),
            Some(w) => w.clone(),
            None => vec![1.0 / k as f64; k],
        };
        let sigma = self.target_sigma.unwrap_or(1.0);
        TargetMeasure::gaussian_mixture(
            means
                .into_iter()
                .zip(weights)
                .map(|(mean, mixture_weight)| GaussianComponent {
                    mean,
                    sigma,
                    mixture_weight,
                })
                .collect(),
        )
    }

    fn postprocess(&self, target: TargetMeasure<f64>) -> Result<TargetMeasure<f64>> {
        match target {
            TargetMeasure::Empirical { data, labels } => {
                let (data, labels) = match self.limit {
                    Some(n) if n < data.nrows() => (
                        data.slice(ndarray::s![..n, ..]).to_owned(),
                        labels.map(|l| l[..n].to_vec()),
                    ),
                    _ => (data, labels),
                };
                let data = if self.standardize.unwrap_or(false) {
                    standardize(data.view())?
                } else {
                    data
                };
                TargetMeasure::empirical(data, labels)
            }
            other => {
                if self.standardize.unwrap_or(false) {
                    return Err(Error::Config("standardize applies to dataset targets only".into()));
                }
                Ok(other)
            }
        }
    }
}

fn check_exists(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::Config(format!("file not found: {}", path.display())));
    }
    Ok(())
}

/// Centers of a regular grid with the given number of nodes per axis.
pub fn grid_centers(grid: &[usize], spacing: f64) -> Result<Vec<Vec<f64>>> {
    if grid.is_empty() || grid.contains(&0) {
        return Err(Error::Config("grid needs positive sizes".into()));
    }
    let mut centers = vec![Vec::new()];
    for &n in grid {
        centers = centers
            .into_iter()
            .flat_map(|c| {
                (0..n).map(move |i| {
                    let mut next = c.clone();
                    next.push(i as f64 * spacing);
                    next
                })
            })
            .collect();
    }
    Ok(centers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_toml() {
        let cfg = RunConfig::from_toml_str(
            "method = \"shemq\"\nQ = 36\nseed = 4\ntarget = \"grid-mixture\"\ngrid = [3, 4]\ntarget_sigma = 0.15\n",
        )
        .unwrap();
        assert_eq!(cfg.q().unwrap(), 36);
        match cfg.target_measure().unwrap() {
            TargetMeasure::GaussianMixture { components } => assert_eq!(components.len(), 12),
            _ => panic!("wrong target"),
        }
        assert_eq!(cfg.optimizer_config().unwrap().seed, 4);
    }

    #[test]
    fn rejects_unknown_keys_and_missing_seed() {
        assert!(RunConfig::from_toml_str("bogus = 1\n").is_err());
        let cfg = RunConfig::from_toml_str("Q = 2\n").unwrap();
        assert!(cfg.optimizer_config().is_err());
    }

    #[test]
    fn grid_layout() {
        let c = grid_centers(&[2, 3], 1.0).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(c[0], vec![0.0, 0.0]);
        assert_eq!(c[5], vec![1.0, 2.0]);
    }
}
