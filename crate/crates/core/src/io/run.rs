use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::distance::analytic_loss_energy_gaussian;
use crate::error::{Error, Result};
use crate::estimators::{blue_one_sample, blue_two_sample, v_statistic, EstimatorKind};
use crate::kernels::KernelSpec;
use crate::measures::{rows_to_array, seeded_rng, DiscreteMeasure, TargetMeasure};
use crate::metrics::{adjusted_rand, assign_nearest, confusion, dve, nearest_labels};
use crate::optimizers::{
    differential_evolution, exact_quantile_normal, exact_quantile_uniform, gradient_flow, shemq, IterationRecord,
    Method, RunRecord,
};

use super::config::RunConfig;

pub const CONFIG_FILE: &str = "config.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const QUANTIZER_FILE: &str = "quantizer.json";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Quantize,
    Flow,
    Exact1d,
    Estimate,
    Eval,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Quantize => "quantize",
            Command::Flow => "flow",
            Command::Exact1d => "exact1d",
            Command::Estimate => "estimate",
            Command::Eval => "eval",
        }
    }
}

/// On-disk quantizer: one row per atom plus the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerFile {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuantizerFile {
    pub fn from_measure(m: &DiscreteMeasure<f64>) -> Self {
        QuantizerFile {
            points: m.points_rows(),
            weights: m.weights().to_vec(),
        }
    }

    /// Probability measure when the weights allow it, signed otherwise.
    pub fn to_measure(&self) -> Result<DiscreteMeasure<f64>> {
        let points = rows_to_array(&self.points)?;
        let weights = Array1::from(self.weights.clone());
        DiscreteMeasure::probability(points.clone(), weights.clone()).or_else(|_| DiscreteMeasure::new(points, weights))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read quantizer {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Result of one CLI invocation: the JSON summary and the files written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Value,
    pub written: Vec<PathBuf>,
}

struct Artifacts {
    record: Option<RunRecord<f64>>,
    quantizer: Option<DiscreteMeasure<f64>>,
    metrics: Value,
}

/// Executes a command. All inputs are validated and all results computed
/// before anything is written; each file is written to a temporary name and
/// renamed into place.
pub fn run(command: Command, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.seed()?;
    let needs_out = matches!(command, Command::Quantize | Command::Flow | Command::Exact1d);
    if needs_out && cfg.out.is_none() {
        return Err(Error::Config("output directory 'out' is required".into()));
    }
    let start = Instant::now();
    let artifacts = match command {
        Command::Quantize => quantize(cfg, cfg.method()?)?,
        Command::Flow => quantize(cfg, Method::GradientFlow)?,
        Command::Exact1d => quantize(cfg, Method::ExactQuantile1d)?,
        Command::Estimate => estimate(cfg)?,
        Command::Eval => evaluate(cfg)?,
    };
    let mut summary = artifacts.metrics;
    if needs_out {
        summary["elapsed_ms"] = json!(start.elapsed().as_secs_f64() * 1e3);
    }

    let mut written = Vec::new();
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        let echo = json!({
            "command": command.as_str(),
            "config": cfg,
            "optimizer": artifacts.record.as_ref().map(|r| &r.config),
        });
        written.push(write_atomic(
            dir,
            CONFIG_FILE,
            serde_json::to_string_pretty(&echo)?.as_bytes(),
        )?);
        if needs_out {
            let trajectory = artifacts.record.as_ref().map_or(&[][..], |r| &r.trajectory[..]);
            written.push(write_atomic(dir, TRAJECTORY_FILE, &trajectory_csv(trajectory)?)?);
        }
        if let Some(q) = &artifacts.quantizer {
            let text = serde_json::to_string_pretty(&QuantizerFile::from_measure(q))?;
            written.push(write_atomic(dir, QUANTIZER_FILE, text.as_bytes())?);
        }
        written.push(write_atomic(
            dir,
            METRICS_FILE,
            serde_json::to_string_pretty(&summary)?.as_bytes(),
        )?);
    }
    Ok(RunOutcome { summary, written })
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let dest = dir.join(name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, &dest)?;
    Ok(dest)
}

pub fn trajectory_csv(records: &[IterationRecord<f64>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "loss", "wall_ms"])
        .map_err(|e| Error::Format(e.to_string()))?;
    for r in records {
        w.write_record([r.iteration.to_string(), r.loss.to_string(), r.wall_ms.to_string()])
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn energy_only(cfg: &RunConfig, what: &str) -> Result<()> {
    if cfg.kernel_overridden() && cfg.kernel_spec()? != KernelSpec::energy() {
        return Err(Error::UnsupportedParameter(format!(
            "{what} is defined for the energy kernel only (huber-energy, r = 1, a = 0)"
        )));
    }
    Ok(())
}

fn quantize(cfg: &RunConfig, method: Method) -> Result<Artifacts> {
    let q = cfg.q()?;
    let mut opt = cfg.optimizer_config()?;
    opt.method = method;
    let (record, quantizer, target) = match method {
        Method::Shemq | Method::DifferentialEvolution => {
            let kernel = cfg.kernel_spec()?;
            let target = cfg.target_measure()?;
            let record = if method == Method::Shemq {
                shemq(&kernel, &target, q, &opt)?
            } else {
                opt.weight_mode = crate::optimizers::WeightMode::OptimizeNonnegative;
                let mass = cfg.mass.unwrap_or(target.total_mass());
                differential_evolution(&kernel, &target, q, &opt, mass)?
            };
            let quantizer = record.quantizer.clone();
            (Some(record), quantizer, Some(target))
        }
        Method::GradientFlow => {
            energy_only(cfg, "gradient flow")?;
            let target = cfg.target_measure()?;
            let (mean, sigma) = single_gaussian(&target)?;
            let init = DiscreteMeasure::uniform(target.sample(q, opt.seed)?)?;
            let record = gradient_flow(&init, &mean, sigma, &opt)?;
            let quantizer = record.quantizer.clone();
            (Some(record), quantizer, None)
        }
        Method::ExactQuantile1d => {
            energy_only(cfg, "exact 1D quantization")?;
            let (quantizer, loss) = exact1d(cfg, q)?;
            let metrics = json!({
                "method": method.as_str(),
                "loss": loss,
            });
            return Ok(Artifacts {
                record: None,
                quantizer: Some(quantizer),
                metrics,
            });
        }
    };
    let record = record.expect("optimizer record");
    let mut metrics = json!({
        "method": method.as_str(),
        "initial_loss": record.initial_loss,
        "final_loss": record.final_loss(),
        "iterations": record.trajectory.len(),
        "status": record.status,
    });
    if let Some(TargetMeasure::Empirical {
        data,
        labels: Some(labels),
    }) = &target
    {
        let assignment = assign_nearest(quantizer.points(), data.view())?;
        metrics["confusion"] = serde_json::to_value(confusion(labels, &assignment, q)?)?;
        metrics["ari"] = json!(adjusted_rand(labels, &assignment)?);
        metrics["dve"] = json!(dve(&nearest_labels(quantizer.points(), data.view(), labels)?));
    }
    Ok(Artifacts {
        record: Some(record),
        quantizer: Some(quantizer),
        metrics,
    })
}

fn single_gaussian(target: &TargetMeasure<f64>) -> Result<(Vec<f64>, f64)> {
    match target {
        TargetMeasure::GaussianMixture { components } if components.len() == 1 => {
            Ok((components[0].mean.clone(), components[0].sigma))
        }
        _ => Err(Error::Config("this command needs target = \"gaussian\"".into())),
    }
}

fn exact1d(cfg: &RunConfig, j: usize) -> Result<(DiscreteMeasure<f64>, f64)> {
    match cfg.target_kind() {
        "uniform" => {
            let (lo, hi) = (cfg.lo.unwrap_or(0.0), cfg.hi.unwrap_or(1.0));
            let m = exact_quantile_uniform(lo, hi, j)?;
            let loss = uniform_energy_loss(&m, lo, hi);
            Ok((m, loss))
        }
        "gaussian" => {
            let (mean, sigma) = single_gaussian(&cfg.target_measure()?)?;
            if mean.len() != 1 {
                return Err(Error::Config("exact1d needs a one-dimensional target".into()));
            }
            let m = exact_quantile_normal(mean[0], sigma, j)?;
            let loss = analytic_loss_energy_gaussian(&m, &mean, sigma)?;
            Ok((m, loss))
        }
        other => Err(Error::Config(format!(
            "exact1d supports target = \"uniform\" or \"gaussian\", got '{other}'"
        ))),
    }
}

/// Energy distance between an atomic measure and `U[lo, hi]`.
fn uniform_energy_loss(m: &DiscreteMeasure<f64>, lo: f64, hi: f64) -> f64 {
    let len = hi - lo;
    let w = m.weights();
    let xs: Vec<f64> = (0..m.len()).map(|i| m.point(i)[0]).collect();
    let mut cross = 0.0;
    let mut own = 0.0;
    for (i, x) in xs.iter().enumerate() {
        cross += w[i] * ((x - lo).powi(2) + (hi - x).powi(2)) / (2.0 * len);
        for (k, y) in xs.iter().enumerate() {
            own += w[i] * w[k] * (x - y).abs();
        }
    }
    cross - own / 2.0 - len / 6.0
}

fn estimate(cfg: &RunConfig) -> Result<Artifacts> {
    let seed = cfg.seed()?;
    let kernel = cfg.kernel_spec()?;
    let kind = cfg.estimator()?;
    let path = cfg
        .quantizer
        .as_ref()
        .ok_or_else(|| Error::Config("estimate needs 'quantizer' (a quantizer.json path)".into()))?;
    let nu = QuantizerFile::read(path)?.to_measure()?;
    let target = cfg.target_measure()?;
    let j = cfg.j.or(cfg.batch).unwrap_or(64);
    let mut rng = seeded_rng(seed);
    let value = match kind {
        EstimatorKind::BlueOneSample => {
            let zs = target.sample_with(j, &mut rng)?;
            blue_one_sample(&kernel, &nu, zs.view())?
        }
        EstimatorKind::BlueTwoSample | EstimatorKind::VStatistic => {
            let q = cfg.q.unwrap_or(nu.len());
            let xs = TargetMeasure::Atomic(nu).sample_with(q, &mut rng)?;
            let zs = target.sample_with(j, &mut rng)?;
            if kind == EstimatorKind::BlueTwoSample {
                blue_two_sample(&kernel, xs.view(), zs.view())?
            } else {
                v_statistic(&kernel, xs.view(), zs.view())?
            }
        }
    };
    Ok(Artifacts {
        record: None,
        quantizer: None,
        metrics: serde_json::to_value(value.with_seed(seed))?,
    })
}

fn evaluate(cfg: &RunConfig) -> Result<Artifacts> {
    let path = cfg
        .quantizer
        .as_ref()
        .ok_or_else(|| Error::Config("eval needs 'quantizer' (a quantizer.json path)".into()))?;
    let quantizer = QuantizerFile::read(path)?.to_measure()?;
    let (data, labels) = match cfg.target_measure()? {
        TargetMeasure::Empirical {
            data,
            labels: Some(labels),
        } => (data, labels),
        _ => {
            return Err(Error::Config(
                "eval needs a labelled dataset target (csv with label_col, or idx)".into(),
            ))
        }
    };
    let assignment = assign_nearest(quantizer.points(), data.view())?;
    let cm = confusion(&labels, &assignment, quantizer.len())?;
    let metrics = json!({
        "confusion": cm,
        "ari": adjusted_rand(&labels, &assignment)?,
        "dve": dve(&nearest_labels(quantizer.points(), data.view(), &labels)?),
    });
    Ok(Artifacts {
        record: None,
        quantizer: None,
        metrics,
    })
}
