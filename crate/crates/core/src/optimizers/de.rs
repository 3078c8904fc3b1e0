use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;

use super::{DeStrategy, IterationRecord, OptimizerConfig, RunRecord, RunStatus, WeightMode};
use crate::distance::{check_equal_mass, cross_term, self_term};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::measures::{seeded_rng, DiscreteMeasure, TargetMeasure};
use crate::scalar::Scalar;

/// Sample size used to stand in for a Gaussian-mixture target, which has
/// no exact atomic form.
const MIXTURE_PROXY_SAMPLES: usize = 2000;

/// Clamps negative weights to zero and rescales to `mass`; an all-zero
/// vector becomes uniform.
pub fn project_weights<T: Scalar>(weights: &mut [T], mass: T) {
    for w in weights.iter_mut() {
        if *w < T::zero() || !w.is_finite() {
            *w = T::zero();
        }
    }
    let sum: T = weights.iter().copied().sum();
    if sum > T::zero() {
        for w in weights.iter_mut() {
            *w = *w * mass / sum;
        }
    } else {
        let u = mass / T::from_usize_lossy(weights.len());
        weights.iter_mut().for_each(|w| *w = u);
    }
}

/// Sorts the atoms of a genome by their first coordinate.
fn canonical_order<T: Scalar>(genome: &mut [T], q: usize, n: usize) {
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| genome[a * n].partial_cmp(&genome[b * n]).expect("finite coordinates"));
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return;
    }
    let old = genome.to_vec();
    for (dst, &src) in order.iter().enumerate() {
        genome[dst * n..(dst + 1) * n].copy_from_slice(&old[src * n..(src + 1) * n]);
        genome[q * n + dst] = old[q * n + src];
    }
}

struct Objective<'a, T> {
    kernel: &'a KernelSpec<T>,
    target: DiscreteMeasure<T>,
    target_self: T,
    q: usize,
    n: usize,
}

impl<T: Scalar> Objective<'_, T> {
    fn eval(&self, genome: &[T]) -> T {
        let (coords, weights) = genome.split_at(self.q * self.n);
        let pts = ndarray::ArrayView2::from_shape((self.q, self.n), coords).expect("genome shape");
        let w = ndarray::ArrayView1::from(weights);
        cross_term(self.kernel, pts, w, self.target.points(), self.target.weights())
            - self_term(self.kernel, pts, w)
            - self.target_self
    }
}

/// Derivative-free joint optimization of atom locations and nonnegative
/// weights (`Σα = mass`) by differential evolution with binomial crossover
/// (DE/rand/1/bin by default, see [`DeStrategy`]).
///
/// The genome is the `Q·N` point coordinates followed by the `Q` weights.
/// Each atom starts at a randomly drawn target atom; coordinates are clipped
/// to the bounding box of the target atoms and weights are projected after
/// every mutation. Atoms are kept sorted by their first coordinate.
/// Population size is `de_population_factor · dim`; each generation is one
/// trajectory entry holding the best loss so far.
pub fn differential_evolution<T: Scalar>(
    kernel: &KernelSpec<T>,
    target: &TargetMeasure<T>,
    q: usize,
    config: &OptimizerConfig<T>,
    mass: T,
) -> Result<RunRecord<T>> {
    kernel.validate()?;
    config.validate()?;
    if config.weight_mode != WeightMode::OptimizeNonnegative {
        return Err(Error::Config(
            "differential evolution requires weight mode optimize-nonnegative".into(),
        ));
    }
    if q == 0 {
        return Err(Error::InvalidInput("Q must be >= 1".into()));
    }
    if !(mass > T::zero()) || !mass.is_finite() {
        return Err(Error::InvalidInput(format!(
            "mass must be > 0 for nonnegative weights, got {mass}"
        )));
    }
    let start = Instant::now();
    let mut rng = seeded_rng(config.seed);
    let atoms = match target.as_atoms() {
        Some(a) => a,
        None => DiscreteMeasure::uniform(target.sample_with(MIXTURE_PROXY_SAMPLES, &mut rng)?)?,
    };
    check_equal_mass(mass, atoms.weight_sum())?;
    let n = atoms.dim();
    let objective = Objective {
        kernel,
        target_self: self_term(kernel, atoms.points(), atoms.weights()),
        target: atoms,
        q,
        n,
    };

    let lower: Vec<T> = (0..n)
        .map(|d| {
            objective
                .target
                .points()
                .column(d)
                .iter()
                .copied()
                .fold(T::infinity(), T::min)
        })
        .collect();
    let upper: Vec<T> = (0..n)
        .map(|d| {
            objective
                .target
                .points()
                .column(d)
                .iter()
                .copied()
                .fold(T::neg_infinity(), T::max)
        })
        .collect();
    let dim = q * n + q;
    let pop_size = (config.de_population_factor * dim).max(4);
    let (f, cr) = (config.de_mutation, config.de_crossover);

    let clip = |genome: &mut [T]| {
        for (i, v) in genome[..q * n].iter_mut().enumerate() {
            let d = i % n;
            *v = v.max(lower[d]).min(upper[d]);
        }
        project_weights(&mut genome[q * n..], mass);
        canonical_order(genome, q, n);
    };

    let mut population: Vec<Vec<T>> = (0..pop_size)
        .map(|_| {
            let m = objective.target.len();
            let mut g: Vec<T> = Vec::with_capacity(dim);
            for _ in 0..q {
                g.extend_from_slice(objective.target.point(rng.random_range(0..m)));
            }
            g.extend((0..q).map(|_| T::lit(rng.random::<f64>())));
            clip(&mut g);
            g
        })
        .collect();
    let mut energies: Vec<T> = population.par_iter().map(|g| objective.eval(g)).collect();

    let best_of = |e: &[T]| -> usize {
        let mut best = 0;
        for (i, v) in e.iter().enumerate() {
            if *v < e[best] {
                best = i;
            }
        }
        best
    };
    let initial_loss = energies[best_of(&energies)];
    let mut trajectory = Vec::with_capacity(config.max_iterations);
    let mut status = RunStatus::Completed;

    for generation in 0..config.max_iterations {
        let best_idx = best_of(&energies);
        let trials: Vec<Vec<T>> = (0..pop_size)
            .map(|i| {
                let mut pick = || loop {
                    let r = rng.random_range(0..pop_size);
                    if r != i {
                        break r;
                    }
                };
                let r1 = pick();
                let (mut r2, mut r3) = (pick(), pick());
                while r2 == r1 {
                    r2 = pick();
                }
                while r3 == r1 || r3 == r2 {
                    r3 = pick();
                }
                let (base, d1, d2) = match config.de_strategy {
                    DeStrategy::Rand1Bin => (r1, r2, r3),
                    DeStrategy::Best1Bin => (best_idx, r1, r2),
                };
                let forced = rng.random_range(0..dim);
                let mut trial = population[i].clone();
                for k in 0..dim {
                    if k == forced || T::lit(rng.random::<f64>()) < cr {
                        trial[k] = population[base][k] + f * (population[d1][k] - population[d2][k]);
                    }
                }
                clip(&mut trial);
                trial
            })
            .collect();
        let trial_energies: Vec<T> = trials.par_iter().map(|g| objective.eval(g)).collect();
        for (i, (trial, e)) in trials.into_iter().zip(trial_energies).enumerate() {
            if e <= energies[i] {
                population[i] = trial;
                energies[i] = e;
            }
        }
        let best = energies[best_of(&energies)];
        if !best.is_finite() {
            return Err(Error::Divergence {
                iteration: generation,
                last_points: Vec::new(),
                last_weights: Vec::new(),
            });
        }
        trajectory.push(IterationRecord {
            iteration: generation,
            loss: best,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });

        let count = T::from_usize_lossy(pop_size);
        let mean = energies.iter().copied().sum::<T>() / count;
        let var = energies.iter().map(|e| (*e - mean) * (*e - mean)).sum::<T>() / count;
        if var.sqrt() <= config.de_tol * mean.abs() + T::lit(1e-15) {
            status = RunStatus::Converged;
            break;
        }
    }

    let best = &population[best_of(&energies)];
    let points = Array2::from_shape_vec((q, n), best[..q * n].to_vec()).expect("genome shape");
    let weights = Array1::from_vec(best[q * n..].to_vec());
    let quantizer = DiscreteMeasure::new(points, weights)?;

    Ok(RunRecord {
        trajectory,
        initial_loss,
        quantizer,
        config: config.clone(),
        status,
    })
}
