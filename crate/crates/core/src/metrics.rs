//! Clustering and diversity metrics used to evaluate quantizers.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::hash::Hash;

use itertools::Itertools;
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::sq_dist;
use crate::measures::seeded_rng;
use crate::scalar::Scalar;

const KMEANS_RESTARTS: u64 = 10;
const KMEANS_MAX_ITERS: usize = 300;
const KMEANS_MOVE_TOL: f64 = 1e-9;

fn row<T: Scalar>(m: &ArrayView2<'_, T>, i: usize) -> Vec<T> {
    m.row(i).to_vec()
}

fn check_dims<T: Scalar>(points: &ArrayView2<'_, T>, data: &ArrayView2<'_, T>) -> Result<()> {
    if points.nrows() == 0 {
        return Err(Error::InvalidInput("need at least one point".into()));
    }
    if points.ncols() != data.ncols() {
        return Err(Error::DimensionMismatch {
            expected: points.ncols(),
            got: data.ncols(),
        });
    }
    Ok(())
}

fn nearest<T: Scalar>(points: &[Vec<T>], x: &[T]) -> (usize, T) {
    let mut best = (0, sq_dist(&points[0], x));
    for (i, p) in points.iter().enumerate().skip(1) {
        let d = sq_dist(p, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Index of the nearest row of `points` for every row of `data`; ties go
/// to the lowest index.
pub fn assign_nearest<T: Scalar>(points: ArrayView2<'_, T>, data: ArrayView2<'_, T>) -> Result<Vec<usize>> {
    check_dims(&points, &data)?;
    let pts: Vec<Vec<T>> = (0..points.nrows()).map(|i| row(&points, i)).collect();
    Ok((0..data.nrows())
        .into_par_iter()
        .map(|i| nearest(&pts, &row(&data, i)).0)
        .collect())
}

/// Label of the data row nearest to each point.
pub fn nearest_labels<T: Scalar, L: Clone>(
    points: ArrayView2<'_, T>,
    data: ArrayView2<'_, T>,
    labels: &[L],
) -> Result<Vec<L>> {
    if labels.len() != data.nrows() {
        return Err(Error::DimensionMismatch {
            expected: data.nrows(),
            got: labels.len(),
        });
    }
    if data.nrows() == 0 {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let idx = assign_nearest(data, points)?;
    Ok(idx.into_iter().map(|i| labels[i].clone()).collect())
}

/// Counts with one row per distinct class (ascending) and one column per
/// cluster index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<i64>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn transpose(&self) -> Vec<Vec<usize>> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols).map(|c| self.counts.iter().map(|r| r[c]).collect()).collect()
    }

    /// Whether some relabeling of the clusters turns `counts` into `expected`.
    pub fn equals_up_to_cluster_permutation(&self, expected: &[Vec<usize>]) -> bool {
        if expected.len() != self.counts.len() {
            return false;
        }
        let k = self.counts.first().map_or(0, Vec::len);
        if expected.iter().any(|r| r.len() != k) {
            return false;
        }
        (0..k).permutations(k).any(|perm| {
            self.counts
                .iter()
                .zip(expected)
                .all(|(got, want)| perm.iter().enumerate().all(|(c, &p)| got[p] == want[c]))
        })
    }
}

pub fn confusion(classes: &[i64], clusters: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if classes.len() != clusters.len() {
        return Err(Error::InvalidInput(format!(
            "label lengths differ: {} vs {}",
            classes.len(),
            clusters.len()
        )));
    }
    if let Some(c) = clusters.iter().find(|&&c| c >= k) {
        return Err(Error::InvalidInput(format!(
            "cluster index {c} out of range for K = {k}"
        )));
    }
    let distinct: Vec<i64> = classes.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let pos: HashMap<i64, usize> = distinct.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let mut counts = vec![vec![0; k]; distinct.len()];
    for (c, &k) in classes.iter().zip(clusters) {
        counts[pos[c]][k] += 1;
    }
    Ok(ConfusionMatrix {
        classes: distinct,
        counts,
    })
}

fn comb2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index. Two trivial partitions (both a single cluster or
/// both all singletons) score 1.
pub fn adjusted_rand<A: Hash + Eq, B: Hash + Eq>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "label lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut joint: HashMap<(&A, &B), usize> = HashMap::new();
    let mut rows: HashMap<&A, usize> = HashMap::new();
    let mut cols: HashMap<&B, usize> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = joint.values().map(|&n| comb2(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| comb2(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| comb2(n)).sum();
    let total = comb2(a.len());
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max_index = (sum_a + sum_b) / 2.0;
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

/// Distinct value estimation: number of distinct labels.
pub fn dve<L: Hash + Eq>(labels: &[L]) -> usize {
    labels.iter().collect::<HashSet<_>>().len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentResult {
    pub assignment: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub ari: f64,
}

impl AssignmentResult {
    /// Assigns every data row to its nearest point and compares the result
    /// with the class labels.
    pub fn evaluate<T: Scalar>(points: ArrayView2<'_, T>, data: ArrayView2<'_, T>, classes: &[i64]) -> Result<Self> {
        let assignment = assign_nearest(points, data)?;
        let confusion = confusion(classes, &assignment, points.nrows())?;
        let ari = adjusted_rand(classes, &assignment)?;
        Ok(AssignmentResult {
            assignment,
            confusion,
            ari,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<T> {
    pub centroids: Array2<T>,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares of the returned centroids.
    pub inertia: T,
    /// Objective before each centroid update of the winning restart.
    pub history: Vec<T>,
}

/// Lloyd k-means with k-means++ seeding; best of ten restarts.
pub fn kmeans<T: Scalar>(data: ArrayView2<'_, T>, k: usize, seed: u64) -> Result<KMeansResult<T>> {
    let m = data.nrows();
    if k == 0 || k > m {
        return Err(Error::InvalidInput(format!("need 1 <= K <= M, got K = {k}, M = {m}")));
    }
    let rows: Vec<Vec<T>> = (0..m).map(|i| row(&data, i)).collect();
    let runs: Vec<KMeansResult<T>> = (0..KMEANS_RESTARTS)
        .into_par_iter()
        .map(|r| lloyd(&rows, k, seed.wrapping_add(r)))
        .collect();
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.inertia < runs[best].inertia {
            best = i;
        }
    }
    Ok(runs.into_iter().nth(best).expect("at least one restart"))
}

fn plus_plus<T: Scalar>(rows: &[Vec<T>], k: usize, seed: u64) -> Vec<Vec<T>> {
    let mut rng = seeded_rng(seed);
    let mut centers = vec![rows[rng.random_range(0..rows.len())].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|x| sq_dist(x, &centers[0]).as_f64()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = rows.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..rows.len())
        };
        centers.push(rows[pick].clone());
        for (d, x) in d2.iter_mut().zip(rows) {
            *d = d.min(sq_dist(x, &centers[centers.len() - 1]).as_f64());
        }
    }
    centers
}

fn lloyd<T: Scalar>(rows: &[Vec<T>], k: usize, seed: u64) -> KMeansResult<T> {
    let n = rows[0].len();
    let mut centers = plus_plus(rows, k, seed);
    let mut history: Vec<T> = Vec::new();
    let mut assignment = vec![0; rows.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut objective = T::zero();
        let mut dists = Vec::with_capacity(rows.len());
        for (i, x) in rows.iter().enumerate() {
            let (c, d) = nearest(&centers, x);
            assignment[i] = c;
            objective = objective + d;
            dists.push(d);
        }
        if let Some(prev) = history.last() {
            assert!(
                objective <= *prev + T::lit(1e-9) * (T::one() + prev.abs()),
                "k-means objective increased from {prev} to {objective}"
            );
        }
        history.push(objective);

        let mut sums = vec![vec![T::zero(); n]; k];
        let mut counts = vec![0usize; k];
        for (x, &c) in rows.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(x) {
                *s = *s + *v;
            }
        }
        let mut moved = T::zero();
        for c in 0..k {
            let next = if counts[c] == 0 {
                // reseed at the point farthest from its centroid
                let far = (0..rows.len())
                    .max_by(|&a, &b| {
                        dists[a]
                            .partial_cmp(&dists[b])
                            .expect("finite distances")
                            .then(b.cmp(&a))
                    })
                    .expect("nonempty data");
                dists[far] = T::zero();
                rows[far].clone()
            } else {
                let cnt = T::from_usize_lossy(counts[c]);
                sums[c].iter().map(|s| *s / cnt).collect()
            };
            moved = moved.max(sq_dist(&next, &centers[c]).sqrt());
            centers[c] = next;
        }
        if moved < T::lit(KMEANS_MOVE_TOL) {
            break;
        }
    }
    let mut inertia = T::zero();
    for (i, x) in rows.iter().enumerate() {
        let (c, d) = nearest(&centers, x);
        assignment[i] = c;
        inertia = inertia + d;
    }
    KMeansResult {
        centroids: Array2::from_shape_vec((k, n), centers.into_iter().flatten().collect()).expect("centroid shape"),
        assignment,
        inertia,
        history,
    }
}
