//! Lloyd's k-means with k-means++ seeding over row-major point matrices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Stop once no centroid moves by more than this squared distance.
    pub tol: f64,
    /// Independent runs; the lowest objective wins.
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-6,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// `k * dim` values, row-major.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares of the final assignment.
    pub objective: f64,
    /// Objective after every assignment step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid (lowest index wins ties) and its distance.
#[inline]
pub fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn objective(data: &[f64], dim: usize, centroids: &[f64]) -> f64 {
    data.chunks_exact(dim)
        .map(|p| nearest(p, centroids, dim).1)
        .sum()
}

fn plus_plus_init<R: Rng>(data: &[f64], dim: usize, k: usize, rng: &mut R) -> Vec<f64> {
    let n = data.len() / dim;
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(point(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(point(i), &centroids[..dim]))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|&d| {
                    acc += d;
                    acc > target
                })
                .unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap_or(n - 1))
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(point(chosen));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(point(i), &centroids[start..]));
        }
    }
    centroids
}

fn lloyd(data: &[f64], dim: usize, k: usize, cfg: &KMeansConfig, seed: u64) -> KMeansFit {
    let n = data.len() / dim;
    let mut rng = rng_from(seed);
    let mut centroids = plus_plus_init(data, dim, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let mut obj = 0.0;
        for (i, p) in data.chunks_exact(dim).enumerate() {
            let (j, d) = nearest(p, &centroids, dim);
            assignments[i] = j;
            dists[i] = d;
            obj += d;
        }
        history.push(obj);

        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        // Reseed each empty cluster with the point farthest from its current
        // centroid, taken from a cluster that keeps at least one member.
        if counts.contains(&0) {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
            let mut candidates = order.into_iter();
            for j in 0..k {
                if counts[j] > 0 {
                    continue;
                }
                if let Some(i) = candidates.by_ref().find(|&i| counts[assignments[i]] > 1) {
                    counts[assignments[i]] -= 1;
                    assignments[i] = j;
                    counts[j] = 1;
                    dists[i] = 0.0;
                }
            }
        }

        let mut sums = vec![0.0f64; k * dim];
        for (p, &a) in data.chunks_exact(dim).zip(&assignments) {
            for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let inv = 1.0 / counts[j] as f64;
            let row = &mut sums[j * dim..(j + 1) * dim];
            row.iter_mut().for_each(|s| *s *= inv);
            shift = shift.max(squared_distance(row, &centroids[j * dim..(j + 1) * dim]));
            centroids[j * dim..(j + 1) * dim].copy_from_slice(row);
        }
        if shift < cfg.tol && !counts.contains(&0) {
            converged = true;
            break;
        }
    }

    let mut obj = 0.0;
    for (i, p) in data.chunks_exact(dim).enumerate() {
        let (j, d) = nearest(p, &centroids, dim);
        assignments[i] = j;
        obj += d;
    }
    history.push(obj);

    KMeansFit {
        centroids,
        assignments,
        objective: obj,
        history,
        iterations,
        converged,
    }
}

/// Clusters `data` (rows of length `dim`) into `k` groups. Requires at least
/// `k` rows. Deterministic given `seed`.
pub fn kmeans(data: &[f64], dim: usize, k: usize, cfg: &KMeansConfig, seed: u64) -> Result<KMeansFit> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::Dimension {
            expected: dim,
            actual: data.len(),
        });
    }
    let n = data.len() / dim;
    if k == 0 || k > n {
        return Err(Error::Range(format!("cannot form {k} clusters from {n} points")));
    }
    let restarts = cfg.restarts.max(1);
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts {
        let fit = lloyd(data, dim, k, cfg, derive_seed(seed, &[r as u64]));
        if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}
