//! Lloyd's k-means with seeded restarts.
//!
//! Restart `r` draws its initial centroids from a ChaCha stream seeded by
//! `(seed, r)`, so results do not depend on how restarts are scheduled
//! across threads.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterModel {
    /// Sorted lexicographically by coordinates.
    pub centroids: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    /// Cluster of each input point.
    pub assignments: Vec<usize>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
    pub seed: u64,
    /// Restart that produced this model.
    pub restart: usize,
    pub iterations: usize,
    /// Objective after each assignment step of the winning restart.
    pub history: Vec<f64>,
    /// Final objective of every restart.
    pub restart_inertia: Vec<f64>,
}

struct Run {
    centroids: Vec<Vec<f64>>,
    assignments: Vec<usize>,
    inertia: f64,
    iterations: usize,
    history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Indices of the first occurrence of each distinct point.
fn distinct(points: &[Vec<f64>]) -> Vec<usize> {
    let mut keys: Vec<(Vec<u64>, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.iter().map(|v| (v + 0.0).to_bits()).collect(), i))
        .collect();
    keys.sort();
    keys.dedup_by(|a, b| a.0 == b.0);
    let mut idx: Vec<usize> = keys.into_iter().map(|(_, i)| i).collect();
    idx.sort_unstable();
    idx
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> Run {
    let k = centroids.len();
    let dim = centroids[0].len();
    let mut assignments = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut objective = 0.0;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (c, d) = nearest(p, &centroids);
            objective += d;
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        history.push(objective);
        iterations += 1;
        if !changed || iterations >= MAX_LLOYD_ITERATIONS {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            // an empty cluster keeps its previous centroid
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    Run {
        centroids,
        assignments,
        inertia,
        iterations,
        history,
    }
}

/// Best of `restarts` Lloyd runs by inertia; ties go to the lowest restart.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::Clustering("k must be at least 1".into()));
    }
    if restarts == 0 {
        return Err(Error::Clustering("restarts must be at least 1".into()));
    }
    if points.is_empty() {
        return Err(Error::Clustering("no points to cluster".into()));
    }
    let dim = points[0].len();
    if dim == 0
        || points
            .iter()
            .any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Clustering(
            "points must be finite and share one nonzero dimension".into(),
        ));
    }
    let unique = distinct(points);
    if unique.len() < k {
        return Err(Error::Clustering(format!(
            "{} distinct points cannot form {k} clusters",
            unique.len()
        )));
    }
    let runs: Vec<Run> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let picks = index::sample(&mut rng, unique.len(), k);
            let init = picks.iter().map(|i| points[unique[i]].clone()).collect();
            lloyd(points, init)
        })
        .collect();
    let restart_inertia: Vec<f64> = runs.iter().map(|r| r.inertia).collect();
    let (restart, best) = runs
        .into_iter()
        .enumerate()
        .reduce(|a, b| if b.1.inertia < a.1.inertia { b } else { a })
        .expect("at least one restart");

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        best.centroids[a]
            .iter()
            .zip(&best.centroids[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let assignments: Vec<usize> = best.assignments.iter().map(|&a| rank[a]).collect();
    let mut counts = vec![0; k];
    for &a in &assignments {
        counts[a] += 1;
    }
    Ok(ClusterModel {
        centroids: order.iter().map(|&c| best.centroids[c].clone()).collect(),
        counts,
        assignments,
        inertia: best.inertia,
        seed,
        restart,
        iterations: best.iterations,
        history: best.history,
        restart_inertia,
    })
}
