//! Lloyd's k-means with k-means++ seeding.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares of the final assignment.
    pub wcss: f64,
    /// WCSS after every assignment step, non-increasing.
    pub wcss_trace: Vec<f64>,
    pub iterations: usize,
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

fn plus_plus_init<R: Rng>(vectors: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![vectors[first].clone()];
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &vectors[first])).collect();
    while centroids.len() < k {
        let next = if d2.iter().any(|&d| d > 0.0) {
            rng::weighted_index(rng, &d2)
        } else {
            // Every remaining point coincides with a centroid.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen[next] = true;
        for (i, v) in vectors.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(v, &vectors[next]));
        }
        centroids.push(vectors[next].clone());
    }
    centroids
}

/// Clusters `vectors` into `k` groups. Deterministic given `seed`.
pub fn kmeans(vectors: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    if vectors.is_empty() {
        return Err(Error::EmptyInput("kmeans vectors"));
    }
    let dim = vectors[0].len();
    if dim == 0 {
        return Err(Error::EmptyInput("kmeans vector dimension"));
    }
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Shape("kmeans vectors differ in dimension".into()));
    }
    if k == 0 || k > vectors.len() {
        return Err(Error::InvalidArgument(alloc::format!("k = {k} with {} vectors", vectors.len())));
    }
    let mut rng = rng::seeded(seed);
    let mut centroids = plus_plus_init(vectors, k, &mut rng);
    let mut assignments = vec![usize::MAX; vectors.len()];
    let mut wcss_trace = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut wcss = 0.0;
        for (i, v) in vectors.iter().enumerate() {
            let (c, d) = nearest(v, &centroids);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
            wcss += d;
        }
        wcss_trace.push(wcss);
        if !changed || iterations >= max_iter {
            break;
        }
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &c) in vectors.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(v) {
                *s += x;
            }
        }
        for c in 0..k {
            // An emptied cluster keeps its previous centroid.
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let wcss = *wcss_trace.last().unwrap();
    Ok(KMeansResult { assignments, centroids, wcss, wcss_trace, iterations })
}

/// Within-cluster sum of squares of an arbitrary assignment, using cluster means.
pub fn wcss_of(vectors: &[Vec<f64>], assignments: &[usize], k: usize) -> f64 {
    let dim = vectors.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (v, &c) in vectors.iter().zip(assignments) {
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(v) {
            *s += x;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| s.iter().map(|x| if n > 0 { x / n as f64 } else { 0.0 }).collect())
        .collect();
    vectors.iter().zip(assignments).map(|(v, &c)| sq_dist(v, &means[c])).sum()
}
