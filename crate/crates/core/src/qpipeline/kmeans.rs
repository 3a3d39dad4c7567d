//! Seeded Lloyd's K-means with farthest-point initialization.
//!
//! Ties always break toward the lowest point or cluster index, so callers that
//! order points deterministically get deterministic clusters.

use rand::Rng;

use crate::seeding::rng_for;

pub const MAX_ITERATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl Clustering {
    /// Point closest to each centroid (lowest index on ties).
    pub fn representatives(&self, points: &[Vec<f64>]) -> Vec<usize> {
        (0..self.centroids.len())
            .map(|c| {
                let mut best: Option<(usize, f64)> = None;
                for (i, p) in points.iter().enumerate() {
                    if self.assignments[i] != c {
                        continue;
                    }
                    let d = sq_dist(p, &self.centroids[c]);
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((i, d));
                    }
                }
                best.expect("clusters are never empty").0
            })
            .collect()
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn argmin_centroid(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn farthest_point_init(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut rng = rng_for(seed, &["kmeans-init"]);
    let start = rng.random_range(0..n);
    let mut chosen = vec![false; n];
    chosen[start] = true;
    let mut centers = vec![points[start].clone()];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[start])).collect();
    while centers.len() < k {
        let mut pick = None;
        for i in (0..n).filter(|&i| !chosen[i]) {
            if pick.is_none_or(|j: usize| min_d[i] > min_d[j]) {
                pick = Some(i);
            }
        }
        let pick = pick.expect("k <= n");
        chosen[pick] = true;
        centers.push(points[pick].clone());
        for i in 0..n {
            min_d[i] = min_d[i].min(sq_dist(&points[i], &points[pick]));
        }
    }
    centers
}

fn mean_centroids(points: &[Vec<f64>], assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dims = points[0].len();
    let mut sums = vec![vec![0.0; dims]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignments) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    sums
}

/// Moves the point farthest from its centroid in the largest cluster into each
/// empty cluster.
fn refill_empty(points: &[Vec<f64>], assignments: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &c in assignments.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let largest = (0..k).fold(0, |best, c| if sizes[c] > sizes[best] { c } else { best });
        let mut far: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if assignments[i] != largest {
                continue;
            }
            let d = sq_dist(p, &centroids[largest]);
            if far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        let (i, _) = far.expect("largest cluster is non-empty");
        assignments[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

/// Clusters `points` into `k` non-empty groups. Requires `1 <= k <= points.len()`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Clustering {
    assert!(k >= 1 && k <= points.len(), "need 1 <= k <= n");
    let mut centroids = farthest_point_init(points, k, seed);
    let mut assignments: Vec<usize> = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut next: Vec<usize> = points
            .iter()
            .map(|p| argmin_centroid(p, &centroids))
            .collect();
        refill_empty(points, &mut next, &mut centroids);
        let stable = next == assignments;
        assignments = next;
        centroids = mean_centroids(points, &assignments, k);
        if stable {
            break;
        }
    }
    Clustering {
        assignments,
        centroids,
        iterations,
    }
}
