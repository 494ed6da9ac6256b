//! Seeded k-means (k-means++ initialization, Lloyd iterations) over
//! descriptor vectors.
//!
//! The assignment step is parallelized over fixed-size chunks that are merged
//! in order, so results do not depend on the worker count.

use crate::error::{Error, Result};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

const CHUNK: usize = 1024;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f32>>,
    pub assignment: Vec<usize>,
    /// Sum of squared point-to-centroid distances after each Lloyd iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

#[inline]
fn dist2(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

fn nearest(point: &[f32], centroids: &[Vec<f32>]) -> (usize, f32) {
    let mut best = 0usize;
    let mut best_d = f32::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// Cluster `points` into `k` centroids. Stops when the largest centroid shift
/// drops below `tol` or after `max_iters` Lloyd iterations.
pub fn kmeans(points: &[Vec<f32>], k: usize, seed: u64, max_iters: usize, tol: f32) -> Result<KMeansResult> {
    if k < 2 {
        return Err(Error::invalid("k-means needs at least 2 clusters"));
    }
    if points.len() < k {
        return Err(Error::invalid(format!(
            "{} points cannot seed {k} clusters",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("points must share one dimension"));
    }

    // k-means++ seeding.
    let mut rng = StdRng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f32>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    let mut min_d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0]) as f64).collect();
    while centroids.len() < k {
        let total: f64 = min_d2.iter().sum();
        let next = if total <= 0.0 {
            // All remaining mass is zero (duplicate points): any point works.
            rng.gen_range(0..points.len())
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, &d) in min_d2.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(points[next].clone());
        let newest = centroids.last().unwrap();
        for (i, p) in points.iter().enumerate() {
            let d = dist2(p, newest) as f64;
            if d < min_d2[i] {
                min_d2[i] = d;
            }
        }
    }

    let mut assignment = vec![0usize; points.len()];
    let mut objective_trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        // Assignment, chunked for order-independent parallelism.
        let chunk_results: Vec<Vec<(usize, f32)>> = points
            .par_chunks(CHUNK)
            .map(|chunk| chunk.iter().map(|p| nearest(p, &centroids)).collect())
            .collect();
        let mut objective = 0.0f64;
        {
            let mut i = 0;
            for chunk in &chunk_results {
                for &(a, d) in chunk {
                    assignment[i] = a;
                    objective += d as f64;
                    i += 1;
                }
            }
        }
        objective_trace.push(objective);

        // Update step with f64 accumulators.
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(assignment.iter()) {
            counts[a] += 1;
            for (s, &v) in sums[a].iter_mut().zip(p.iter()) {
                *s += v as f64;
            }
        }
        // Empty clusters grab the point farthest from its centroid.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..points.len())
                .max_by(|&a, &b| {
                    dist2(&points[a], &centroids[assignment[a]])
                        .total_cmp(&dist2(&points[b], &centroids[assignment[b]]))
                })
                .expect("points is nonempty");
            sums[c] = points[far].iter().map(|&v| v as f64).collect();
            counts[c] = 1;
        }

        let mut max_shift = 0.0f32;
        for c in 0..k {
            let inv = 1.0 / counts[c] as f64;
            let mut shift = 0.0f32;
            for d in 0..dim {
                let nv = (sums[c][d] * inv) as f32;
                let diff = nv - centroids[c][d];
                shift += diff * diff;
                centroids[c][d] = nv;
            }
            max_shift = max_shift.max(shift.sqrt());
        }
        if max_shift < tol {
            break;
        }
    }

    Ok(KMeansResult {
        centroids,
        assignment,
        objective_trace,
        iterations,
    })
}
