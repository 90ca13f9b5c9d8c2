//! Lloyd's k-means with greedy k-means++ seeding.
//!
//! All reductions run over fixed-size chunks that are combined in chunk
//! order, so results are bit-identical for any rayon worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop when total center movement relative to total center norm drops below this.
    pub tol: f64,
    /// Run inside a dedicated pool of this many threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: 15,
            seed: 0,
            max_iters: 100,
            tol: 1e-4,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub dim: usize,
    /// `k × dim`, row-major.
    pub centroids: Vec<f32>,
    pub assignment: Vec<u32>,
    pub counts: Vec<usize>,
    /// Sum of squared distances after each assignment step.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn centroid(&self, k: usize) -> &[f32] {
        &self.centroids[k * self.dim..(k + 1) * self.dim]
    }
}

#[inline]
fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Run `f` on a pool of `workers` threads when requested.
pub(crate) fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::Parameter("worker count must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Internal(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Cluster `points` (row-major, `dim` columns).
pub fn kmeans(points: &[f32], dim: usize, params: &KMeansParams) -> Result<KMeans> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::Input(format!(
            "{} values do not form rows of width {dim}",
            points.len()
        )));
    }
    let n = points.len() / dim;
    if params.k == 0 {
        return Err(Error::Parameter("cluster count must be at least 1".into()));
    }
    if params.k > n {
        return Err(Error::Parameter(format!(
            "cluster count {} exceeds the {n} points",
            params.k
        )));
    }
    if let Some(i) = points.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!(
            "non-finite feature in point {}",
            i / dim
        )));
    }
    with_workers(params.workers, || run(points, dim, n, params))?
}

fn run(points: &[f32], dim: usize, n: usize, params: &KMeansParams) -> Result<KMeans> {
    let mut warnings = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = init_plus_plus(points, dim, n, params.k, &mut rng);
    let k = centroids.len() / dim;
    if k < params.k {
        let msg = format!(
            "only {k} distinct feature vectors; reduced cluster count from {}",
            params.k
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let mut objective = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut assignment;
    loop {
        let (labels, dists) = assign(points, dim, &centroids);
        assignment = labels;
        let mut dists = dists;
        let repaired = repair_empty(points, dim, &mut centroids, &mut assignment, &mut dists);
        if repaired > 0 {
            log::debug!("reseeded {repaired} empty clusters");
        }
        objective.push(chunked_sum(&dists));
        if converged || iterations == params.max_iters {
            break;
        }
        let updated = update_centroids(points, dim, k, &assignment);
        let shift = relative_shift(&centroids, &updated);
        centroids = updated;
        iterations += 1;
        converged = shift < params.tol;
    }

    let mut counts = vec![0usize; k];
    for &a in &assignment {
        counts[a as usize] += 1;
    }
    Ok(KMeans {
        dim,
        centroids,
        assignment,
        counts,
        objective,
        iterations,
        converged,
        warnings,
    })
}

fn init_plus_plus(points: &[f32], dim: usize, n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let trials = 2 + (k as f64).ln().floor() as usize;

    let first = rng.random_range(0..n);
    let mut centroids = row(first).to_vec();
    let mut closest: Vec<f32> = points
        .par_chunks(dim)
        .map(|p| sq_dist(p, row(first)))
        .collect();

    while centroids.len() / dim < k {
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0f64;
        for &d in &closest {
            acc += d as f64;
            cumulative.push(acc);
        }
        if acc <= 0.0 {
            break;
        }
        let mut best: Option<(usize, f64, Vec<f32>)> = None;
        for _ in 0..trials {
            let target = rng.random::<f64>() * acc;
            let mut idx = cumulative.partition_point(|&c| c <= target).min(n - 1);
            while closest[idx] == 0.0 && idx > 0 {
                idx -= 1;
            }
            let cand = row(idx);
            let updated: Vec<f32> = points
                .par_chunks(dim)
                .zip(closest.par_iter())
                .map(|(p, &c)| c.min(sq_dist(p, cand)))
                .collect();
            let potential = chunked_sum(&updated);
            if best.as_ref().is_none_or(|(_, pot, _)| potential < *pot) {
                best = Some((idx, potential, updated));
            }
        }
        let (idx, _, updated) = best.expect("at least one trial");
        if closest[idx] == 0.0 {
            break;
        }
        centroids.extend_from_slice(row(idx));
        closest = updated;
    }
    centroids
}

/// Nearest centroid per point (ties to the lower index) and the squared distance.
pub fn assign(points: &[f32], dim: usize, centroids: &[f32]) -> (Vec<u32>, Vec<f32>) {
    points
        .par_chunks(dim)
        .map(|p| {
            let mut best = (0u32, f32::INFINITY);
            for (j, c) in centroids.chunks_exact(dim).enumerate() {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (j as u32, d);
                }
            }
            best
        })
        .unzip()
}

/// Give every empty cluster the point farthest from its current center,
/// drawn from clusters that can spare one. Returns the number repaired.
pub fn repair_empty(
    points: &[f32],
    dim: usize,
    centroids: &mut [f32],
    assignment: &mut [u32],
    dists: &mut [f32],
) -> usize {
    let k = centroids.len() / dim;
    let mut counts = vec![0usize; k];
    for &a in assignment.iter() {
        counts[a as usize] += 1;
    }
    let mut repaired = 0;
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut far: Option<(usize, f32)> = None;
        for (i, (&a, &d)) in assignment.iter().zip(dists.iter()).enumerate() {
            if counts[a as usize] > 1 && far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        let Some((i, _)) = far else { break };
        counts[assignment[i] as usize] -= 1;
        counts[empty] = 1;
        assignment[i] = empty as u32;
        dists[i] = 0.0;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&points[i * dim..(i + 1) * dim]);
        repaired += 1;
    }
    repaired
}

fn update_centroids(points: &[f32], dim: usize, k: usize, assignment: &[u32]) -> Vec<f32> {
    let partials: Vec<(Vec<f64>, Vec<usize>)> = points
        .par_chunks(CHUNK * dim)
        .zip(assignment.par_chunks(CHUNK))
        .map(|(pts, labels)| {
            let mut sums = vec![0.0f64; k * dim];
            let mut counts = vec![0usize; k];
            for (p, &l) in pts.chunks_exact(dim).zip(labels) {
                let l = l as usize;
                counts[l] += 1;
                for (s, &v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(p) {
                    *s += v as f64;
                }
            }
            (sums, counts)
        })
        .collect();
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (s, c) in partials {
        for (a, b) in sums.iter_mut().zip(s) {
            *a += b;
        }
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
    }
    sums.chunks_exact(dim)
        .zip(&counts)
        .flat_map(|(s, &c)| s.iter().map(move |&v| (v / c.max(1) as f64) as f32))
        .collect()
}

fn relative_shift(old: &[f32], new: &[f32]) -> f64 {
    let moved: f64 = old
        .iter()
        .zip(new)
        .map(|(&a, &b)| ((a - b) as f64).powi(2))
        .sum();
    let scale: f64 = old.iter().map(|&a| (a as f64).powi(2)).sum();
    moved.sqrt() / scale.sqrt().max(1e-12)
}

fn chunked_sum(values: &[f32]) -> f64 {
    let partial: Vec<f64> = values
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|&v| v as f64).sum())
        .collect();
    partial.into_iter().sum()
}
