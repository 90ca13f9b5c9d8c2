//! Segment candidates from k-means over self-supervised per-pixel features,
//! and one representative image-text embedding per segment.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dense_features::{l2_normalize_rows, DenseFeatureMap, PixelFeatureMap, UpsampleMode};
use crate::error::{Error, Result};
use crate::kmeans::{self, KMeansParams};

/// Dense cluster assignment for an `H × W` image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentPartition {
    height: usize,
    width: usize,
    assignment: Vec<u32>,
    counts: Vec<usize>,
    warnings: Vec<String>,
}

impl SegmentPartition {
    /// Build a partition from explicit labels. Every id in `0..k` must be used.
    pub fn from_labels(size: (usize, usize), assignment: Vec<u32>, k: usize) -> Result<Self> {
        let (height, width) = size;
        if assignment.len() != height * width {
            return Err(Error::Input(format!(
                "{} labels for a {height}x{width} grid",
                assignment.len()
            )));
        }
        let mut counts = vec![0usize; k];
        for &a in &assignment {
            *counts
                .get_mut(a as usize)
                .ok_or_else(|| Error::Input(format!("label {a} out of range for k={k}")))? += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Input(format!("cluster {empty} has no pixels")));
        }
        Ok(Self {
            height,
            width,
            assignment,
            counts,
            warnings: Vec::new(),
        })
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn label(&self, y: usize, x: usize) -> u32 {
        self.assignment[y * self.width + x]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// Which resolution k-means runs at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterOn {
    /// Every upsampled pixel is a k-means point.
    #[default]
    Pixel,
    /// Cluster the patch grid, then give each pixel its nearest center.
    Patch,
}

impl FromStr for ClusterOn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixel" => Ok(Self::Pixel),
            "patch" => Ok(Self::Patch),
            other => Err(Error::Parameter(format!("unknown clustering level `{other}`"))),
        }
    }
}

impl fmt::Display for ClusterOn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pixel => "pixel",
            Self::Patch => "patch",
        })
    }
}

fn normalized_points(values: &[f32], dim: usize) -> Vec<f32> {
    let mut points = values.to_vec();
    let zeros = l2_normalize_rows(&mut points, dim);
    if !zeros.is_empty() {
        log::warn!("{} zero feature vectors left unnormalized", zeros.len());
    }
    points
}

/// k-means over L2-normalized per-pixel features.
pub fn kmeans(features: &PixelFeatureMap, params: &KMeansParams) -> Result<SegmentPartition> {
    let points = normalized_points(features.as_slice(), features.dim());
    let km = kmeans::kmeans(&points, features.dim(), params)?;
    let (height, width) = features.size();
    Ok(SegmentPartition {
        height,
        width,
        assignment: km.assignment,
        counts: km.counts,
        warnings: km.warnings,
    })
}

/// Patch-grid variant: cluster the `h × w` patch features, then label every
/// upsampled pixel with its nearest center.
pub fn kmeans_on_grid(
    grid: &DenseFeatureMap,
    mode: UpsampleMode,
    params: &KMeansParams,
) -> Result<SegmentPartition> {
    let dim = grid.dim();
    let grid_points = normalized_points(&grid.patch_major(), dim);
    let km = kmeans::kmeans(&grid_points, dim, params)?;
    let pixels = crate::dense_features::upsample(grid, mode)?;
    let points = normalized_points(pixels.as_slice(), dim);
    let mut centroids = km.centroids;
    let (mut assignment, mut dists) = kmeans::with_workers(params.workers, || {
        kmeans::assign(&points, dim, &centroids)
    })?;
    kmeans::repair_empty(&points, dim, &mut centroids, &mut assignment, &mut dists);
    let k = centroids.len() / dim;
    let mut counts = vec![0usize; k];
    for &a in &assignment {
        counts[a as usize] += 1;
    }
    // clusters that could not be repaired (fewer distinct pixels than centers)
    let (assignment, counts) = compact(assignment, counts);
    let (height, width) = pixels.size();
    Ok(SegmentPartition {
        height,
        width,
        assignment,
        counts,
        warnings: km.warnings,
    })
}

fn compact(assignment: Vec<u32>, counts: Vec<usize>) -> (Vec<u32>, Vec<usize>) {
    if counts.iter().all(|&c| c > 0) {
        return (assignment, counts);
    }
    let mut remap = vec![u32::MAX; counts.len()];
    let mut kept = Vec::new();
    for (old, &c) in counts.iter().enumerate() {
        if c > 0 {
            remap[old] = kept.len() as u32;
            kept.push(c);
        }
    }
    (
        assignment.into_iter().map(|a| remap[a as usize]).collect(),
        kept,
    )
}

/// One pooled embedding per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEmbeddings {
    dim: usize,
    vectors: Vec<f32>,
    degenerate: Vec<bool>,
    source: String,
}

impl SegmentEmbeddings {
    pub fn k(&self) -> usize {
        self.degenerate.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, k: usize) -> &[f32] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    pub fn is_degenerate(&self, k: usize) -> bool {
        self.degenerate[k]
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            vectors: self.vectors.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Mean of the raw per-pixel features over each segment.
pub fn pool_segments(
    partition: &SegmentPartition,
    features: &PixelFeatureMap,
) -> Result<SegmentEmbeddings> {
    if partition.size() != features.size() {
        return Err(Error::Input(format!(
            "partition is {:?} but features are {:?}",
            partition.size(),
            features.size()
        )));
    }
    let dim = features.dim();
    let k = partition.k();
    if let Some(empty) = partition.counts.iter().position(|&c| c == 0) {
        return Err(Error::Internal(format!("segment {empty} is empty")));
    }
    const ROWS: usize = 64;
    let width = partition.width;
    let partials: Vec<Vec<f64>> = features
        .as_slice()
        .par_chunks(ROWS * width * dim)
        .zip(partition.assignment.par_chunks(ROWS * width))
        .map(|(vals, labels)| {
            let mut sums = vec![0.0f64; k * dim];
            for (v, &l) in vals.chunks_exact(dim).zip(labels) {
                let l = l as usize;
                for (s, &x) in sums[l * dim..(l + 1) * dim].iter_mut().zip(v) {
                    *s += x as f64;
                }
            }
            sums
        })
        .collect();
    let mut sums = vec![0.0f64; k * dim];
    for p in partials {
        for (a, b) in sums.iter_mut().zip(p) {
            *a += b;
        }
    }
    let mut vectors = Vec::with_capacity(k * dim);
    let mut degenerate = Vec::with_capacity(k);
    for (s, &count) in sums.chunks_exact(dim).zip(&partition.counts) {
        let mean: Vec<f32> = s.iter().map(|&v| (v / count as f64) as f32).collect();
        degenerate.push(mean.iter().all(|&v| v == 0.0));
        vectors.extend(mean);
    }
    Ok(SegmentEmbeddings {
        dim,
        vectors,
        degenerate,
        source: features.source().to_string(),
    })
}
