//! Patch-grid and per-pixel feature maps plus the small amount of vector
//! math shared across the engine.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor_store::Tensor;

pub const SOURCE_DINO: &str = "dinov2-vitl14";
pub const SOURCE_CLIP: &str = "clip-vitl14-value";

/// Per-patch features laid out channel-major (`D × h × w`).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFeatureMap {
    dim: usize,
    grid_h: usize,
    grid_w: usize,
    image_h: usize,
    image_w: usize,
    patch: usize,
    source: String,
    values: Vec<f32>,
}

impl DenseFeatureMap {
    pub fn new(
        values: Vec<f32>,
        dim: usize,
        grid: (usize, usize),
        image_size: (usize, usize),
        patch: usize,
        source: impl Into<String>,
    ) -> Result<Self> {
        let (grid_h, grid_w) = grid;
        let (image_h, image_w) = image_size;
        if dim == 0 {
            return Err(Error::Input("feature dimension must be positive".into()));
        }
        if patch == 0 {
            return Err(Error::Geometry("patch size must be positive".into()));
        }
        if image_h < patch || image_w < patch {
            return Err(Error::Geometry(format!(
                "image {image_h}x{image_w} is smaller than patch size {patch}"
            )));
        }
        if grid_h != image_h.div_ceil(patch) || grid_w != image_w.div_ceil(patch) {
            return Err(Error::Geometry(format!(
                "patch grid {grid_h}x{grid_w} does not match image {image_h}x{image_w} at patch {patch}"
            )));
        }
        if values.len() != dim * grid_h * grid_w {
            return Err(Error::Input(format!(
                "expected {} values for {dim}x{grid_h}x{grid_w}, got {}",
                dim * grid_h * grid_w,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite feature value at index {i}")));
        }
        Ok(Self {
            dim,
            grid_h,
            grid_w,
            image_h,
            image_w,
            patch,
            source: source.into(),
            values,
        })
    }

    /// Wrap a `D × h × w` tensor. `image_size` defaults to the grid times the patch size.
    pub fn from_tensor(
        tensor: Tensor,
        image_size: Option<(usize, usize)>,
        patch: usize,
        source: impl Into<String>,
    ) -> Result<Self> {
        let [dim, h, w] = tensor.dims()[..] else {
            return Err(Error::format(
                "ndim",
                format!("dense features must be D x h x w, got {:?}", tensor.dims()),
            ));
        };
        let image_size = image_size.unwrap_or((h * patch, w * patch));
        Self::new(tensor.into_values(), dim, (h, w), image_size, patch, source)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_h, self.grid_w)
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.image_h, self.image_w)
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn value(&self, channel: usize, y: usize, x: usize) -> f32 {
        self.values[(channel * self.grid_h + y) * self.grid_w + x]
    }

    /// Features transposed to patch-major order (`h·w × D`).
    pub fn patch_major(&self) -> Vec<f32> {
        let cells = self.grid_h * self.grid_w;
        let mut out = vec![0.0; cells * self.dim];
        for c in 0..self.dim {
            let plane = &self.values[c * cells..(c + 1) * cells];
            for (cell, &v) in plane.iter().enumerate() {
                out[cell * self.dim + c] = v;
            }
        }
        out
    }
}

/// Per-pixel features, stored pixel-major (`H·W × D`) so each pixel's
/// vector is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelFeatureMap {
    dim: usize,
    height: usize,
    width: usize,
    source: String,
    values: Vec<f32>,
}

impl PixelFeatureMap {
    pub fn new(
        values: Vec<f32>,
        dim: usize,
        size: (usize, usize),
        source: impl Into<String>,
    ) -> Result<Self> {
        let (height, width) = size;
        if dim == 0 || height == 0 || width == 0 {
            return Err(Error::Input(format!(
                "degenerate pixel map {dim}x{height}x{width}"
            )));
        }
        if values.len() != dim * height * width {
            return Err(Error::Input(format!(
                "expected {} values, got {}",
                dim * height * width,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite feature value at index {i}")));
        }
        Ok(Self {
            dim,
            height,
            width,
            source: source.into(),
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let i = y * self.width + x;
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpsampleMode {
    #[default]
    Bilinear,
    Nearest,
}

impl FromStr for UpsampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bilinear" => Ok(Self::Bilinear),
            "nearest" => Ok(Self::Nearest),
            other => Err(Error::Parameter(format!("unknown upsample mode `{other}`"))),
        }
    }
}

impl fmt::Display for UpsampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bilinear => "bilinear",
            Self::Nearest => "nearest",
        })
    }
}

/// Interpolation taps along one axis: lower index, upper index, weight of upper.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    t: f32,
}

// Patch j covers pixels [jP, (j+1)P) and its center sits at pixel
// coordinate (j + 0.5)P - 0.5. Coordinates outside the outer centers clamp.
fn axis_taps(pixels: usize, cells: usize, patch: usize, mode: UpsampleMode) -> Vec<Tap> {
    (0..pixels)
        .map(|p| match mode {
            UpsampleMode::Nearest => {
                let j = (p / patch).min(cells - 1);
                Tap { lo: j, hi: j, t: 0.0 }
            }
            UpsampleMode::Bilinear => {
                let g = (p as f64 + 0.5) / patch as f64 - 0.5;
                let g = g.clamp(0.0, (cells - 1) as f64);
                let lo = g.floor() as usize;
                let hi = (lo + 1).min(cells - 1);
                Tap {
                    lo,
                    hi,
                    t: (g - lo as f64) as f32,
                }
            }
        })
        .collect()
}

/// Interpolate a patch grid up to pixel resolution, channel by channel.
pub fn upsample(map: &DenseFeatureMap, mode: UpsampleMode) -> Result<PixelFeatureMap> {
    let (height, width) = map.image_size();
    if height < map.patch || width < map.patch {
        return Err(Error::Geometry(format!(
            "image {height}x{width} is smaller than patch size {}",
            map.patch
        )));
    }
    let dim = map.dim;
    let grid = map.patch_major();
    let ytaps = axis_taps(height, map.grid_h, map.patch, mode);
    let xtaps = axis_taps(width, map.grid_w, map.patch, mode);
    let cell = |y: usize, x: usize| -> &[f32] {
        let i = y * map.grid_w + x;
        &grid[i * dim..(i + 1) * dim]
    };

    let mut values = vec![0.0f32; height * width * dim];
    values
        .par_chunks_mut(width * dim)
        .enumerate()
        .for_each(|(y, row)| {
            let ty = ytaps[y];
            for (x, out) in row.chunks_exact_mut(dim).enumerate() {
                let tx = xtaps[x];
                let a = cell(ty.lo, tx.lo);
                let b = cell(ty.lo, tx.hi);
                let c = cell(ty.hi, tx.lo);
                let d = cell(ty.hi, tx.hi);
                for ch in 0..dim {
                    let top = (1.0 - tx.t) * a[ch] + tx.t * b[ch];
                    let bottom = (1.0 - tx.t) * c[ch] + tx.t * d[ch];
                    out[ch] = (1.0 - ty.t) * top + ty.t * bottom;
                }
            }
        });
    PixelFeatureMap::new(values, dim, (height, width), map.source.clone())
}

/// Cosine similarity with an explicit flag for zero-length inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub value: f32,
    pub degenerate: bool,
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn norm(v: &[f32]) -> f64 {
    dot(v, v).sqrt()
}

pub fn cosine(a: &[f32], b: &[f32]) -> Cosine {
    debug_assert_eq!(a.len(), b.len());
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Cosine {
            value: 0.0,
            degenerate: true,
        };
    }
    Cosine {
        value: (dot(a, b) / (na * nb)).clamp(-1.0, 1.0) as f32,
        degenerate: false,
    }
}

/// Scale `v` to unit length in place. Returns `false` (leaving `v`
/// untouched) when `v` is the zero vector.
pub fn l2_normalize(v: &mut [f32]) -> bool {
    let n = norm(v);
    if n == 0.0 {
        return false;
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / n) as f32;
    }
    true
}

/// Normalize every `dim`-length row of `data` in place; returns the indices
/// of zero rows.
pub fn l2_normalize_rows(data: &mut [f32], dim: usize) -> Vec<usize> {
    let flags: Vec<bool> = data
        .par_chunks_mut(dim)
        .map(l2_normalize)
        .collect();
    flags
        .iter()
        .enumerate()
        .filter(|(_, &ok)| !ok)
        .map(|(i, _)| i)
        .collect()
}
