//! Weighted Haar preprocessing.
//!
//! Each snapshot is zero-padded (top-left anchored) to a dyadic size,
//! transformed with the orthonormal Haar wavelet and rescaled per level. The
//! level weights `2^(-(J - l) * e)` with `e = 1 + d/2` follow the wavelet
//! approximation of the earth mover's distance: under these weights the `l1`
//! distance between coefficient vectors behaves like a transport cost, and
//! coarse structure dominates fine structure.
//!
//! Coefficients are laid out level-major: the approximation block first, then
//! detail bands from the coarsest level down to the finest (`l = 0`). In 2D a
//! level contributes three bands in the order horizontal (top-right quadrant),
//! vertical (bottom-left), diagonal (bottom-right), each row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::SnapshotEnsemble;

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Levels {
    Full,
    Depth(usize),
}

impl std::str::FromStr for Levels {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "full" {
            return Ok(Levels::Full);
        }
        s.parse()
            .map(Levels::Depth)
            .map_err(|_| Error::InvalidConfig(format!("wavelet levels must be an integer or 'full', got {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveletConfig {
    pub enabled: bool,
    /// 1 for chains (a single row or column), 2 for grids.
    pub spatial_dim: usize,
    pub weight_exponent: f64,
    pub levels: Levels,
}

pub fn spatial_dim_for(rows: usize, cols: usize) -> usize {
    if rows == 1 || cols == 1 {
        1
    } else {
        2
    }
}

impl WaveletConfig {
    /// Defaults for a snapshot shape: enabled, full depth, exponent `1 + d/2`.
    pub fn for_shape(rows: usize, cols: usize) -> Self {
        let d = spatial_dim_for(rows, cols);
        WaveletConfig {
            enabled: true,
            spatial_dim: d,
            weight_exponent: 1.0 + d as f64 / 2.0,
            levels: Levels::Full,
        }
    }

    pub fn disabled(rows: usize, cols: usize) -> Self {
        WaveletConfig {
            enabled: false,
            ..Self::for_shape(rows, cols)
        }
    }

    /// Coefficient layout for a snapshot of the given shape.
    pub fn layout(&self, rows: usize, cols: usize) -> Result<CoeffLayout> {
        let d = spatial_dim_for(rows, cols);
        if d != self.spatial_dim {
            return Err(Error::InvalidConfig(format!(
                "spatial_dim {} does not match {rows}x{cols} snapshots",
                self.spatial_dim
            )));
        }
        let side = if d == 1 {
            (rows * cols).next_power_of_two()
        } else {
            rows.max(cols).next_power_of_two()
        };
        CoeffLayout::new(d, side, self.levels)
    }
}

/// Geometry of a padded coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoeffLayout {
    pub spatial_dim: usize,
    /// Padded side length (the full length in 1D).
    pub side: usize,
    /// Number of decomposition levels `J`.
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Approx,
    /// Detail coefficient at level `l`, `l = 0` finest.
    Detail(usize),
}

impl CoeffLayout {
    pub fn new(spatial_dim: usize, side: usize, levels: Levels) -> Result<Self> {
        if !(1..=2).contains(&spatial_dim) || !side.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "no Haar layout for dim {spatial_dim}, side {side}"
            )));
        }
        let max_depth = side.trailing_zeros() as usize;
        let depth = match levels {
            Levels::Full => max_depth,
            Levels::Depth(j) if j <= max_depth => j,
            Levels::Depth(j) => {
                return Err(Error::InvalidConfig(format!(
                    "{j} wavelet levels exceed log2 of padded side {side}"
                )))
            }
        };
        Ok(CoeffLayout {
            spatial_dim,
            side,
            depth,
        })
    }

    /// Infer the layout from a coefficient count.
    pub fn from_len(spatial_dim: usize, len: usize, levels: Levels) -> Result<Self> {
        let side = match spatial_dim {
            1 => len,
            2 => {
                let s = (len as f64).sqrt().round() as usize;
                if s * s != len {
                    return Err(Error::DimensionMismatch(len, s * s));
                }
                s
            }
            _ => 0,
        };
        if !side.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "{len} coefficients do not form a dyadic {spatial_dim}D layout"
            )));
        }
        Self::new(spatial_dim, side, levels)
    }

    pub fn len(&self) -> usize {
        self.side.pow(self.spatial_dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Size of the approximation block.
    pub fn approx_len(&self) -> usize {
        (self.side >> self.depth).pow(self.spatial_dim as u32)
    }

    /// Band of every coefficient position, in layout order.
    pub fn bands(&self) -> Vec<Band> {
        let mut out = vec![Band::Approx; self.approx_len()];
        let per_block = if self.spatial_dim == 1 { 1 } else { 3 };
        for level in (0..self.depth).rev() {
            let h = self.side >> (level + 1);
            let n = per_block * h.pow(self.spatial_dim as u32);
            out.extend(std::iter::repeat_n(Band::Detail(level), n));
        }
        out
    }

    /// Per-coefficient multipliers: 1 on the approximation block,
    /// `2^(-(J - l) * exponent)` on level-`l` details.
    pub fn weights(&self, exponent: f64) -> Vec<f64> {
        let j = self.depth as f64;
        self.bands()
            .into_iter()
            .map(|b| match b {
                Band::Approx => 1.0,
                Band::Detail(l) => (-(j - l as f64) * exponent).exp2(),
            })
            .collect()
    }
}

/// One analysis step on `x[..len]`: averages to the front half, details to the
/// back half.
fn haar_step(x: &mut [f64], len: usize, tmp: &mut [f64]) {
    let half = len / 2;
    for i in 0..half {
        let (a, b) = (x[2 * i], x[2 * i + 1]);
        tmp[i] = (a + b) * INV_SQRT2;
        tmp[half + i] = (a - b) * INV_SQRT2;
    }
    x[..len].copy_from_slice(&tmp[..len]);
}

fn haar_1d(x: &mut [f64], depth: usize) {
    let mut tmp = vec![0.0; x.len()];
    let mut len = x.len();
    for _ in 0..depth {
        haar_step(x, len, &mut tmp);
        len /= 2;
    }
}

/// Nonstandard (Mallat) 2D decomposition in place, quadrant layout.
fn haar_2d(grid: &mut [f64], side: usize, depth: usize) {
    let mut tmp = vec![0.0; side];
    let mut col = vec![0.0; side];
    let mut s = side;
    for _ in 0..depth {
        for r in 0..s {
            haar_step(&mut grid[r * side..r * side + s], s, &mut tmp);
        }
        for c in 0..s {
            for r in 0..s {
                col[r] = grid[r * side + c];
            }
            haar_step(&mut col, s, &mut tmp);
            for r in 0..s {
                grid[r * side + c] = col[r];
            }
        }
        s /= 2;
    }
}

fn quadrant_to_level_major(grid: &[f64], side: usize, depth: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(side * side);
    let block = |out: &mut Vec<f64>, r0: usize, c0: usize, h: usize| {
        for r in r0..r0 + h {
            out.extend_from_slice(&grid[r * side + c0..r * side + c0 + h]);
        }
    };
    block(&mut out, 0, 0, side >> depth);
    for level in (0..depth).rev() {
        let h = side >> (level + 1);
        block(&mut out, 0, h, h);
        block(&mut out, h, 0, h);
        block(&mut out, h, h, h);
    }
    out
}

/// Zero-pad a row-major `rows x cols` grid onto the layout's dyadic domain.
pub fn pad(values: &[f64], rows: usize, cols: usize, layout: &CoeffLayout) -> Vec<f64> {
    let mut out = vec![0.0; layout.len()];
    if layout.spatial_dim == 1 {
        out[..values.len()].copy_from_slice(values);
    } else {
        for r in 0..rows {
            out[r * layout.side..r * layout.side + cols].copy_from_slice(&values[r * cols..(r + 1) * cols]);
        }
    }
    out
}

/// Orthonormal (unweighted) Haar coefficients of a row-major grid.
pub fn haar_transform(values: &[f64], rows: usize, cols: usize, cfg: &WaveletConfig) -> Result<Vec<f64>> {
    if values.len() != rows * cols {
        return Err(Error::DimensionMismatch(values.len(), rows * cols));
    }
    let layout = cfg.layout(rows, cols)?;
    let mut x = pad(values, rows, cols, &layout);
    Ok(transform_padded(&mut x, &layout))
}

fn transform_padded(x: &mut [f64], layout: &CoeffLayout) -> Vec<f64> {
    if layout.spatial_dim == 1 {
        haar_1d(x, layout.depth);
        x.to_vec()
    } else {
        haar_2d(x, layout.side, layout.depth);
        quadrant_to_level_major(x, layout.side, layout.depth)
    }
}

/// Rescale detail bands by their level weights.
pub fn apply_weights(coeffs: &[f64], cfg: &WaveletConfig) -> Result<Vec<f64>> {
    let layout = CoeffLayout::from_len(cfg.spatial_dim, coeffs.len(), cfg.levels)?;
    let w = layout.weights(cfg.weight_exponent);
    Ok(coeffs.iter().zip(&w).map(|(c, w)| c * w).collect())
}

/// Weighted-`l1` wavelet distance between two snapshots of equal shape.
pub fn emd_surrogate(u: &[f64], v: &[f64], rows: usize, cols: usize, cfg: &WaveletConfig) -> Result<f64> {
    let tu = apply_weights(&haar_transform(u, rows, cols, cfg)?, cfg)?;
    let tv = apply_weights(&haar_transform(v, rows, cols, cfg)?, cfg)?;
    Ok(tu.iter().zip(&tv).map(|(a, b)| (a - b).abs()).sum())
}

/// Per-snapshot feature vectors `p_j` for one ensemble, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedEnsemble {
    pub parameter: f64,
    dim: usize,
    data: Vec<f64>,
}

impl PreprocessedEnsemble {
    pub fn from_vectors(parameter: f64, vectors: &[Vec<f64>]) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(dim * vectors.len());
        for v in vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch(v.len(), dim));
            }
            data.extend_from_slice(v);
        }
        Ok(PreprocessedEnsemble { parameter, dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Flatten, mask, pad, transform and weight every snapshot of an ensemble.
/// With the transform disabled the vectors are the flattened snapshots.
pub fn preprocess_ensemble(
    e: &SnapshotEnsemble,
    cfg: &WaveletConfig,
    active: Option<&[bool]>,
) -> Result<PreprocessedEnsemble> {
    let (rows, cols) = e.shape();
    let mask_site = |v: &mut Vec<f64>| {
        if let Some(a) = active {
            for (x, &on) in v.iter_mut().zip(a) {
                if !on {
                    *x = 0.0;
                }
            }
        }
    };
    if !cfg.enabled {
        let data = e
            .snapshots()
            .iter()
            .flat_map(|s| {
                let mut v = s.flatten();
                mask_site(&mut v);
                v
            })
            .collect();
        return Ok(PreprocessedEnsemble {
            parameter: e.parameter,
            dim: rows * cols,
            data,
        });
    }
    let layout = cfg.layout(rows, cols)?;
    let weights = layout.weights(cfg.weight_exponent);
    let mut data = Vec::with_capacity(layout.len() * e.count());
    for s in e.snapshots() {
        let mut v = s.flatten();
        mask_site(&mut v);
        let mut x = pad(&v, rows, cols, &layout);
        let coeffs = transform_padded(&mut x, &layout);
        data.extend(coeffs.iter().zip(&weights).map(|(c, w)| c * w));
    }
    Ok(PreprocessedEnsemble {
        parameter: e.parameter,
        dim: layout.len(),
        data,
    })
}
