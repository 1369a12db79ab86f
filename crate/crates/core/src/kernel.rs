//! Ensemble statistics and the Mahalanobis-like ensemble kernel.
//!
//! Every ensemble is summarized by its empirical mean `z` and unbiased
//! covariance `C`. Two ensembles are compared through
//!
//! ```text
//! d²(i, j) = ½ (z_i - z_j)ᵀ (C_i⁺ + C_j⁺) (z_i - z_j)
//! ```
//!
//! where `C⁺` is a truncated pseudo-inverse: directions with no observed
//! variance contribute nothing. The kernel is `K_ij = exp(-d²_ij / ε)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavelet::PreprocessedEnsemble;

/// Which singular values of the covariance are inverted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankPolicy {
    /// Keep `σ_k >= rel_tol * σ_max`.
    pub rel_tol: f64,
    /// Optional hard cap on the retained rank, applied on top of `min(m-1, D)`.
    pub max_rank: Option<usize>,
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy {
            rel_tol: 1e-3,
            max_rank: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPolicy {
    /// Fixed ε; the median off-diagonal d² when absent.
    pub epsilon: Option<f64>,
    /// Multiplier applied to whichever ε was chosen.
    pub scale: f64,
}

impl Default for BandwidthPolicy {
    fn default() -> Self {
        BandwidthPolicy {
            epsilon: None,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub parameter: f64,
    pub count: usize,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub pinv: DMatrix<f64>,
    pub rank_used: usize,
}

impl EnsembleStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Truncated pseudo-inverse of a symmetric positive-semidefinite matrix.
///
/// For such matrices the singular values are the absolute eigenvalues, so the
/// truncation is done on a symmetric eigendecomposition. `rank_cap` bounds the
/// number of retained directions. Returns the pseudo-inverse and its rank.
pub fn truncated_pinv(c: &DMatrix<f64>, policy: &RankPolicy, rank_cap: usize) -> (DMatrix<f64>, usize) {
    let d = c.nrows();
    let cap = policy.max_rank.map_or(rank_cap, |r| r.min(rank_cap)).min(d);
    let mut p = DMatrix::zeros(d, d);
    if d == 0 || cap == 0 {
        return (p, 0);
    }
    // a zero diagonal entry forces a zero row and column in a PSD matrix, so
    // only the support needs diagonalizing (padded wavelet bands are all zero)
    let support: Vec<usize> = (0..d).filter(|&i| c[(i, i)] != 0.0).collect();
    if support.is_empty() {
        return (p, 0);
    }
    let sub = c.select_rows(&support).select_columns(&support);
    let (values, vectors) = spectral_pairs(sub);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    let sigma_max = values[order[0]].abs();
    if sigma_max == 0.0 || !sigma_max.is_finite() {
        return (p, 0);
    }
    let keep: Vec<usize> = order
        .into_iter()
        .take(cap)
        .take_while(|&k| values[k].abs() >= policy.rel_tol * sigma_max)
        .collect();
    let r = keep.len();
    if r == 0 {
        return (p, 0);
    }
    let s = support.len();
    let mut v = DMatrix::zeros(s, r);
    let mut scaled = DMatrix::zeros(s, r);
    for (col, &k) in keep.iter().enumerate() {
        let inv = 1.0 / values[k];
        for row in 0..s {
            let x = vectors[(row, k)];
            v[(row, col)] = x;
            scaled[(row, col)] = x * inv;
        }
    }
    let mut sub_p = scaled * v.transpose();
    symmetrize(&mut sub_p);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            p[(i, j)] = sub_p[(a, b)];
        }
    }
    (p, r)
}

/// Eigenpairs of a symmetric matrix. Falls back to an SVD, with eigenvalues
/// recovered as Rayleigh quotients, when the QR iteration yields non-finite
/// values.
fn spectral_pairs(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().chain(eig.eigenvectors.iter()).all(|x| x.is_finite()) {
        return (eig.eigenvalues.as_slice().to_vec(), eig.eigenvectors);
    }
    let u = m.clone().svd(true, false).u.expect("left singular vectors requested");
    let values = u.column_iter().map(|col| col.dot(&(&m * col))).collect();
    (values, u)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
}

/// Empirical mean, unbiased covariance and truncated pseudo-inverse.
pub fn compute_stats(pe: &PreprocessedEnsemble, policy: &RankPolicy) -> Result<EnsembleStats> {
    let m = pe.count();
    if m < 2 {
        return Err(Error::InsufficientSamples(m));
    }
    let d = pe.dim();
    let x = DMatrix::from_row_slice(m, d, pe.as_slice());
    let mut mean = DVector::zeros(d);
    for row in x.row_iter() {
        mean += row.transpose();
    }
    mean /= m as f64;
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut covariance = centered.tr_mul(&centered) / (m as f64 - 1.0);
    symmetrize(&mut covariance);
    let (pinv, rank_used) = truncated_pinv(&covariance, policy, m - 1);
    Ok(EnsembleStats {
        parameter: pe.parameter,
        count: m,
        mean,
        covariance,
        pinv,
        rank_used,
    })
}

fn quad_form(a: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(a * v))
}

/// `½ Δᵀ (C_a⁺ + C_b⁺) Δ` with `Δ = z_a - z_b`, clamped at zero.
pub fn mahalanobis_sq(a: &EnsembleStats, b: &EnsembleStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    let delta = &a.mean - &b.mean;
    let d2 = 0.5 * (quad_form(&a.pinv, &delta) + quad_form(&b.pinv, &delta));
    Ok(d2.max(0.0))
}

/// Symmetric matrix of pairwise `d²`, zero diagonal.
pub fn distance_matrix(stats: &[EnsembleStats]) -> Result<DMatrix<f64>> {
    let n = stats.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| mahalanobis_sq(&stats[i], &stats[j]))
        .collect::<Result<Vec<f64>>>()?;
    let mut d = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        d[(i, j)] = v;
        d[(j, i)] = v;
    }
    Ok(d)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub distances: DMatrix<f64>,
    pub similarities: DMatrix<f64>,
    pub bandwidth: f64,
}

impl KernelMatrix {
    pub fn size(&self) -> usize {
        self.distances.nrows()
    }
}

/// Resolve ε for a distance matrix.
pub fn choose_bandwidth(distances: &DMatrix<f64>, policy: &BandwidthPolicy) -> Result<f64> {
    let n = distances.nrows();
    let mut off: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| distances[(i, j)]).collect();
    off.sort_by(f64::total_cmp);
    if off.iter().all(|&x| x == 0.0) {
        return Err(Error::DegenerateKernel);
    }
    let base = match policy.epsilon {
        Some(e) => e,
        None => {
            let m = median(&off);
            if m > 0.0 {
                m
            } else {
                // More than half the pairs coincide; fall back to the positive ones.
                let first = off.iter().position(|&x| x > 0.0).unwrap();
                median(&off[first..])
            }
        }
    };
    let eps = base * policy.scale;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidConfig(format!("bandwidth must be positive and finite, got {eps}")));
    }
    Ok(eps)
}

/// Gaussian kernel of precomputed squared distances.
pub fn kernel_from_distances(distances: DMatrix<f64>, policy: &BandwidthPolicy) -> Result<KernelMatrix> {
    let n = distances.nrows();
    if n < 3 {
        return Err(Error::InvalidDataset(format!("kernel needs at least 3 ensembles, got {n}")));
    }
    let eps = choose_bandwidth(&distances, policy)?;
    // Entries are floored at the smallest normal double so they stay in (0, 1].
    let similarities = distances.map(|d2| (-d2.max(0.0) / eps).exp().max(f64::MIN_POSITIVE));
    Ok(KernelMatrix {
        distances,
        similarities,
        bandwidth: eps,
    })
}

pub fn build_kernel(stats: &[EnsembleStats], policy: &BandwidthPolicy) -> Result<KernelMatrix> {
    if stats.len() < 3 {
        return Err(Error::InvalidDataset(format!(
            "kernel needs at least 3 ensembles, got {}",
            stats.len()
        )));
    }
    let d = stats[0].dim();
    if let Some(bad) = stats.iter().find(|s| s.dim() != d) {
        return Err(Error::DimensionMismatch(d, bad.dim()));
    }
    kernel_from_distances(distance_matrix(stats)?, policy)
}
