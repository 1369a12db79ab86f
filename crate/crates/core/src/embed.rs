//! Diffusion-map embedding of a parameter sweep.
//!
//! The ensemble kernel `K` is density-normalized (`K̃ = Q^-α K Q^-α`, `q_i` the
//! row sums), turned into the Markov matrix `P = D⁻¹K̃` and diagonalized
//! through its symmetric conjugate `A = D^½ P D^-½`. With `π = d / Σd` the
//! stationary distribution, right eigenvectors are `ψ_k = v_k / √π`, so each
//! `ψ_k` has unit `π`-weighted norm and the coordinates `Φ_k = μ_k^t ψ_k` over
//! all nontrivial pairs reproduce diffusion distances exactly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{build_kernel, compute_stats, BandwidthPolicy, EnsembleStats, KernelMatrix, RankPolicy};
use crate::store::Dataset;
use crate::wavelet::{preprocess_ensemble, Levels, WaveletConfig};

/// Wavelet options as the user states them; resolved per snapshot shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveletSettings {
    pub enabled: bool,
    /// Level-weight exponent, `1 + d/2` when absent.
    pub exponent: Option<f64>,
    pub levels: Levels,
}

impl Default for WaveletSettings {
    fn default() -> Self {
        WaveletSettings {
            enabled: true,
            exponent: None,
            levels: Levels::Full,
        }
    }
}

impl WaveletSettings {
    pub fn resolve(&self, rows: usize, cols: usize) -> WaveletConfig {
        let base = WaveletConfig::for_shape(rows, cols);
        WaveletConfig {
            enabled: self.enabled,
            weight_exponent: self.exponent.unwrap_or(base.weight_exponent),
            levels: self.levels,
            ..base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub wavelet: WaveletSettings,
    pub rank: RankPolicy,
    pub bandwidth: BandwidthPolicy,
    /// Density normalization exponent.
    pub alpha: f64,
    pub dims: usize,
    /// Diffusion time `t`.
    pub time: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            wavelet: WaveletSettings::default(),
            rank: RankPolicy::default(),
            bandwidth: BandwidthPolicy::default(),
            alpha: 1.0,
            dims: 3,
            time: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingResult {
    pub parameters: Vec<f64>,
    /// `n x d`, column `k` is `Φ_{k+1}`.
    pub coordinates: DMatrix<f64>,
    /// Nontrivial Markov eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Right eigenvectors before eigenvalue scaling, `n x d`.
    pub eigenvectors: DMatrix<f64>,
    pub stationary: Vec<f64>,
    /// Normalization exponent, when the result came from a full kernel.
    pub alpha: Option<f64>,
    pub diffusion_time: f64,
}

impl EmbeddingResult {
    pub fn dims(&self) -> usize {
        self.coordinates.ncols()
    }

    /// Coordinate `k` (1-based, as in `Φ_1`) across all settings.
    pub fn phi(&self, k: usize) -> Vec<f64> {
        self.coordinates.column(k - 1).iter().copied().collect()
    }

    /// `(parameter, Φ_1)` pairs.
    pub fn leading_points(&self) -> Vec<(f64, f64)> {
        self.parameters.iter().copied().zip(self.phi(1)).collect()
    }
}

/// `K̃_ij = K_ij / (q_i^α q_j^α)` with `q` the row sums of `K`.
pub fn normalize_kernel(k: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let q: Vec<f64> = k.row_iter().map(|r| r.sum()).collect();
    assert!(q.iter().all(|&x| x > 0.0), "kernel row sums must be positive");
    if alpha == 0.0 {
        return Ok(k.clone());
    }
    let qa: Vec<f64> = q.iter().map(|x| x.powf(alpha)).collect();
    Ok(DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] / (qa[i] * qa[j])))
}

/// Row-stochastic `P = D⁻¹ K̃`.
pub fn markov_matrix(kt: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = kt.clone();
    for mut row in p.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    p
}

/// Diagonalize the Markov operator of a normalized kernel and build the
/// `dims`-dimensional diffusion coordinates. Only eigenvalues in `(0, 1]`
/// are retained, so fewer than `dims` columns may come back.
pub fn markov_and_eigs(kt: &DMatrix<f64>, parameters: &[f64], dims: usize, time: f64) -> Result<EmbeddingResult> {
    let n = kt.nrows();
    if kt.ncols() != n || parameters.len() != n {
        return Err(Error::DimensionMismatch(n, parameters.len()));
    }
    if dims == 0 || dims > n.saturating_sub(1) {
        return Err(Error::InvalidConfig(format!("embedding dimension {dims} must lie in 1..={}", n.saturating_sub(1))));
    }
    if !(time.is_finite() && time >= 0.0) {
        return Err(Error::InvalidConfig(format!("diffusion time must be nonnegative, got {time}")));
    }
    let deg: Vec<f64> = kt.row_iter().map(|r| r.sum()).collect();
    if deg.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::NumericalFailure(format!("kernel has a non-positive row sum: {deg:?}")));
    }
    let sqrt_deg: Vec<f64> = deg.iter().map(|x| x.sqrt()).collect();
    let mut a = DMatrix::from_fn(n, n, |i, j| kt[(i, j)] / (sqrt_deg[i] * sqrt_deg[j]));
    let at = a.transpose();
    a = (a + at) * 0.5;

    // The trivial eigenvector of A is √d; push it to eigenvalue -2 so it can
    // never be selected, even when the top eigenvalue is degenerate.
    let v0 = DVector::from_iterator(n, sqrt_deg.iter().copied()).normalize();
    let deflated = &a - (&v0 * v0.transpose()) * 3.0;
    let eig = SymmetricEigen::try_new(deflated, 1e-15, 10_000).ok_or_else(|| {
        let (lo, hi) = deg.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        Error::NumericalFailure(format!(
            "symmetric eigensolver did not converge (n = {n}, degree range {lo:.3e}..{hi:.3e}, ratio {:.3e})",
            hi / lo
        ))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let keep: Vec<usize> = order.into_iter().take(dims).filter(|&k| eig.eigenvalues[k] > 0.0).collect();
    if keep.is_empty() {
        return Err(Error::NumericalFailure("no positive nontrivial eigenvalue".into()));
    }

    let total: f64 = deg.iter().sum();
    let stationary: Vec<f64> = deg.iter().map(|x| x / total).collect();
    let mean_p = parameters.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = parameters.iter().map(|p| p - mean_p).collect();

    let d = keep.len();
    let mut psi = DMatrix::zeros(n, d);
    let mut eigenvalues = Vec::with_capacity(d);
    for (col, &k) in keep.iter().enumerate() {
        let mut v: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, k)] / stationary[i].sqrt()).collect();
        fix_sign(&mut v, &centered);
        for (i, x) in v.into_iter().enumerate() {
            psi[(i, col)] = x;
        }
        eigenvalues.push(eig.eigenvalues[k].min(1.0));
    }
    let mut coordinates = psi.clone();
    for (col, mu) in eigenvalues.iter().enumerate() {
        let s = mu.powf(time);
        coordinates.column_mut(col).scale_mut(s);
    }
    Ok(EmbeddingResult {
        parameters: parameters.to_vec(),
        coordinates,
        eigenvalues,
        eigenvectors: psi,
        stationary,
        alpha: None,
        diffusion_time: time,
    })
}

/// Orient `v` to correlate nonnegatively with the centered parameters, or
/// make its largest-magnitude entry positive when the correlation vanishes.
fn fix_sign(v: &mut [f64], centered_params: &[f64]) {
    let corr: f64 = v.iter().zip(centered_params).map(|(a, b)| a * b).sum();
    let flip = if corr.abs() > 1e-12 {
        corr < 0.0
    } else {
        let mut best = 0;
        for i in 1..v.len() {
            if v[i].abs() > v[best].abs() {
                best = i;
            }
        }
        v[best] < 0.0
    };
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Everything produced on the way to the coordinates.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub result: EmbeddingResult,
    pub kernel: KernelMatrix,
    pub normalized: DMatrix<f64>,
    /// Retained covariance rank per ensemble.
    pub ranks: Vec<usize>,
    pub feature_dim: usize,
}

pub fn dataset_stats(ds: &Dataset, cfg: &EmbedConfig) -> Result<Vec<EnsembleStats>> {
    let (rows, cols) = ds.shape();
    let wcfg = cfg.wavelet.resolve(rows, cols);
    let active = ds.active_sites();
    let mask = ds.mask.as_ref().map(|_| active.as_slice());
    ds.ensembles()
        .par_iter()
        .map(|e| {
            let pe = preprocess_ensemble(e, &wcfg, mask)?;
            compute_stats(&pe, &cfg.rank)
        })
        .collect()
}

/// Preprocess, summarize, build the kernel and embed.
pub fn embed_dataset(ds: &Dataset, cfg: &EmbedConfig) -> Result<Embedding> {
    let stats = dataset_stats(ds, cfg)?;
    let kernel = build_kernel(&stats, &cfg.bandwidth)?;
    let normalized = normalize_kernel(&kernel.similarities, cfg.alpha)?;
    let mut result = markov_and_eigs(&normalized, &ds.parameters(), cfg.dims.min(ds.len() - 1), cfg.time)?;
    result.alpha = Some(cfg.alpha);
    Ok(Embedding {
        result,
        kernel,
        normalized,
        ranks: stats.iter().map(|s| s.rank_used).collect(),
        feature_dim: stats[0].dim(),
    })
}
