//! Open transverse-field Ising chain,
//!
//! ```text
//! H = -λ Σ_{j=0}^{L-2} σˣ_j σˣ_{j+1} - Σ_{j=0}^{L-1} σᶻ_j
//! ```
//!
//! in the computational basis where bit `j` of the basis index is 0 for spin
//! up (`σᶻ = +1`) and 1 for spin down. The ground state is found by Lanczos
//! with full reorthogonalization started from the all-up configuration; `H`
//! conserves `Π σᶻ`, so the Krylov space stays in the even-parity sector that
//! holds the ground state.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::store::{Alphabet, Dataset, Snapshot, SnapshotEnsemble};

pub const MAX_SITES: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfimConfig {
    pub length: usize,
    pub lambdas: Vec<f64>,
    pub shots: usize,
    pub seed: u64,
}

impl TfimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(4..=MAX_SITES).contains(&self.length) {
            return Err(Error::InvalidConfig(format!("chain length {} outside 4..={MAX_SITES}", self.length)));
        }
        if self.shots < 2 {
            return Err(Error::InvalidConfig("need at least 2 shots per setting".into()));
        }
        if self.lambdas.iter().any(|&l| !(l.is_finite() && l >= 0.0)) {
            return Err(Error::InvalidConfig("lambda values must be finite and nonnegative".into()));
        }
        if self.lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("lambda values must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundState {
    pub energy: f64,
    /// Real, normalized, largest-magnitude entry positive.
    pub amplitudes: Vec<f64>,
}

/// `out = H v` without storing `H`.
pub fn hamiltonian_apply(length: usize, lambda: f64, v: &[f64], out: &mut [f64]) {
    let l = length as i64;
    for (x, o) in out.iter_mut().enumerate() {
        let downs = i64::from((x as u64).count_ones());
        let mut acc = -((l - 2 * downs) as f64) * v[x];
        for j in 0..length - 1 {
            acc -= lambda * v[x ^ (0b11 << j)];
        }
        *o = acc;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Lowest eigenpair of a real symmetric operator in the Krylov space of
/// `start`. Residual tolerance is relative to `max(1, |E|)`.
pub fn lanczos_lowest<F>(apply: F, start: &[f64], max_iter: usize, tol: f64) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let dim = start.len();
    let norm = dot(start, start).sqrt();
    if norm == 0.0 {
        return Err(Error::NumericalFailure("zero Lanczos start vector".into()));
    }
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / norm).collect()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    let max_iter = max_iter.min(dim).max(1);
    let mut last_residual = f64::INFINITY;

    for k in 0..max_iter {
        apply(&basis[k], &mut w);
        let alpha = dot(&basis[k], &w);
        alphas.push(alpha);
        axpy(-alpha, &basis[k], &mut w);
        if k > 0 {
            axpy(-betas[k - 1], &basis[k - 1], &mut w);
        }
        // two passes of Gram–Schmidt against the whole basis
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let beta = dot(&w, &w).sqrt();

        let check = beta < 1e-13 || k + 1 == max_iter || k < 8 || k % 4 == 3;
        if check {
            let m = alphas.len();
            let t = DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    alphas[i]
                } else if i + 1 == j {
                    betas[i]
                } else if j + 1 == i {
                    betas[j]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let (idx, theta) = eig
                .eigenvalues
                .iter()
                .copied()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            let y = eig.eigenvectors.column(idx);
            last_residual = beta * y[m - 1].abs();
            if beta < 1e-13 || last_residual < tol * theta.abs().max(1.0) {
                let mut x = vec![0.0; dim];
                for (q, &c) in basis.iter().zip(y.iter()) {
                    axpy(c, q, &mut x);
                }
                let n = dot(&x, &x).sqrt();
                x.iter_mut().for_each(|v| *v /= n);
                return Ok((theta, x));
            }
        }
        if k + 1 == max_iter {
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|x| x / beta).collect());
    }
    Err(Error::NumericalFailure(format!(
        "Lanczos did not converge in {max_iter} iterations (residual {last_residual:.3e})"
    )))
}

pub fn tfim_ground_state(length: usize, lambda: f64) -> Result<GroundState> {
    if !(2..=MAX_SITES).contains(&length) {
        return Err(Error::InvalidConfig(format!("chain length {length} outside 2..={MAX_SITES}")));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be nonnegative, got {lambda}")));
    }
    let dim = 1usize << length;
    let mut start = vec![0.0; dim];
    start[0] = 1.0;
    let (energy, mut amplitudes) = lanczos_lowest(|v, out| hamiltonian_apply(length, lambda, v, out), &start, 400, 1e-12)?;
    let mut big = 0;
    for i in 1..dim {
        if amplitudes[i].abs() > amplitudes[big].abs() {
            big = i;
        }
    }
    if amplitudes[big] < 0.0 {
        amplitudes.iter_mut().for_each(|a| *a = -*a);
    }
    Ok(GroundState { energy, amplitudes })
}

/// Spin configuration of basis index `x` as a `1 x L` snapshot.
pub fn basis_snapshot(x: usize, length: usize) -> Snapshot {
    let values = (0..length).map(|j| if x >> j & 1 == 1 { -1 } else { 1 }).collect();
    Snapshot::chain(values).expect("non-empty chain")
}

/// `m` Born-rule draws in the Z basis.
pub fn tfim_sample<R: Rng>(amplitudes: &[f64], length: usize, m: usize, rng: &mut R) -> Result<Vec<Snapshot>> {
    if amplitudes.len() != 1 << length {
        return Err(Error::DimensionMismatch(amplitudes.len(), 1 << length));
    }
    let mut cdf = Vec::with_capacity(amplitudes.len());
    let mut acc = 0.0;
    for a in amplitudes {
        acc += a * a;
        cdf.push(acc);
    }
    if acc.is_nan() || acc <= 0.0 {
        return Err(Error::NumericalFailure("zero-norm state".into()));
    }
    Ok((0..m)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let x = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            basis_snapshot(x, length)
        })
        .collect())
}

/// Ground states across the λ grid, sampled with one stream per setting.
pub fn tfim_sweep(cfg: &TfimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let ensembles = cfg
        .lambdas
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let gs = tfim_ground_state(cfg.length, lambda)?;
            let mut rng = stream_rng(cfg.seed, Stream::Setting(i as u64));
            let shots = tfim_sample(&gs.amplitudes, cfg.length, cfg.shots, &mut rng)?;
            SnapshotEnsemble::new(lambda, format!("lambda={lambda}"), shots)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = BTreeMap::new();
    meta.insert("model".into(), "tfim-open-chain".into());
    meta.insert("length".into(), cfg.length.to_string());
    meta.insert("shots".into(), cfg.shots.to_string());
    meta.insert("seed".into(), cfg.seed.to_string());
    Dataset::new("lambda", Alphabet::SpinPm1, None, ensembles, meta)
}
