//! Brute-force reference implementations shared by the integration tests.
//! None of these call into the library code path they are compared against.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// One-sided Jacobi SVD: returns `(U, σ, V)` with `A = U diag(σ) Vᵀ`,
/// singular values sorted descending.
pub fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let mut u = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = (0..m).map(|i| u[(i, p)] * u[(i, p)]).sum();
                let beta: f64 = (0..m).map(|i| u[(i, q)] * u[(i, q)]).sum();
                let gamma: f64 = (0..m).map(|i| u[(i, p)] * u[(i, q)]).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    u[(i, p)] = c * x - s * y;
                    u[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<(f64, usize)> = (0..n)
        .map(|j| ((0..m).map(|i| u[(i, j)] * u[(i, j)]).sum::<f64>().sqrt(), j))
        .collect();
    sigma.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut uu = DMatrix::zeros(m, n);
    let mut vv = DMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &(sv, j)) in sigma.iter().enumerate() {
        s.push(sv);
        for i in 0..m {
            uu[(i, k)] = if sv > 0.0 { u[(i, j)] / sv } else { 0.0 };
        }
        for i in 0..n {
            vv[(i, k)] = v[(i, j)];
        }
    }
    (uu, s, vv)
}

/// Pseudo-inverse keeping singular values `>= rel_tol * σ_max`, at most
/// `cap` of them.
pub fn oracle_pinv(a: &DMatrix<f64>, rel_tol: f64, cap: usize) -> (DMatrix<f64>, usize) {
    let (u, s, v) = jacobi_svd(a);
    let smax = s.first().copied().unwrap_or(0.0);
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    let mut kept = 0;
    if smax == 0.0 {
        return (out, 0);
    }
    for (k, &sv) in s.iter().enumerate() {
        if sv < rel_tol * smax || kept == cap {
            break;
        }
        out += v.column(k) * u.column(k).transpose() / sv;
        kept += 1;
    }
    (out, kept)
}

/// Two-pass sample covariance with the `m - 1` normalizer.
pub fn oracle_covariance(vectors: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let m = vectors.len();
    let d = vectors[0].len();
    let mut mean = DVector::zeros(d);
    for v in vectors {
        for k in 0..d {
            mean[k] += v[k];
        }
    }
    mean /= m as f64;
    let mut c = DMatrix::zeros(d, d);
    for v in vectors {
        for a in 0..d {
            for b in 0..d {
                c[(a, b)] += (v[a] - mean[a]) * (v[b] - mean[b]);
            }
        }
    }
    (mean, c / (m as f64 - 1.0))
}

fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Single-site operator on site `j` of an `l`-site chain, bit `j` of the
/// basis index being the site's state.
fn site_operator(op: &DMatrix<f64>, j: usize, l: usize) -> DMatrix<f64> {
    // basis index x = Σ b_k 2^k, so the most significant factor is site l-1
    let mut out = DMatrix::identity(1, 1);
    for k in (0..l).rev() {
        let f = if k == j { op.clone() } else { DMatrix::identity(2, 2) };
        out = kron(&out, &f);
    }
    out
}

/// Dense open-chain TFIM Hamiltonian from Kronecker products of Pauli
/// matrices, with bit 0 meaning spin up.
pub fn dense_tfim(l: usize, lambda: f64) -> DMatrix<f64> {
    let sx = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let sz = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let dim = 1 << l;
    let mut h = DMatrix::zeros(dim, dim);
    for j in 0..l - 1 {
        h -= lambda * site_operator(&sx, j, l) * site_operator(&sx, j + 1, l);
    }
    for j in 0..l {
        h -= site_operator(&sz, j, l);
    }
    h
}

pub fn dense_ground(l: usize, lambda: f64) -> (f64, DVector<f64>) {
    let eig = nalgebra::SymmetricEigen::new(dense_tfim(l, lambda));
    let (i, e) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    (e, eig.eigenvectors.column(i).into_owned())
}

/// Energy of a periodic 2x2 Ising configuration, counting every site's right
/// and down bond (state bit `r*2 + c` set means spin down).
pub fn ising2_energy(state: usize) -> i64 {
    let s = |r: usize, c: usize| if state >> (r * 2 + c) & 1 == 1 { -1i64 } else { 1 };
    let mut e = 0;
    for r in 0..2 {
        for c in 0..2 {
            e -= s(r, c) * (s(r, (c + 1) % 2) + s((r + 1) % 2, c));
        }
    }
    e
}

/// Boltzmann weights of all 16 states of the 2x2 lattice, normalized.
pub fn ising2_distribution(t: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..16).map(|s| (-(ising2_energy(s) as f64) / t).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

pub fn spins_to_state(spins: &[i8]) -> usize {
    spins.iter().enumerate().map(|(i, &s)| if s < 0 { 1 << i } else { 0 }).sum()
}

/// Pearson χ² statistic and its upper-tail p-value.
pub fn chi_square(observed: &[u64], expected_prob: &[f64]) -> (f64, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut df = 0usize;
    for (&o, &p) in observed.iter().zip(expected_prob) {
        let e = p * n as f64;
        if e > 0.0 {
            stat += (o as f64 - e).powi(2) / e;
            df += 1;
        }
    }
    let dist = ChiSquared::new((df - 1) as f64).unwrap();
    (stat, dist.sf(stat))
}

/// Orthonormal Haar analysis step on a length-`n` vector as an `n x n`
/// matrix: averages in the first half, differences in the second.
pub fn haar_step_matrix(n: usize) -> DMatrix<f64> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n / 2 {
        w[(i, 2 * i)] = r;
        w[(i, 2 * i + 1)] = r;
        w[(n / 2 + i, 2 * i)] = r;
        w[(n / 2 + i, 2 * i + 1)] = -r;
    }
    w
}

/// Full-depth 2D nonstandard Haar transform of a 4x4 grid as an explicit
/// 16x16 matrix acting on the row-major flattening, with outputs ordered
/// approximation, then level 1 (HL, LH, HH), then level 0 (HL, LH, HH).
pub fn haar_4x4_matrix() -> DMatrix<f64> {
    let w1 = haar_step_matrix(4);
    // level 0 transforms the whole grid: vec_row(W X Wᵀ) = (W ⊗ W) vec_row(X)
    let level0 = kron(&w1, &w1);
    // level 1 acts on the top-left 2x2 block only
    let inner = kron(&haar_step_matrix(2), &haar_step_matrix(2));
    let corner = [0usize, 1, 4, 5];
    let mut level1 = DMatrix::identity(16, 16);
    for (a, &i) in corner.iter().enumerate() {
        for (b, &j) in corner.iter().enumerate() {
            level1[(i, j)] = inner[(a, b)];
        }
    }
    let quad = level1 * level0;
    let order: Vec<(usize, usize)> = vec![
        (0, 0),
        (0, 1),
        (1, 0),
        (1, 1),
        (0, 2),
        (0, 3),
        (1, 2),
        (1, 3),
        (2, 0),
        (2, 1),
        (3, 0),
        (3, 1),
        (2, 2),
        (2, 3),
        (3, 2),
        (3, 3),
    ];
    DMatrix::from_fn(16, 16, |i, j| {
        let (r, c) = order[i];
        quad[(r * 4 + c, j)]
    })
}

/// `Σ_k (P^t_ik - P^t_jk)² / π_k` by explicit matrix powers.
pub fn diffusion_distance_sq(p: &DMatrix<f64>, t: u32, i: usize, j: usize) -> f64 {
    let n = p.nrows();
    let mut pt = DMatrix::identity(n, n);
    for _ in 0..t {
        pt = &pt * p;
    }
    // stationary distribution: solve (Pᵀ - I) π = 0 with the last equation
    // replaced by Σπ = 1
    let mut a = p.transpose() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = a.lu().solve(&rhs).expect("irreducible chain");
    (0..n).map(|k| (pt[(i, k)] - pt[(j, k)]).powi(2) / pi[k]).sum()
}

pub fn random_psd<R: Rng>(rng: &mut R, n: usize, rank: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, rank, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let c = &b * b.transpose();
    (&c + c.transpose()) * 0.5
}

/// Parity-alphabet sweep whose occupation probability and nearest-neighbour
/// correlation drift with the parameter, so ensembles differ in both mean
/// and fluctuations.
pub fn random_dataset<R: Rng>(rng: &mut R, n: usize, rows: usize, cols: usize, m: usize) -> snapmap::store::Dataset {
    use snapmap::store::{Alphabet, Dataset, Snapshot, SnapshotEnsemble};
    let ensembles = (0..n)
        .map(|i| {
            let x = i as f64 / (n - 1).max(1) as f64;
            let p = 0.2 + 0.6 * x;
            let copy = 0.8 * (1.0 - x);
            let shots = (0..m)
                .map(|_| {
                    let mut v = vec![0i8; rows * cols];
                    for k in 0..v.len() {
                        v[k] = if k > 0 && rng.random::<f64>() < copy {
                            v[k - 1]
                        } else {
                            i8::from(rng.random::<f64>() < p)
                        };
                    }
                    Snapshot::new(rows, cols, v).unwrap()
                })
                .collect();
            SnapshotEnsemble::new(0.1 * i as f64, format!("s{i}"), shots).unwrap()
        })
        .collect();
    Dataset::new("p", Alphabet::Parity01, None, ensembles, Default::default()).unwrap()
}

/// Gaussian kernel of points on a line, which is positive definite.
pub fn gaussian_point_kernel(points: &[f64], eps: f64) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| (-(points[i] - points[j]).powi(2) / eps).exp())
}
