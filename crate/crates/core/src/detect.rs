//! Critical-parameter extraction from the leading diffusion coordinate.
//!
//! The primary detector fits `Φ_1(p) = a·tanh((p - p_c)/w) + b` by damped
//! Gauss–Newton with an analytic Jacobian. A k-means split of the embedded
//! points is the secondary detector. Uncertainty comes from resampling
//! snapshots within each ensemble and re-running the whole pipeline.

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::kmeans;
use crate::embed::{embed_dataset, EmbedConfig, EmbeddingResult};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::store::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "tanh-fit")]
    TanhFit,
    #[serde(rename = "cluster-gap")]
    ClusterGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub method: Method,
    pub p_c: f64,
    pub width: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Bootstrap standard deviation of `p_c`, 0 until a bootstrap ran.
    pub p_c_stderr: f64,
    /// Linearized fit-covariance standard error (tanh fit only).
    pub p_c_fit_stderr: Option<f64>,
    pub fit_rss: f64,
    pub n_bootstrap: usize,
    pub n_bootstrap_failed: usize,
    pub iterations: usize,
}

const MAX_ITER: usize = 500;
const GRAD_TOL: f64 = 1e-10;

#[derive(Clone, Copy)]
struct Model {
    theta: Vector4<f64>, // a, p_c, w, b
}

impl Model {
    fn eval(&self, p: f64) -> f64 {
        let [a, pc, w, b] = [self.theta[0], self.theta[1], self.theta[2], self.theta[3]];
        a * ((p - pc) / w).tanh() + b
    }

    /// Partial derivatives of the model value.
    fn grad(&self, p: f64) -> Vector4<f64> {
        let [a, pc, w, _] = [self.theta[0], self.theta[1], self.theta[2], self.theta[3]];
        let u = (p - pc) / w;
        let t = u.tanh();
        let sech2 = 1.0 - t * t;
        Vector4::new(t, -a * sech2 / w, -a * sech2 * u / w, 1.0)
    }
}

fn rss(m: &Model, pts: &[(f64, f64)]) -> f64 {
    pts.iter().map(|&(p, y)| (y - m.eval(p)).powi(2)).sum()
}

/// Normal equations `JᵀJ` and `Jᵀr` at the current parameters.
fn normal_equations(m: &Model, pts: &[(f64, f64)]) -> (Matrix4<f64>, Vector4<f64>) {
    let mut jtj = Matrix4::zeros();
    let mut jtr = Vector4::zeros();
    for &(p, y) in pts {
        let g = m.grad(p);
        jtj += g * g.transpose();
        jtr += g * (y - m.eval(p));
    }
    (jtj, jtr)
}

fn initial_guess(pts: &[(f64, f64)]) -> Model {
    let n = pts.len() as f64;
    let b = pts.iter().map(|x| x.1).sum::<f64>() / n;
    let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x.1), hi.max(x.1)));
    let slope = pts[pts.len() - 1].1 - pts[0].1;
    let a = 0.5 * (hi - lo) * if slope < 0.0 { -1.0 } else { 1.0 };
    let p_min = pts[0].0;
    let p_max = pts[pts.len() - 1].0;
    let mut pc = 0.5 * (p_min + p_max);
    for w in pts.windows(2) {
        let (y0, y1) = (w[0].1 - b, w[1].1 - b);
        if y0 == 0.0 {
            pc = w[0].0;
            break;
        }
        if y0 * y1 < 0.0 {
            pc = w[0].0 + (w[1].0 - w[0].0) * y0 / (y0 - y1);
            break;
        }
    }
    Model {
        theta: Vector4::new(a, pc, 0.25 * (p_max - p_min), b),
    }
}

fn report_from(m: &Model, pts: &[(f64, f64)], iterations: usize) -> TransitionReport {
    let mut theta = m.theta;
    if theta[2] < 0.0 {
        // a·tanh(u/w) is invariant under (a, w) -> (-a, -w)
        theta[0] = -theta[0];
        theta[2] = -theta[2];
    }
    let m = Model { theta };
    let r = rss(&m, pts);
    let dof = pts.len().saturating_sub(4).max(1) as f64;
    let (jtj, _) = normal_equations(&m, pts);
    let fit_se = jtj.try_inverse().map(|c| (c[(1, 1)] * r / dof).max(0.0).sqrt());
    TransitionReport {
        method: Method::TanhFit,
        p_c: theta[1],
        width: theta[2],
        amplitude: theta[0],
        offset: theta[3],
        p_c_stderr: 0.0,
        p_c_fit_stderr: fit_se,
        fit_rss: r,
        n_bootstrap: 0,
        n_bootstrap_failed: 0,
        iterations,
    }
}

fn polish(model: &mut Model, cost: &mut f64, gradient: &mut f64, pts: &[(f64, f64)]) {
    for _ in 0..20 {
        let (jtj, jtr) = normal_equations(model, pts);
        let Some(step) = jtj.cholesky().map(|c| c.solve(&jtr)) else {
            return;
        };
        let trial = Model {
            theta: model.theta + step,
        };
        let c = rss(&trial, pts);
        let g = normal_equations(&trial, pts).1.norm();
        if trial.theta[2] == 0.0 || c.is_nan() || g.is_nan() || c > *cost * (1.0 + 1e-12) || g >= *gradient {
            return;
        }
        *model = trial;
        *cost = c.min(*cost);
        *gradient = g;
    }
}

struct Descent {
    model: Model,
    cost: f64,
    gradient: f64,
    iterations: usize,
    converged: bool,
}

/// Levenberg-damped Gauss-Newton from one starting point.
fn descend(start: Model, pts: &[(f64, f64)]) -> Descent {
    let mut model = start;
    let mut cost = rss(&model, pts);
    let mut damping = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    let mut gradient = f64::INFINITY;
    while iterations < MAX_ITER {
        let (jtj, jtr) = normal_equations(&model, pts);
        gradient = jtr.norm();
        if gradient < GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let mut improved = false;
        while damping < 1e20 {
            let mut lhs = jtj;
            for i in 0..4 {
                lhs[(i, i)] += damping * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = lhs.cholesky().map(|c| c.solve(&jtr)) else {
                damping *= 10.0;
                continue;
            };
            let trial = Model {
                theta: model.theta + step,
            };
            let c = rss(&trial, pts);
            if trial.theta[2] != 0.0 && c.is_finite() && c < cost {
                model = trial;
                cost = c;
                damping = (damping / 3.0).max(1e-15);
                improved = true;
                break;
            }
            damping *= 4.0;
        }
        if !improved {
            // No damped step lowers the cost at machine precision. Polish
            // with plain Gauss-Newton steps while they shrink the gradient,
            // then judge stationarity relative to the data scale.
            polish(&mut model, &mut cost, &mut gradient, pts);
            let (jtj, _) = normal_equations(&model, pts);
            let scale = jtj.diagonal().iter().map(|x| x.sqrt()).fold(0.0, f64::max) * cost.sqrt().max(f64::EPSILON);
            converged = gradient < GRAD_TOL || gradient <= 1e-10 * scale;
            break;
        }
    }
    Descent {
        model,
        cost,
        gradient,
        iterations,
        converged,
    }
}

/// The prescribed start, then the same start with the width taken from the
/// slope at the crossing, then with a sixteenth of the range.
fn starting_points(pts: &[(f64, f64)]) -> Vec<Model> {
    let base = initial_guess(pts);
    let [a, pc, w, b] = [base.theta[0], base.theta[1], base.theta[2], base.theta[3]];
    let mut starts = vec![base];
    let i = pts.partition_point(|x| x.0 <= pc).clamp(1, pts.len() - 1);
    let slope = (pts[i].1 - pts[i - 1].1) / (pts[i].0 - pts[i - 1].0);
    let w_slope = (a / slope).abs();
    if w_slope.is_finite() && w_slope > 0.0 {
        starts.push(Model {
            theta: Vector4::new(a, pc, w_slope, b),
        });
    }
    starts.push(Model {
        theta: Vector4::new(a, pc, w / 4.0, b),
    });
    starts
}

/// Least-squares tanh fit to `(parameter, Φ_1)` points.
pub fn fit_tanh(points: &[(f64, f64)]) -> Result<TransitionReport> {
    if points.len() < 5 {
        return Err(Error::InvalidDataset(format!("tanh fit needs at least 5 points, got {}", points.len())));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidDataset("tanh fit needs distinct parameters".into()));
    }
    if pts.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::InvalidDataset("non-finite point in tanh fit".into()));
    }
    let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x.1), hi.max(x.1)));
    if hi == lo {
        return Err(Error::NoTransition("leading coordinate is constant".into()));
    }

    // The prescribed start first; two more widths guard against descending
    // into a step function, where every point sits in a flat tail.
    let mut best: Option<Descent> = None;
    for start in starting_points(&pts) {
        let d = descend(start, &pts);
        let better = match &best {
            None => true,
            Some(b) => (d.converged && !b.converged) || (d.converged == b.converged && d.cost < b.cost),
        };
        if better {
            best = Some(d);
        }
    }
    let best = best.expect("at least one start");
    let report = report_from(&best.model, &pts, best.iterations);
    if !best.converged {
        return Err(Error::NonConvergence {
            iterations: best.iterations,
            gradient: best.gradient,
            best: Box::new(report),
        });
    }
    let resid_sd = (report.fit_rss / (pts.len() - 4) as f64).sqrt();
    if report.amplitude.abs() <= 3.0 * resid_sd {
        return Err(Error::NoTransition(format!(
            "|amplitude| {:.3e} within 3x residual deviation {resid_sd:.3e}",
            report.amplitude.abs()
        )));
    }
    let (p_min, p_max) = (pts[0].0, pts[pts.len() - 1].0);
    if report.p_c < p_min - report.width || report.p_c > p_max + report.width {
        return Err(Error::NoTransition(format!(
            "fitted p_c {:.4} (width {:.4}) lies outside the sweep [{p_min}, {p_max}]",
            report.p_c, report.width
        )));
    }
    Ok(report)
}

/// Two-way (or k-way) k-means split of the embedded points; `p_c` is the
/// midpoint of the adjacent-parameter pair where the labels change. When the
/// labels change more than once, the pair with the largest jump in embedded
/// space wins.
pub fn cluster_gap_detect(emb: &EmbeddingResult, k: usize, restarts: usize, seed: u64) -> Result<TransitionReport> {
    let n = emb.parameters.len();
    if k < 2 || n < 2 * k {
        return Err(Error::InvalidConfig(format!("cluster detection needs k >= 2 and n >= 2k (k = {k}, n = {n})")));
    }
    let points: Vec<Vec<f64>> = emb.coordinates.row_iter().map(|r| r.iter().copied().collect()).collect();
    let km = kmeans(&points, k, restarts, seed);
    let crossings: Vec<usize> = (0..n - 1).filter(|&i| km.labels[i] != km.labels[i + 1]).collect();
    if crossings.len() > 2 * (k - 1) {
        return Err(Error::AmbiguousClustering {
            crossings: crossings.len(),
        });
    }
    let jump = |i: usize| -> f64 {
        points[i].iter().zip(&points[i + 1]).map(|(a, b)| (a - b) * (a - b)).sum()
    };
    let mut best = crossings[0];
    for &c in &crossings[1..] {
        if jump(c) > jump(best) {
            best = c;
        }
    }
    let (p0, p1) = (emb.parameters[best], emb.parameters[best + 1]);
    let centroid_phi1 = |label: usize| km.centroids[label][0];
    let (low, high) = (centroid_phi1(km.labels[best]), centroid_phi1(km.labels[best + 1]));
    Ok(TransitionReport {
        method: Method::ClusterGap,
        p_c: 0.5 * (p0 + p1),
        width: 0.5 * (p1 - p0),
        amplitude: 0.5 * (high - low),
        offset: 0.5 * (high + low),
        p_c_stderr: 0.0,
        p_c_fit_stderr: None,
        fit_rss: km.inertia,
        n_bootstrap: 0,
        n_bootstrap_failed: 0,
        iterations: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub replicates: usize,
    /// Successful tanh-fit `p_c` values, sorted.
    pub tanh: Vec<f64>,
    pub tanh_failed: usize,
    /// Successful cluster-gap `p_c` values, sorted.
    pub cluster: Vec<f64>,
    pub cluster_failed: usize,
}

/// Sample standard deviation; order-independent because the input is sorted
/// before summation.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

impl BootstrapSummary {
    pub fn tanh_stderr(&self) -> f64 {
        sample_sd(&self.tanh)
    }

    pub fn cluster_stderr(&self) -> f64 {
        sample_sd(&self.cluster)
    }
}

/// Resample snapshots within every ensemble, with replacement. Replicate `r`
/// draws ensemble `i` from `Bootstrap { r, i }`.
pub fn resample_dataset(ds: &Dataset, seed: u64, replicate: u64) -> Result<Dataset> {
    let ensembles = ds
        .ensembles()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut rng = stream_rng(
                seed,
                Stream::Bootstrap {
                    replicate,
                    ensemble: i as u64,
                },
            );
            let m = e.count();
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
            e.resampled(&idx)
        })
        .collect::<Result<Vec<_>>>()?;
    ds.with_ensembles(ensembles)
}

/// Run `replicates` bootstrap replicates of embed + both detectors.
pub fn bootstrap(ds: &Dataset, cfg: &EmbedConfig, replicates: usize, seed: u64, kmeans_restarts: usize) -> Result<BootstrapSummary> {
    if replicates < 20 {
        return Err(Error::InvalidConfig(format!("bootstrap needs at least 20 replicates, got {replicates}")));
    }
    let outcomes: Vec<(Option<f64>, Option<f64>)> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let Ok(rep) = resample_dataset(ds, seed, r) else {
                return (None, None);
            };
            match embed_dataset(&rep, cfg) {
                Ok(emb) => (
                    fit_tanh(&emb.result.leading_points()).ok().map(|t| t.p_c),
                    cluster_gap_detect(&emb.result, 2, kmeans_restarts, seed ^ r).ok().map(|c| c.p_c),
                ),
                Err(_) => (None, None),
            }
        })
        .collect();
    let mut tanh: Vec<f64> = outcomes.iter().filter_map(|o| o.0).collect();
    let mut cluster: Vec<f64> = outcomes.iter().filter_map(|o| o.1).collect();
    tanh.sort_by(f64::total_cmp);
    cluster.sort_by(f64::total_cmp);
    Ok(BootstrapSummary {
        replicates,
        tanh_failed: replicates - tanh.len(),
        cluster_failed: replicates - cluster.len(),
        tanh,
        cluster,
    })
}

/// Bootstrap standard error of the tanh-fit `p_c`.
pub fn bootstrap_pc(ds: &Dataset, cfg: &EmbedConfig, replicates: usize, seed: u64) -> Result<f64> {
    let s = bootstrap(ds, cfg, replicates, seed, 50)?;
    if 2 * s.tanh_failed > replicates {
        return Err(Error::UnstableDetection {
            failed: s.tanh_failed,
            total: replicates,
        });
    }
    Ok(s.tanh_stderr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn tanh_points(a: f64, pc: f64, w: f64, b: f64) -> Vec<(f64, f64)> {
        (2..=20).map(|i| i as f64 * 0.1).map(|p| (p, a * ((p - pc) / w).tanh() + b)).collect()
    }

    #[test]
    fn noiseless_refit() {
        let r = fit_tanh(&tanh_points(0.7, 1.0, 0.2, -0.1)).unwrap();
        assert_abs_diff_eq!(r.amplitude, 0.7, epsilon = 1e-6);
        assert_abs_diff_eq!(r.p_c, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.width, 0.2, epsilon = 1e-6);
        assert_abs_diff_eq!(r.offset, -0.1, epsilon = 1e-6);
        assert_eq!(r.method, Method::TanhFit);
    }

    #[test]
    fn sign_flip_negates_amplitude() {
        let up = fit_tanh(&tanh_points(0.7, 1.0, 0.2, -0.1)).unwrap();
        let down = fit_tanh(&tanh_points(-0.7, 1.0, 0.2, -0.1)).unwrap();
        assert_abs_diff_eq!(down.p_c, up.p_c, epsilon = 1e-8);
        assert_abs_diff_eq!(down.width, up.width, epsilon = 1e-8);
        assert_abs_diff_eq!(down.amplitude, -up.amplitude, epsilon = 1e-8);
    }

    #[test]
    fn constant_is_no_transition() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 0.3)).collect();
        assert!(matches!(fit_tanh(&pts), Err(Error::NoTransition(_))));
    }

    #[test]
    fn too_few_points() {
        assert!(fit_tanh(&[(0.0, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, 4.0)]).is_err());
        assert!(fit_tanh(&[(0.0, 1.0), (0.0, 2.0), (2.0, 3.0), (3.0, 4.0), (4.0, 1.0)]).is_err());
    }

    fn fake_embedding(params: Vec<f64>, phi: Vec<f64>) -> EmbeddingResult {
        let n = params.len();
        EmbeddingResult {
            parameters: params,
            coordinates: DMatrix::from_column_slice(n, 1, &phi),
            eigenvalues: vec![0.9],
            eigenvectors: DMatrix::from_column_slice(n, 1, &phi),
            stationary: vec![1.0 / n as f64; n],
            alpha: Some(1.0),
            diffusion_time: 1.0,
        }
    }

    #[test]
    fn cluster_gap_midpoint() {
        let params: Vec<f64> = (1..=10).map(f64::from).collect();
        let phi = params.iter().map(|&p| if p <= 5.0 { -1.0 } else { 1.0 }).collect();
        let r = cluster_gap_detect(&fake_embedding(params, phi), 2, 50, 3).unwrap();
        assert_eq!(r.p_c, 5.5);
        assert_eq!(r.method, Method::ClusterGap);
        assert!(r.width > 0.0);
    }

    #[test]
    fn cluster_gap_alternating_is_ambiguous() {
        let params: Vec<f64> = (1..=10).map(f64::from).collect();
        let phi = (0..10).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        assert!(matches!(
            cluster_gap_detect(&fake_embedding(params, phi), 2, 50, 3),
            Err(Error::AmbiguousClustering { crossings: 9 })
        ));
    }
}
