//! Detection orchestration: run the requested detectors on an embedding,
//! attach bootstrap uncertainties and pick the headline report.

use serde::{Deserialize, Serialize};

use crate::detect::{bootstrap, cluster_gap_detect, fit_tanh, BootstrapSummary, TransitionReport};
use crate::embed::{EmbedConfig, Embedding};
use crate::error::{Error, Result};
use crate::store::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectMethod {
    Tanh,
    Cluster,
    Both,
}

impl std::str::FromStr for DetectMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(DetectMethod::Tanh),
            "cluster" => Ok(DetectMethod::Cluster),
            "both" => Ok(DetectMethod::Both),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?} (tanh, cluster, both)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub method: DetectMethod,
    /// Bootstrap replicates; 0 disables resampling, otherwise at least 20.
    pub bootstrap: usize,
    pub seed: u64,
    pub kmeans_restarts: usize,
    pub clusters: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            method: DetectMethod::Both,
            bootstrap: 50,
            seed: 0,
            kmeans_restarts: 50,
            clusters: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// The report the run stands behind: the tanh fit when it succeeded,
    /// otherwise the cluster split.
    pub headline: TransitionReport,
    pub tanh: Option<TransitionReport>,
    pub cluster: Option<TransitionReport>,
    /// Messages from detectors that were requested but failed.
    pub failures: Vec<String>,
    #[serde(skip)]
    pub bootstrap: Option<BootstrapSummary>,
}

fn attach(report: &mut TransitionReport, values: &[f64], failed: usize, total: usize) {
    report.p_c_stderr = crate::detect::sample_sd(values);
    report.n_bootstrap = total;
    report.n_bootstrap_failed = failed;
}

pub fn detect(ds: &Dataset, emb: &Embedding, embed_cfg: &EmbedConfig, cfg: &DetectConfig) -> Result<Detection> {
    if cfg.bootstrap != 0 && cfg.bootstrap < 20 {
        return Err(Error::InvalidConfig(format!("bootstrap needs 0 or at least 20 replicates, got {}", cfg.bootstrap)));
    }
    let want_tanh = matches!(cfg.method, DetectMethod::Tanh | DetectMethod::Both);
    let want_cluster = matches!(cfg.method, DetectMethod::Cluster | DetectMethod::Both);
    let mut failures = Vec::new();

    let mut tanh = None;
    let mut tanh_err = None;
    if want_tanh {
        match fit_tanh(&emb.result.leading_points()) {
            Ok(r) => tanh = Some(r),
            Err(e) => {
                failures.push(format!("tanh-fit: {e}"));
                tanh_err = Some(e);
            }
        }
    }
    let mut cluster = None;
    let mut cluster_err = None;
    if want_cluster {
        match cluster_gap_detect(&emb.result, cfg.clusters, cfg.kmeans_restarts, cfg.seed) {
            Ok(r) => cluster = Some(r),
            Err(e) => {
                failures.push(format!("cluster-gap: {e}"));
                cluster_err = Some(e);
            }
        }
    }
    if tanh.is_none() && cluster.is_none() {
        return Err(tanh_err.or(cluster_err).expect("at least one detector ran"));
    }

    let mut summary = None;
    if cfg.bootstrap > 0 {
        let s = bootstrap(ds, embed_cfg, cfg.bootstrap, cfg.seed, cfg.kmeans_restarts)?;
        let b = s.replicates;
        if let Some(r) = tanh.as_mut() {
            attach(r, &s.tanh, s.tanh_failed, b);
        }
        if let Some(r) = cluster.as_mut() {
            attach(r, &s.cluster, s.cluster_failed, b);
        }
        let headline_failed = if tanh.is_some() { s.tanh_failed } else { s.cluster_failed };
        if 2 * headline_failed > b {
            return Err(Error::UnstableDetection {
                failed: headline_failed,
                total: b,
            });
        }
        summary = Some(s);
    }

    let headline = tanh.clone().or_else(|| cluster.clone()).expect("checked above");
    Ok(Detection {
        headline,
        tanh,
        cluster,
        failures,
        bootstrap: summary,
    })
}
