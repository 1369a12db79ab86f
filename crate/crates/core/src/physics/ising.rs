//! 2D classical Ising model on a periodic square lattice, `E = -Σ_<ij> s_i s_j`
//! with `J = k_B = 1`.
//!
//! Each site owns the bonds to its right and lower neighbours, so an
//! `L x L` lattice has `2L²` bonds. For `L = 2` the periodic wrap makes those
//! bonds coincide pairwise; energies and updates are all written against the
//! same neighbour list, so the small lattice stays a consistent (doubled
//! coupling) model that can be enumerated exactly.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::store::{Alphabet, Dataset, Snapshot, SnapshotEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IsingAlgorithm {
    Metropolis,
    Wolff,
}

impl std::str::FromStr for IsingAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "metropolis" => Ok(IsingAlgorithm::Metropolis),
            "wolff" => Ok(IsingAlgorithm::Wolff),
            other => Err(Error::InvalidConfig(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingConfig {
    pub side: usize,
    pub temperatures: Vec<f64>,
    pub shots: usize,
    pub burn_in: usize,
    /// Sweeps between stored snapshots.
    pub decorrelation: usize,
    pub seed: u64,
    pub algorithm: IsingAlgorithm,
}

impl IsingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side < 4 {
            return Err(Error::InvalidConfig(format!("lattice side {} < 4", self.side)));
        }
        if self.shots < 2 {
            return Err(Error::InvalidConfig("need at least 2 shots per setting".into()));
        }
        if self.temperatures.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
            return Err(Error::InvalidConfig("temperatures must be positive".into()));
        }
        if self.temperatures.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("temperatures must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Metropolis acceptance `min(1, e^(-ΔE/T))`.
pub fn acceptance_probability(delta_e: f64, temperature: f64) -> f64 {
    (-delta_e / temperature).exp().min(1.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsingLattice {
    side: usize,
    spins: Vec<i8>,
    neighbors: Vec<[usize; 4]>,
}

impl IsingLattice {
    pub fn all_up(side: usize) -> Self {
        assert!(side >= 2, "lattice side must be at least 2");
        let n = side * side;
        let neighbors = (0..n)
            .map(|i| {
                let (r, c) = (i / side, i % side);
                [
                    r * side + (c + 1) % side,
                    r * side + (c + side - 1) % side,
                    ((r + 1) % side) * side + c,
                    ((r + side - 1) % side) * side + c,
                ]
            })
            .collect();
        IsingLattice {
            side,
            spins: vec![1; n],
            neighbors,
        }
    }

    pub fn from_spins(side: usize, spins: Vec<i8>) -> Self {
        let mut l = Self::all_up(side);
        assert_eq!(spins.len(), side * side);
        l.spins = spins;
        l
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn sites(&self) -> usize {
        self.spins.len()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn energy(&self) -> i64 {
        (0..self.sites())
            .map(|i| {
                let s = i64::from(self.spins[i]);
                let [right, _, down, _] = self.neighbors[i];
                -s * (i64::from(self.spins[right]) + i64::from(self.spins[down]))
            })
            .sum()
    }

    pub fn magnetization(&self) -> i64 {
        self.spins.iter().map(|&s| i64::from(s)).sum()
    }

    /// Energy change from flipping site `i`.
    pub fn delta_e(&self, i: usize) -> i64 {
        let local: i64 = self.neighbors[i].iter().map(|&j| i64::from(self.spins[j])).sum();
        2 * i64::from(self.spins[i]) * local
    }

    /// One Metropolis proposal at a uniformly chosen site.
    pub fn metropolis_step<R: Rng>(&mut self, temperature: f64, rng: &mut R) -> bool {
        let i = rng.random_range(0..self.sites());
        let de = self.delta_e(i);
        if de <= 0 || rng.random::<f64>() < acceptance_probability(de as f64, temperature) {
            self.spins[i] = -self.spins[i];
            true
        } else {
            false
        }
    }

    pub fn metropolis_sweep<R: Rng>(&mut self, temperature: f64, rng: &mut R) {
        for _ in 0..self.sites() {
            self.metropolis_step(temperature, rng);
        }
    }

    /// Grow and flip one Wolff cluster; returns its size.
    pub fn wolff_cluster<R: Rng>(&mut self, temperature: f64, rng: &mut R) -> usize {
        let p_add = 1.0 - (-2.0 / temperature).exp();
        let seed = rng.random_range(0..self.sites());
        let s0 = self.spins[seed];
        self.spins[seed] = -s0;
        let mut stack = vec![seed];
        let mut size = 1;
        while let Some(i) = stack.pop() {
            for k in 0..4 {
                let j = self.neighbors[i][k];
                if self.spins[j] == s0 && rng.random::<f64>() < p_add {
                    self.spins[j] = -s0;
                    stack.push(j);
                    size += 1;
                }
            }
        }
        size
    }

    /// Flip `clusters` Wolff clusters; returns the number of spins flipped.
    pub fn wolff_sweep<R: Rng>(&mut self, temperature: f64, clusters: usize, rng: &mut R) -> usize {
        (0..clusters).map(|_| self.wolff_cluster(temperature, rng)).sum()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot::new(self.side, self.side, self.spins.clone()).expect("square lattice")
    }
}

/// A lattice evolving at fixed temperature under one update rule.
///
/// A Wolff sweep flips a fixed number of clusters, chosen during burn-in so
/// that a sweep flips about one lattice's worth of spins on average. Stopping
/// each sweep once `N` spins have flipped would make the stopping time depend
/// on the cluster sizes and bias the stored states toward order.
#[derive(Debug, Clone)]
pub struct IsingChain {
    pub lattice: IsingLattice,
    pub algorithm: IsingAlgorithm,
    pub temperature: f64,
    clusters_per_sweep: usize,
}

impl IsingChain {
    /// Start all-up and run `burn_in` sweeps (at least one for Wolff, to
    /// calibrate the cluster count).
    pub fn equilibrate<R: Rng>(side: usize, algorithm: IsingAlgorithm, temperature: f64, burn_in: usize, rng: &mut R) -> Self {
        let mut lattice = IsingLattice::all_up(side);
        let n = lattice.sites();
        let clusters_per_sweep = match algorithm {
            IsingAlgorithm::Metropolis => {
                for _ in 0..burn_in {
                    lattice.metropolis_sweep(temperature, rng);
                }
                0
            }
            IsingAlgorithm::Wolff => {
                let (mut flipped, mut clusters) = (0usize, 0usize);
                for _ in 0..burn_in.max(1) {
                    let mut this_sweep = 0;
                    while this_sweep < n {
                        this_sweep += lattice.wolff_cluster(temperature, rng);
                        clusters += 1;
                    }
                    flipped += this_sweep;
                }
                let mean_size = flipped as f64 / clusters as f64;
                ((n as f64 / mean_size).round() as usize).max(1)
            }
        };
        IsingChain {
            lattice,
            algorithm,
            temperature,
            clusters_per_sweep,
        }
    }

    pub fn clusters_per_sweep(&self) -> usize {
        self.clusters_per_sweep
    }

    pub fn sweep<R: Rng>(&mut self, rng: &mut R) {
        match self.algorithm {
            IsingAlgorithm::Metropolis => self.lattice.metropolis_sweep(self.temperature, rng),
            IsingAlgorithm::Wolff => {
                self.lattice.wolff_sweep(self.temperature, self.clusters_per_sweep, rng);
            }
        }
    }
}

/// Snapshots for one temperature: start all-up, burn in, then store `shots`
/// configurations separated by `decorrelation` sweeps.
pub fn sample_temperature<R: Rng>(cfg: &IsingConfig, temperature: f64, rng: &mut R) -> Vec<Snapshot> {
    let mut chain = IsingChain::equilibrate(cfg.side, cfg.algorithm, temperature, cfg.burn_in, rng);
    let mut shots = Vec::with_capacity(cfg.shots);
    for _ in 0..cfg.shots {
        for _ in 0..cfg.decorrelation.max(1) {
            chain.sweep(rng);
        }
        shots.push(chain.lattice.snapshot());
    }
    shots
}

pub fn ising_sweep(cfg: &IsingConfig) -> Result<Dataset> {
    cfg.validate()?;
    let ensembles = cfg
        .temperatures
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut rng = stream_rng(cfg.seed, Stream::Setting(i as u64));
            SnapshotEnsemble::new(t, format!("T={t}"), sample_temperature(cfg, t, &mut rng))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = BTreeMap::new();
    meta.insert("model".into(), "ising-2d-periodic".into());
    meta.insert("side".into(), cfg.side.to_string());
    meta.insert("algorithm".into(), format!("{:?}", cfg.algorithm).to_lowercase());
    meta.insert("burn_in".into(), cfg.burn_in.to_string());
    meta.insert("decorrelation".into(), cfg.decorrelation.to_string());
    meta.insert("shots".into(), cfg.shots.to_string());
    meta.insert("seed".into(), cfg.seed.to_string());
    Dataset::new("T", Alphabet::SpinPm1, None, ensembles, meta)
}
