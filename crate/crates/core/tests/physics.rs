mod common;

use approx::assert_abs_diff_eq;

use snapmap::physics::{
    ising_sweep, sample_temperature, tfim_ground_state, tfim_sample, tfim_sweep, toy_two_site, IsingAlgorithm,
    IsingChain, IsingConfig, IsingLattice, TfimConfig, ToyKind,
};
use snapmap::store::write_dataset;

/// Pool bins with expected count below 5 into one before the χ² test.
fn pooled_chi_square(observed: &[u64], probs: &[f64]) -> (f64, f64) {
    let n: u64 = observed.iter().sum();
    let (mut obs, mut pr) = (Vec::new(), Vec::new());
    let (mut rest_o, mut rest_p) = (0u64, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        if p * n as f64 >= 5.0 {
            obs.push(o);
            pr.push(p);
        } else {
            rest_o += o;
            rest_p += p;
        }
    }
    if rest_p * n as f64 > 0.0 {
        obs.push(rest_o);
        pr.push(rest_p);
    }
    common::chi_square(&obs, &pr)
}

/// Mean and batch-means standard error of a correlated series.
fn batch_mean(series: &[f64], batches: usize) -> (f64, f64) {
    let len = series.len() / batches;
    let means: Vec<f64> = series.chunks_exact(len).map(|c| c.iter().sum::<f64>() / len as f64).collect();
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    (mean, (var / means.len() as f64).sqrt())
}

#[test]
fn lanczos_matches_dense_oracle_at_eight_sites() {
    for lambda in [0.5, 1.0, 1.7] {
        let gs = tfim_ground_state(8, lambda).unwrap();
        let (e, v) = common::dense_ground(8, lambda);
        assert_abs_diff_eq!(gs.energy, e, epsilon = 1e-10);
        let overlap: f64 = gs.amplitudes.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(overlap.abs(), 1.0, epsilon = 1e-8);
    }
}

#[test]
fn ground_energy_nonincreasing_in_lambda() {
    let energies: Vec<f64> = (0..=20).map(|i| tfim_ground_state(10, i as f64 * 0.1).unwrap().energy).collect();
    for w in energies.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{w:?}");
    }
}

#[test]
fn born_rule_frequencies_at_four_sites() {
    let gs = tfim_ground_state(4, 1.0).unwrap();
    let probs: Vec<f64> = gs.amplitudes.iter().map(|a| a * a).collect();
    let mut rng = common::rng(41);
    let shots = tfim_sample(&gs.amplitudes, 4, 10_000, &mut rng).unwrap();
    let mut counts = vec![0u64; 16];
    for s in &shots {
        counts[common::spins_to_state(s.values())] += 1;
    }
    let (stat, p) = pooled_chi_square(&counts, &probs);
    assert!(p > 0.01, "chi2 {stat}, p {p}");

    // total magnetization marginal
    let mut mprob = vec![0.0; 5];
    let mut mcount = vec![0u64; 5];
    for (x, &pr) in probs.iter().enumerate() {
        mprob[(x as u32).count_ones() as usize] += pr;
    }
    for (x, &c) in counts.iter().enumerate() {
        mcount[(x as u32).count_ones() as usize] += c;
    }
    let (stat, p) = pooled_chi_square(&mcount, &mprob);
    assert!(p > 0.01, "magnetization chi2 {stat}, p {p}");
}

#[test]
fn strong_coupling_site_magnetization_matches_exact_marginals() {
    // at λ = 10 the chain is close to, not exactly, a product of σˣ
    // eigenstates: the exact ⟨σᶻ⟩ is about 0.05 in the bulk and 0.1 at the
    // open ends, so each site is compared against the dense oracle
    let (_, v) = common::dense_ground(8, 10.0);
    let gs = tfim_ground_state(8, 10.0).unwrap();
    let m = 4000;
    let shots = tfim_sample(&gs.amplitudes, 8, m, &mut common::rng(42)).unwrap();
    for site in 0..8 {
        let exact: f64 = v.iter().enumerate().map(|(x, a)| a * a * if x >> site & 1 == 1 { -1.0 } else { 1.0 }).sum();
        assert!(exact.abs() < 0.11);
        let mean = shots.iter().map(|s| f64::from(s.values()[site])).sum::<f64>() / m as f64;
        let sd = ((1.0 - exact * exact) / m as f64).sqrt();
        assert!((mean - exact).abs() < 4.0 * sd, "site {site}: {mean} vs {exact}");
    }
}

#[test]
fn zero_coupling_samples_all_up() {
    let gs = tfim_ground_state(6, 0.0).unwrap();
    let shots = tfim_sample(&gs.amplitudes, 6, 200, &mut common::rng(43)).unwrap();
    assert!(shots.iter().all(|s| s.values().iter().all(|&v| v == 1)));
}

#[test]
fn metropolis_detailed_balance_on_two_by_two() {
    let t = 2.5;
    let probs = common::ising2_distribution(t);
    let mut lattice = IsingLattice::all_up(2);
    let mut rng = common::rng(44);
    for _ in 0..10_000 {
        lattice.metropolis_step(t, &mut rng);
    }
    // thin to one record per 100 proposals so records are nearly independent
    let mut counts = vec![0u64; 16];
    for step in 0..1_000_000 {
        lattice.metropolis_step(t, &mut rng);
        if step % 100 == 0 {
            counts[common::spins_to_state(lattice.spins())] += 1;
        }
    }
    let (stat, p) = common::chi_square(&counts, &probs);
    assert!(p > 0.01, "chi2 {stat}, p {p}");
}

#[test]
fn two_by_two_mean_energy_matches_enumeration() {
    let t = 2.5;
    let probs = common::ising2_distribution(t);
    let exact: f64 = (0..16).map(|s| probs[s] * common::ising2_energy(s) as f64).sum();
    let mut lattice = IsingLattice::all_up(2);
    let mut rng = common::rng(45);
    for _ in 0..1000 {
        lattice.metropolis_sweep(t, &mut rng);
    }
    let series: Vec<f64> = (0..200_000)
        .map(|_| {
            lattice.metropolis_sweep(t, &mut rng);
            lattice.energy() as f64
        })
        .collect();
    for (s, e) in (0..16).map(|s| (s, common::ising2_energy(s))) {
        let l = IsingLattice::from_spins(2, (0..4).map(|i| if s >> i & 1 == 1 { -1 } else { 1 }).collect());
        assert_eq!(l.energy(), e);
    }
    let (mean, se) = batch_mean(&series, 50);
    assert!((mean - exact).abs() < 3.0 * se, "mean {mean}, exact {exact}, se {se}");
}

fn abs_magnetization_series(side: usize, algorithm: IsingAlgorithm, t: f64, sweeps: usize, seed: u64) -> Vec<f64> {
    let mut rng = common::rng(seed);
    let mut chain = IsingChain::equilibrate(side, algorithm, t, 2000, &mut rng);
    let n = (side * side) as f64;
    (0..sweeps)
        .map(|_| {
            chain.sweep(&mut rng);
            (chain.lattice.magnetization() as f64 / n).abs()
        })
        .collect()
}

#[test]
fn wolff_and_metropolis_agree_on_abs_magnetization() {
    for (k, t) in [2.0, 2.269, 2.6].into_iter().enumerate() {
        let (mw, sw) = batch_mean(&abs_magnetization_series(8, IsingAlgorithm::Wolff, t, 20_000, 100 + k as u64), 40);
        let (mm, sm) = batch_mean(&abs_magnetization_series(8, IsingAlgorithm::Metropolis, t, 20_000, 200 + k as u64), 40);
        let combined = (sw * sw + sm * sm).sqrt();
        assert!((mw - mm).abs() < 3.0 * combined, "T={t}: wolff {mw}±{sw}, metropolis {mm}±{sm}");
    }
}

#[test]
fn both_samplers_match_four_by_four_enumeration() {
    // explicit periodic bond sum, independent of the lattice type
    let states: Vec<(i64, i64)> = (0..1u32 << 16)
        .map(|s| {
            let spin = |r: usize, c: usize| if s >> ((r % 4) * 4 + c % 4) & 1 == 1 { -1i64 } else { 1 };
            let mut e = 0;
            let mut m = 0;
            for r in 0..4 {
                for c in 0..4 {
                    e -= spin(r, c) * (spin(r, c + 1) + spin(r + 1, c));
                    m += spin(r, c);
                }
            }
            (e, m)
        })
        .collect();
    for (k, t) in [2.0, 2.269, 2.6].into_iter().enumerate() {
        let weights: Vec<f64> = states.iter().map(|&(e, _)| (-(e as f64) / t).exp()).collect();
        let z: f64 = weights.iter().sum();
        let exact: f64 = states.iter().zip(&weights).map(|(&(_, m), w)| w * (m as f64 / 16.0).abs()).sum::<f64>() / z;
        for algorithm in [IsingAlgorithm::Wolff, IsingAlgorithm::Metropolis] {
            let (mean, se) = batch_mean(&abs_magnetization_series(4, algorithm, t, 100_000, 300 + k as u64), 50);
            assert!((mean - exact).abs() < 3.0 * se, "{algorithm:?} T={t}: {mean}±{se} vs {exact}");
        }
    }
}

#[test]
fn frozen_phase_is_fully_aligned() {
    for algorithm in [IsingAlgorithm::Metropolis, IsingAlgorithm::Wolff] {
        let cfg = IsingConfig {
            side: 8,
            temperatures: vec![0.1],
            shots: 20,
            burn_in: 50,
            decorrelation: 2,
            seed: 7,
            algorithm,
        };
        let shots = sample_temperature(&cfg, 0.1, &mut common::rng(46));
        for s in shots {
            let m: i32 = s.values().iter().map(|&v| i32::from(v)).sum();
            assert_eq!(m.abs(), 64);
        }
    }
}

#[test]
fn generators_are_seed_deterministic() {
    let write = |ds: &snapmap::store::Dataset| {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(ds, dir.path()).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let tfim = TfimConfig {
        length: 6,
        lambdas: vec![0.5, 1.0, 1.5],
        shots: 50,
        seed: 3,
    };
    assert_eq!(write(&tfim_sweep(&tfim).unwrap()), write(&tfim_sweep(&tfim).unwrap()));
    let ising = IsingConfig {
        side: 4,
        temperatures: vec![1.5, 2.5, 3.5],
        shots: 20,
        burn_in: 20,
        decorrelation: 2,
        seed: 3,
        algorithm: IsingAlgorithm::Wolff,
    };
    assert_eq!(write(&ising_sweep(&ising).unwrap()), write(&ising_sweep(&ising).unwrap()));
    let other = TfimConfig { seed: 4, ..tfim.clone() };
    assert_ne!(write(&tfim_sweep(&tfim).unwrap()), write(&tfim_sweep(&other).unwrap()));
}

#[test]
fn toy_means_and_covariance() {
    let m = 1000;
    let mut rng = common::rng(47);
    for kind in [ToyKind::Anticorrelated, ToyKind::Uniform] {
        let e = toy_two_site(kind, m, 0.0, &mut rng).unwrap();
        for site in 0..2 {
            let mean = e.snapshots().iter().map(|s| f64::from(s.values()[site])).sum::<f64>() / m as f64;
            assert!((mean - 0.5).abs() < 4.0 / (m as f64).sqrt());
        }
    }
    let e = toy_two_site(ToyKind::Uniform, m, 0.0, &mut rng).unwrap();
    let v: Vec<Vec<f64>> = e.snapshots().iter().map(|s| s.flatten()).collect();
    let (_, cov) = common::oracle_covariance(&v);
    // independent Bernoulli(½) sites: sd of the sample covariance is ¼/√m
    assert!(cov[(0, 1)].abs() < 4.0 * 0.25 / (m as f64).sqrt());
}
