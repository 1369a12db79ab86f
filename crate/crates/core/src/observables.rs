//! Conventional observables computed directly on snapshots, for overlaying
//! against the embedding: brane parity, left/right imbalance and
//! nearest-neighbour parity correlations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{Alphabet, Dataset, SnapshotEnsemble};

/// Shot average with its standard error `sd / √m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from_shots(values: &[f64]) -> Self {
        let m = values.len() as f64;
        let value = values.iter().sum::<f64>() / m;
        let stderr = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - value).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        };
        Estimate { value, stderr }
    }
}

/// Rectangular window of sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Region {
    /// `height x width` window centered in a `rows x cols` grid (rounded
    /// towards the top-left when the slack is odd).
    pub fn centered(rows: usize, cols: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || height > rows || width > cols {
            return Err(Error::RegionOutOfBounds(format!("{height}x{width} in {rows}x{cols}")));
        }
        Ok(Region {
            row: (rows - height) / 2,
            col: (cols - width) / 2,
            height,
            width,
        })
    }

    fn check(&self, rows: usize, cols: usize) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.row + self.height > rows || self.col + self.width > cols {
            return Err(Error::RegionOutOfBounds(format!(
                "{}x{} at ({}, {}) in {rows}x{cols}",
                self.height, self.width, self.row, self.col
            )));
        }
        Ok(())
    }

    fn sites(&self, cols: usize) -> impl Iterator<Item = usize> + '_ {
        (self.row..self.row + self.height).flat_map(move |r| (self.col..self.col + self.width).map(move |c| r * cols + c))
    }
}

impl std::str::FromStr for Region {
    type Err = Error;

    /// Parses `"HxW"`; the position is filled in later by [`Region::centered`].
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("region must look like 3x3, got {s:?}"));
        let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        Ok(Region {
            row: 0,
            col: 0,
            height: h.trim().parse().map_err(|_| bad())?,
            width: w.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// Mean occupation over all active sites and shots of the dataset.
pub fn mean_filling(ds: &Dataset) -> f64 {
    let active = ds.active_sites();
    let mut total = 0u64;
    let mut count = 0u64;
    for e in ds.ensembles() {
        for s in e.snapshots() {
            for (i, &v) in s.values().iter().enumerate() {
                if active[i] {
                    total += u64::from(ds.alphabet.occupation(v));
                    count += 1;
                }
            }
        }
    }
    total as f64 / count.max(1) as f64
}

/// Per shot `s = (-1)^Σ_{i∈region}(n_i - round(n̄))`, averaged over shots.
/// Inactive sites are skipped.
pub fn brane_parity(
    e: &SnapshotEnsemble,
    region: &Region,
    mean_filling: f64,
    alphabet: Alphabet,
    active: Option<&[bool]>,
) -> Result<Estimate> {
    let (rows, cols) = e.shape();
    region.check(rows, cols)?;
    let reference = mean_filling.round_ties_even() as i64;
    let sites: Vec<usize> = region.sites(cols).filter(|&i| active.is_none_or(|a| a[i])).collect();
    let shots: Vec<f64> = e
        .snapshots()
        .iter()
        .map(|s| {
            let dev: i64 = sites.iter().map(|&i| i64::from(alphabet.occupation(s.values()[i])) - reference).sum();
            if dev.rem_euclid(2) == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Ok(Estimate::from_shots(&shots))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Shots without any atom, excluded from the average.
    pub dropped: usize,
}

/// Per shot `(N_L - N_R) / N_total`, where `N_L` counts atoms in columns
/// strictly left of `edge_column`.
pub fn imbalance(e: &SnapshotEnsemble, edge_column: usize, alphabet: Alphabet) -> Result<ImbalanceEstimate> {
    let (rows, cols) = e.shape();
    if edge_column == 0 || edge_column >= cols {
        return Err(Error::RegionOutOfBounds(format!("edge column {edge_column} with {cols} columns")));
    }
    let mut shots = Vec::with_capacity(e.count());
    let mut dropped = 0;
    for s in e.snapshots() {
        let (mut left, mut right) = (0i64, 0i64);
        for r in 0..rows {
            for c in 0..cols {
                let n = i64::from(alphabet.occupation(s.get(r, c)));
                if c < edge_column {
                    left += n;
                } else {
                    right += n;
                }
            }
        }
        if left + right == 0 {
            dropped += 1;
        } else {
            shots.push((left - right) as f64 / (left + right) as f64);
        }
    }
    if shots.is_empty() {
        return Err(Error::NoAtoms);
    }
    let est = Estimate::from_shots(&shots);
    Ok(ImbalanceEstimate {
        value: est.value,
        stderr: est.stderr,
        dropped,
    })
}

/// Connected correlation `⟨p_i p_j⟩ - ⟨p_i⟩⟨p_j⟩` averaged over
/// nearest-neighbour bonds (open boundaries). Bonds touching an inactive site
/// are excluded. The standard error treats the per-shot bond average of
/// `(p_i - p̄_i)(p_j - p̄_j)` as the sample.
pub fn nn_parity_correlation(e: &SnapshotEnsemble, alphabet: Alphabet, active: Option<&[bool]>) -> Result<Estimate> {
    let (rows, cols) = e.shape();
    let is_active = |i: usize| active.is_none_or(|a| a[i]);
    let mut bonds = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                bonds.push((i, i + 1));
            }
            if r + 1 < rows {
                bonds.push((i, i + cols));
            }
        }
    }
    bonds.retain(|&(i, j)| is_active(i) && is_active(j));
    if bonds.is_empty() {
        return Err(Error::RegionOutOfBounds("no active nearest-neighbour bonds".into()));
    }
    let m = e.count() as f64;
    let mut means = vec![0.0; rows * cols];
    for s in e.snapshots() {
        for (acc, &v) in means.iter_mut().zip(s.values()) {
            *acc += f64::from(alphabet.occupation(v));
        }
    }
    means.iter_mut().for_each(|x| *x /= m);
    let shots: Vec<f64> = e
        .snapshots()
        .iter()
        .map(|s| {
            let p = |i: usize| f64::from(alphabet.occupation(s.values()[i])) - means[i];
            bonds.iter().map(|&(i, j)| p(i) * p(j)).sum::<f64>() / bonds.len() as f64
        })
        .collect();
    Ok(Estimate::from_shots(&shots))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub name: String,
    pub parameters: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl ObservableSeries {
    pub fn from_estimates(name: impl Into<String>, parameters: Vec<f64>, estimates: &[Estimate]) -> Self {
        ObservableSeries {
            name: name.into(),
            parameters,
            values: estimates.iter().map(|e| e.value).collect(),
            stderr: estimates.iter().map(|e| e.stderr).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.parameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parameters.is_empty()
    }
}

/// Which observables to compute across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservableRequest {
    /// Centered brane window `(height, width)`.
    pub brane: Option<(usize, usize)>,
    pub edge: Option<usize>,
    pub nn_parity: bool,
    /// Reference filling for brane parity, dataset mean when absent.
    pub mean_filling: Option<f64>,
}

/// Series for every requested observable, one value per setting.
pub fn observable_series(ds: &Dataset, req: &ObservableRequest) -> Result<Vec<ObservableSeries>> {
    let params = ds.parameters();
    let active = ds.active_sites();
    let (rows, cols) = ds.shape();
    let mut out = Vec::new();
    if let Some((h, w)) = req.brane {
        let region = Region::centered(rows, cols, h, w)?;
        let filling = req.mean_filling.unwrap_or_else(|| mean_filling(ds));
        let est = ds
            .ensembles()
            .par_iter()
            .map(|e| brane_parity(e, &region, filling, ds.alphabet, Some(&active)))
            .collect::<Result<Vec<_>>>()?;
        out.push(ObservableSeries::from_estimates("brane_parity", params.clone(), &est));
    }
    if let Some(edge) = req.edge {
        let est = ds
            .ensembles()
            .par_iter()
            .map(|e| {
                imbalance(e, edge, ds.alphabet).map(|i| Estimate {
                    value: i.value,
                    stderr: i.stderr,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(ObservableSeries::from_estimates("imbalance", params.clone(), &est));
    }
    if req.nn_parity {
        let est = ds
            .ensembles()
            .par_iter()
            .map(|e| nn_parity_correlation(e, ds.alphabet, Some(&active)))
            .collect::<Result<Vec<_>>>()?;
        out.push(ObservableSeries::from_estimates("nn_parity", params, &est));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::Snapshot;
    use approx::assert_abs_diff_eq;

    fn ens(rows: usize, cols: usize, shots: Vec<Vec<i8>>) -> SnapshotEnsemble {
        let s = shots.into_iter().map(|v| Snapshot::new(rows, cols, v).unwrap()).collect();
        SnapshotEnsemble::new(0.0, "t", s).unwrap()
    }

    #[test]
    fn deep_mott_brane_is_one() {
        let e = ens(4, 4, vec![vec![1; 16]; 5]);
        let r = Region::centered(4, 4, 2, 2).unwrap();
        let b = brane_parity(&e, &r, 1.0, Alphabet::Parity01, None).unwrap();
        assert_eq!(b.value, 1.0);
        assert_eq!(b.stderr, 0.0);
    }

    #[test]
    fn single_defect_flips_sign() {
        let mut v = vec![1; 16];
        v[5] = 0;
        let e = ens(4, 4, vec![v.clone(), v]);
        let r = Region::centered(4, 4, 2, 2).unwrap();
        assert_eq!(r, Region { row: 1, col: 1, height: 2, width: 2 });
        let b = brane_parity(&e, &r, 1.0, Alphabet::Parity01, None).unwrap();
        assert_eq!(b.value, -1.0);
    }

    #[test]
    fn masked_defect_ignored() {
        let mut v = vec![1; 16];
        v[5] = 0;
        let e = ens(4, 4, vec![v.clone(), v]);
        let mut active = vec![true; 16];
        active[5] = false;
        let r = Region::centered(4, 4, 2, 2).unwrap();
        let b = brane_parity(&e, &r, 1.0, Alphabet::Parity01, Some(&active)).unwrap();
        assert_eq!(b.value, 1.0);
    }

    #[test]
    fn region_bounds() {
        let e = ens(2, 2, vec![vec![0; 4]; 2]);
        let r = Region { row: 1, col: 0, height: 2, width: 1 };
        assert!(matches!(
            brane_parity(&e, &r, 0.0, Alphabet::Parity01, None),
            Err(Error::RegionOutOfBounds(_))
        ));
        assert!(Region::centered(2, 2, 3, 1).is_err());
        assert_eq!("3x5".parse::<Region>().unwrap().width, 5);
    }

    #[test]
    fn imbalance_formula() {
        // 4 rows x 20 cols, 30 atoms left of column 10 and 10 right of it
        let mut v = vec![0i8; 80];
        let mut placed = 0;
        for r in 0..4 {
            for c in 0..10 {
                if placed < 30 {
                    v[r * 20 + c] = 1;
                    placed += 1;
                }
            }
        }
        v[10..20].fill(1);
        let e = ens(4, 20, vec![v.clone(), v]);
        let i = imbalance(&e, 10, Alphabet::Parity01).unwrap();
        assert_abs_diff_eq!(i.value, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn imbalance_extremes() {
        let left = ens(1, 4, vec![vec![1, 1, 0, 0]; 3]);
        assert_eq!(imbalance(&left, 2, Alphabet::Parity01).unwrap().value, 1.0);
        let sym = ens(1, 4, vec![vec![1, 0, 0, 1]; 3]);
        assert_eq!(imbalance(&sym, 2, Alphabet::Parity01).unwrap().value, 0.0);
        let empty = ens(1, 4, vec![vec![0; 4]; 3]);
        assert!(matches!(imbalance(&empty, 2, Alphabet::Parity01), Err(Error::NoAtoms)));
        let some = ens(1, 4, vec![vec![0; 4], vec![1, 0, 0, 0], vec![0, 0, 0, 1]]);
        let i = imbalance(&some, 2, Alphabet::Parity01).unwrap();
        assert_eq!(i.dropped, 1);
        assert_eq!(i.value, 0.0);
        assert!(imbalance(&some, 0, Alphabet::Parity01).is_err());
        assert!(imbalance(&some, 4, Alphabet::Parity01).is_err());
    }

    #[test]
    fn identical_shots_have_no_correlation() {
        let e = ens(3, 3, vec![vec![1, 0, 1, 0, 1, 0, 1, 1, 0]; 10]);
        let c = nn_parity_correlation(&e, Alphabet::Parity01, None).unwrap();
        assert_eq!(c.value, 0.0);
    }

    #[test]
    fn perfectly_correlated_pair() {
        // two sites always equal, each Bernoulli(½) over 4 shots: cov = ¼
        let e = ens(1, 2, vec![vec![0, 0], vec![1, 1], vec![0, 0], vec![1, 1]]);
        let c = nn_parity_correlation(&e, Alphabet::Parity01, None).unwrap();
        assert_abs_diff_eq!(c.value, 0.25, epsilon = 1e-15);
    }
}
