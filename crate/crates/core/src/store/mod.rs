//! Snapshot data model.
//!
//! A [`Snapshot`] is one projective measurement on a rectangular grid, a
//! [`SnapshotEnsemble`] collects every shot taken at one value of the control
//! parameter, and a [`Dataset`] is the ordered parameter sweep. Values are
//! stored as `i8`; the declared [`Alphabet`] decides which readings are legal.
//!
//! The on-disk layout lives in [`format`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod format;

pub use format::{read_dataset, write_dataset, MANIFEST_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Alphabet {
    /// Occupation parity readout, `{0, 1}`.
    #[serde(rename = "parity01")]
    Parity01,
    /// Spin readout, `{-1, +1}`.
    #[serde(rename = "spin_pm1")]
    SpinPm1,
}

impl Alphabet {
    pub fn contains(self, v: i8) -> bool {
        match self {
            Alphabet::Parity01 => v == 0 || v == 1,
            Alphabet::SpinPm1 => v == -1 || v == 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Alphabet::Parity01 => "parity01",
            Alphabet::SpinPm1 => "spin_pm1",
        }
    }

    /// Map a reading to an occupation number: parity is returned as is, spin
    /// `+1` counts as occupied.
    pub fn occupation(self, v: i8) -> u8 {
        match self {
            Alphabet::Parity01 => v as u8,
            Alphabet::SpinPm1 => u8::from(v > 0),
        }
    }
}

impl std::str::FromStr for Alphabet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parity01" => Ok(Alphabet::Parity01),
            "spin_pm1" => Ok(Alphabet::SpinPm1),
            other => Err(Error::InvalidConfig(format!("unknown alphabet {other:?}"))),
        }
    }
}

/// One single-shot configuration, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Snapshot {
    rows: usize,
    cols: usize,
    values: Vec<i8>,
}

impl Snapshot {
    pub fn new(rows: usize, cols: usize, values: Vec<i8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidSnapshot(format!("shape {rows}x{cols} has no sites")));
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidSnapshot(format!(
                "{} values for a {rows}x{cols} grid",
                values.len()
            )));
        }
        Ok(Snapshot { rows, cols, values })
    }

    /// A single-row snapshot, the natural shape for chains.
    pub fn chain(values: Vec<i8>) -> Result<Self> {
        let cols = values.len();
        Snapshot::new(1, cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.values[row * self.cols + col]
    }

    /// Row-major real vector of the readings, unchanged in value.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Free-function form of [`Snapshot::flatten`].
pub fn flatten(s: &Snapshot) -> Vec<f64> {
    s.flatten()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEnsemble {
    pub parameter: f64,
    pub label: String,
    snapshots: Vec<Snapshot>,
}

impl SnapshotEnsemble {
    pub fn new(parameter: f64, label: impl Into<String>, snapshots: Vec<Snapshot>) -> Result<Self> {
        if !parameter.is_finite() {
            return Err(Error::InvalidDataset(format!("non-finite parameter {parameter}")));
        }
        if snapshots.len() < 2 {
            return Err(Error::InsufficientSamples(snapshots.len()));
        }
        let shape = snapshots[0].shape();
        if let Some(bad) = snapshots.iter().find(|s| s.shape() != shape) {
            return Err(Error::InvalidDataset(format!(
                "ensemble at {parameter} mixes shapes {:?} and {:?}",
                shape,
                bad.shape()
            )));
        }
        Ok(SnapshotEnsemble {
            parameter,
            label: label.into(),
            snapshots,
        })
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn count(&self) -> usize {
        self.snapshots.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.snapshots[0].shape()
    }

    /// New ensemble built from the snapshots at `indices` (repeats allowed).
    pub fn resampled(&self, indices: &[usize]) -> Result<Self> {
        let snapshots = indices.iter().map(|&i| self.snapshots[i].clone()).collect();
        SnapshotEnsemble::new(self.parameter, self.label.clone(), snapshots)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub parameter_name: String,
    pub alphabet: Alphabet,
    /// Active site indices (row-major) when the physical region is not the
    /// full rectangle. Inactive sites must read 0.
    pub mask: Option<Vec<usize>>,
    pub metadata: BTreeMap<String, String>,
    ensembles: Vec<SnapshotEnsemble>,
}

impl Dataset {
    /// Validate and canonicalize: ensembles are sorted by parameter.
    pub fn new(
        parameter_name: impl Into<String>,
        alphabet: Alphabet,
        mask: Option<Vec<usize>>,
        mut ensembles: Vec<SnapshotEnsemble>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        if ensembles.len() < 3 {
            return Err(Error::InvalidDataset(format!(
                "a sweep needs at least 3 ensembles, got {}",
                ensembles.len()
            )));
        }
        ensembles.sort_by(|a, b| a.parameter.total_cmp(&b.parameter));
        for w in ensembles.windows(2) {
            if w[0].parameter >= w[1].parameter {
                return Err(Error::InvalidDataset(format!(
                    "duplicate parameter {}",
                    w[1].parameter
                )));
            }
        }
        let shape = ensembles[0].shape();
        let sites = shape.0 * shape.1;
        let active = match &mask {
            Some(m) => {
                let mut seen = vec![false; sites];
                for &i in m {
                    if i >= sites {
                        return Err(Error::InvalidDataset(format!(
                            "mask index {i} outside {}x{} grid",
                            shape.0, shape.1
                        )));
                    }
                    seen[i] = true;
                }
                seen
            }
            None => vec![true; sites],
        };
        for e in &ensembles {
            if e.shape() != shape {
                return Err(Error::InvalidDataset(format!(
                    "ensemble at {} has shape {:?}, expected {:?}",
                    e.parameter,
                    e.shape(),
                    shape
                )));
            }
            for s in e.snapshots() {
                for (i, &v) in s.values().iter().enumerate() {
                    let ok = if active[i] { alphabet.contains(v) } else { v == 0 };
                    if !ok {
                        return Err(Error::InvalidDataset(format!(
                            "value {v} at site {i} (parameter {}) violates alphabet {}",
                            e.parameter,
                            alphabet.name()
                        )));
                    }
                }
            }
        }
        Ok(Dataset {
            parameter_name: parameter_name.into(),
            alphabet,
            mask,
            metadata,
            ensembles,
        })
    }

    pub fn ensembles(&self) -> &[SnapshotEnsemble] {
        &self.ensembles
    }

    pub fn len(&self) -> usize {
        self.ensembles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ensembles.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.ensembles[0].shape()
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.ensembles.iter().map(|e| e.parameter).collect()
    }

    /// Boolean activity per site, all true without a mask.
    pub fn active_sites(&self) -> Vec<bool> {
        let (r, c) = self.shape();
        match &self.mask {
            None => vec![true; r * c],
            Some(m) => {
                let mut a = vec![false; r * c];
                for &i in m {
                    a[i] = true;
                }
                a
            }
        }
    }

    /// Same metadata and shape, different ensembles (re-validated).
    pub fn with_ensembles(&self, ensembles: Vec<SnapshotEnsemble>) -> Result<Self> {
        Dataset::new(
            self.parameter_name.clone(),
            self.alphabet,
            self.mask.clone(),
            ensembles,
            self.metadata.clone(),
        )
    }
}
