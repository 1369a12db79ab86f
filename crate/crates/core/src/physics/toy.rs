//! Two-site toy ensembles with identical mean occupation but different
//! fluctuations.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::store::{Alphabet, Dataset, Snapshot, SnapshotEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyKind {
    /// Exactly one of the two sites is occupied, each with probability ½.
    Anticorrelated,
    /// Both sites independent Bernoulli(½).
    Uniform,
}

impl std::str::FromStr for ToyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anticorrelated" => Ok(ToyKind::Anticorrelated),
            "uniform" => Ok(ToyKind::Uniform),
            other => Err(Error::InvalidConfig(format!("unknown toy kind {other:?}"))),
        }
    }
}

pub fn toy_two_site<R: Rng>(kind: ToyKind, m: usize, parameter: f64, rng: &mut R) -> Result<SnapshotEnsemble> {
    if m < 2 {
        return Err(Error::InsufficientSamples(m));
    }
    let shots = (0..m)
        .map(|_| {
            let v = match kind {
                ToyKind::Anticorrelated => {
                    if rng.random::<bool>() {
                        vec![1, 0]
                    } else {
                        vec![0, 1]
                    }
                }
                ToyKind::Uniform => vec![i8::from(rng.random::<bool>()), i8::from(rng.random::<bool>())],
            };
            Snapshot::chain(v)
        })
        .collect::<Result<Vec<_>>>()?;
    SnapshotEnsemble::new(parameter, format!("{kind:?}").to_lowercase(), shots)
}

/// `settings` toy ensembles at parameters `0, 1, ...`, one stream each.
pub fn toy_dataset(kind: ToyKind, settings: usize, m: usize, seed: u64) -> Result<Dataset> {
    let ensembles = (0..settings)
        .map(|i| {
            let mut rng = stream_rng(seed, Stream::Setting(i as u64));
            toy_two_site(kind, m, i as f64, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = BTreeMap::new();
    meta.insert("model".into(), format!("toy-two-site-{kind:?}").to_lowercase());
    meta.insert("seed".into(), seed.to_string());
    Dataset::new("index", Alphabet::Parity01, None, ensembles, meta)
}
