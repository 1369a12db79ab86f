use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse grouping used by the CLI to choose an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid snapshot: {0}")]
    InvalidSnapshot(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}: magic mismatch at offset {offset} (expected QSNP, found {found:?})", file.display())]
    MagicMismatch {
        file: PathBuf,
        offset: u64,
        found: [u8; 4],
    },

    #[error("{}: unsupported format version {version} at offset {offset}", file.display())]
    VersionUnsupported { file: PathBuf, offset: u64, version: u32 },

    #[error("{}: shape mismatch at offset {offset}: {detail}", file.display())]
    ShapeMismatch {
        file: PathBuf,
        offset: u64,
        detail: String,
    },

    #[error("{}: value {value} at offset {offset} is outside the declared alphabet", file.display())]
    AlphabetViolation { file: PathBuf, offset: u64, value: i8 },

    #[error("{}: truncated blob, expected {expected} bytes but found {found} (offset {offset})", file.display())]
    TruncatedBlob {
        file: PathBuf,
        offset: u64,
        expected: u64,
        found: u64,
    },

    #[error("{}: sha256 mismatch (manifest {expected}, blob {found})", file.display())]
    ChecksumMismatch {
        file: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{}: malformed manifest: {detail}", file.display())]
    Manifest { file: PathBuf, detail: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("insufficient samples: need at least 2, got {0}")]
    InsufficientSamples(usize),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("degenerate kernel: all off-diagonal distances are zero (ensembles statistically identical)")]
    DegenerateKernel,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("no transition: {0}")]
    NoTransition(String),

    #[error("tanh fit did not converge after {iterations} iterations (gradient {gradient:.3e})")]
    NonConvergence {
        iterations: usize,
        gradient: f64,
        best: Box<crate::detect::TransitionReport>,
    },

    #[error("unstable detection: {failed} of {total} bootstrap replicates failed")]
    UnstableDetection { failed: usize, total: usize },

    #[error("ambiguous clustering: {crossings} cluster boundary crossings along the parameter axis")]
    AmbiguousClustering { crossings: usize },

    #[error("region {0} exceeds snapshot bounds")]
    RegionOutOfBounds(String),

    #[error("no atoms: every shot is empty")]
    NoAtoms,

    #[error("empty series")]
    EmptySeries,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::DegenerateKernel
            | Error::NumericalFailure(_)
            | Error::NoTransition(_)
            | Error::NonConvergence { .. }
            | Error::UnstableDetection { .. }
            | Error::AmbiguousClustering { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}
