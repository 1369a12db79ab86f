//! On-disk dataset layout.
//!
//! A dataset directory holds `dataset.json` plus one blob per ensemble:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "QSNP"
//! 4       2     version (u16 LE) = 1
//! 6       4     rows    (u32 LE)
//! 10      4     cols    (u32 LE)
//! 14      4     count   (u32 LE)
//! 18      ...   count*rows*cols readings as i8, snapshot-major, row-major
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Alphabet, Dataset, Snapshot, SnapshotEnsemble};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "dataset.json";
pub const MAGIC: [u8; 4] = *b"QSNP";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 18;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub parameter_name: String,
    pub alphabet: Alphabet,
    pub rows: usize,
    pub cols: usize,
    pub mask: Option<Vec<usize>>,
    pub ensembles: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub parameter: f64,
    pub label: String,
    pub blob: String,
    pub count: usize,
    pub sha256: String,
}

pub fn blob_name(index: usize) -> String {
    format!("ensemble_{index:04}.qsnp")
}

pub fn encode_blob(e: &SnapshotEnsemble) -> Vec<u8> {
    let (rows, cols) = e.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + e.count() * rows * cols);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.extend_from_slice(&(e.count() as u32).to_le_bytes());
    for s in e.snapshots() {
        out.extend(s.values().iter().map(|&v| v as u8));
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `ds` into directory `dir` (created if needed).
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    // Dataset can only be built validated, but a cheap recheck keeps a
    // hand-mutated metadata/mask from reaching disk.
    let ds = ds.with_ensembles(ds.ensembles().to_vec())?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (rows, cols) = ds.shape();
    let mut entries = Vec::with_capacity(ds.len());
    for (i, e) in ds.ensembles().iter().enumerate() {
        let name = blob_name(i);
        let bytes = encode_blob(e);
        let path = dir.join(&name);
        fs::write(&path, &bytes).map_err(|err| Error::io(&path, err))?;
        entries.push(ManifestEntry {
            parameter: e.parameter,
            label: e.label.clone(),
            blob: name,
            count: e.count(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        format_version: u32::from(FORMAT_VERSION),
        parameter_name: ds.parameter_name.clone(),
        alphabet: ds.alphabet,
        rows,
        cols,
        mask: ds.mask.clone(),
        ensembles: entries,
        metadata: ds.metadata.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|err| Error::io(&path, err))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        file: path.clone(),
        detail: e.to_string(),
    })?;
    // Check the version before the schema so newer manifests report the
    // right failure.
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(1) => {}
        Some(v) => {
            return Err(Error::VersionUnsupported {
                file: path,
                offset: 0,
                version: v as u32,
            })
        }
        None => {
            return Err(Error::Manifest {
                file: path,
                detail: "missing format_version".into(),
            })
        }
    }
    serde_json::from_value(value).map_err(|e| Error::Manifest {
        file: path,
        detail: e.to_string(),
    })
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

/// Decode one blob, checking it against the manifest's declared layout.
pub fn decode_blob(
    path: &Path,
    bytes: &[u8],
    rows: usize,
    cols: usize,
    count: usize,
    alphabet: Alphabet,
    active: &[bool],
) -> Result<Vec<Snapshot>> {
    let file = || PathBuf::from(path);
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(Error::MagicMismatch {
                file: file(),
                offset: 0,
                found: bytes[..4].try_into().unwrap(),
            });
        }
        return Err(Error::TruncatedBlob {
            file: file(),
            offset: bytes.len() as u64,
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    if bytes[..4] != MAGIC {
        return Err(Error::MagicMismatch {
            file: file(),
            offset: 0,
            found: bytes[..4].try_into().unwrap(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::VersionUnsupported {
            file: file(),
            offset: 4,
            version: u32::from(version),
        });
    }
    let (b_rows, b_cols, b_count) = (
        u32_at(bytes, 6) as usize,
        u32_at(bytes, 10) as usize,
        u32_at(bytes, 14) as usize,
    );
    if b_rows != rows || b_cols != cols {
        return Err(Error::ShapeMismatch {
            file: file(),
            offset: 6,
            detail: format!("blob is {b_rows}x{b_cols}, manifest declares {rows}x{cols}"),
        });
    }
    if b_count != count {
        return Err(Error::ShapeMismatch {
            file: file(),
            offset: 14,
            detail: format!("blob holds {b_count} snapshots, manifest declares {count}"),
        });
    }
    let sites = rows * cols;
    let expected = (HEADER_LEN + count * sites) as u64;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::TruncatedBlob {
            file: file(),
            offset: found,
            expected,
            found,
        });
    }
    if found > expected {
        return Err(Error::ShapeMismatch {
            file: file(),
            offset: expected,
            detail: format!("{} trailing bytes after payload", found - expected),
        });
    }
    let payload = &bytes[HEADER_LEN..];
    let mut snaps = Vec::with_capacity(count);
    for (k, chunk) in payload.chunks_exact(sites).enumerate() {
        let values: Vec<i8> = chunk.iter().map(|&b| b as i8).collect();
        for (i, &v) in values.iter().enumerate() {
            let ok = if active[i] { alphabet.contains(v) } else { v == 0 };
            if !ok {
                return Err(Error::AlphabetViolation {
                    file: file(),
                    offset: (HEADER_LEN + k * sites + i) as u64,
                    value: v,
                });
            }
        }
        snaps.push(Snapshot::new(rows, cols, values)?);
    }
    Ok(snaps)
}

/// Read and fully validate a dataset directory. Ensembles come back sorted
/// by parameter regardless of manifest order.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let sites = manifest.rows * manifest.cols;
    if sites == 0 {
        return Err(Error::Manifest {
            file: manifest_path,
            detail: format!("empty grid {}x{}", manifest.rows, manifest.cols),
        });
    }
    let mut active = vec![manifest.mask.is_none(); sites];
    if let Some(mask) = &manifest.mask {
        for &i in mask {
            if i >= sites {
                return Err(Error::Manifest {
                    file: manifest_path,
                    detail: format!("mask index {i} outside {sites} sites"),
                });
            }
            active[i] = true;
        }
    }
    let mut ensembles = Vec::with_capacity(manifest.ensembles.len());
    for entry in &manifest.ensembles {
        let path = dir.join(&entry.blob);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let snaps = decode_blob(
            &path,
            &bytes,
            manifest.rows,
            manifest.cols,
            entry.count,
            manifest.alphabet,
            &active,
        )?;
        let digest = sha256_hex(&bytes);
        if !digest.eq_ignore_ascii_case(&entry.sha256) {
            return Err(Error::ChecksumMismatch {
                file: path,
                expected: entry.sha256.clone(),
                found: digest,
            });
        }
        ensembles.push(SnapshotEnsemble::new(entry.parameter, entry.label.clone(), snaps)?);
    }
    Dataset::new(
        manifest.parameter_name,
        manifest.alphabet,
        manifest.mask,
        ensembles,
        manifest.metadata,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_dataset(params: &[f64]) -> Dataset {
        let ensembles = params
            .iter()
            .map(|&p| {
                let snaps = vec![
                    Snapshot::new(2, 2, vec![1, 0, 0, 1]).unwrap(),
                    Snapshot::new(2, 2, vec![0, 1, 1, 1]).unwrap(),
                    Snapshot::new(2, 2, vec![0, 0, 0, 0]).unwrap(),
                ];
                SnapshotEnsemble::new(p, format!("p{p}"), snaps).unwrap()
            })
            .collect();
        let mut meta = BTreeMap::new();
        meta.insert("source".into(), "unit".into());
        Dataset::new("U/J", Alphabet::Parity01, None, ensembles, meta).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small_dataset(&[0.5, 1.5, 2.5]);
        write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn manifest_order_is_canonicalized() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small_dataset(&[1.0, 2.0, 3.0]), dir.path()).unwrap();
        let mut m = read_manifest(dir.path()).unwrap();
        // 1.0, 2.0, 3.0 -> 2.0, 1.0, 3.0
        m.ensembles.swap(0, 1);
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&m).unwrap()).unwrap();
        let ds = read_dataset(dir.path()).unwrap();
        assert_eq!(ds.parameters(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small_dataset(&[1.0, 2.0, 3.0]), dir.path()).unwrap();
        let p = dir.path().join(blob_name(1));
        let mut b = fs::read(&p).unwrap();
        b[0] = b'X';
        fs::write(&p, b).unwrap();
        match read_dataset(dir.path()) {
            Err(Error::MagicMismatch { file, offset: 0, .. }) => assert_eq!(file, p),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn one_byte_short() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small_dataset(&[1.0, 2.0, 3.0]), dir.path()).unwrap();
        let p = dir.path().join(blob_name(2));
        let mut b = fs::read(&p).unwrap();
        b.pop();
        fs::write(&p, b).unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(Error::TruncatedBlob { expected: 30, found: 29, .. })
        ));
    }

    #[test]
    fn bad_version_and_shape_and_alphabet() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small_dataset(&[1.0, 2.0, 3.0]), dir.path()).unwrap();
        let p = dir.path().join(blob_name(0));
        let orig = fs::read(&p).unwrap();

        let mut b = orig.clone();
        b[4] = 2;
        fs::write(&p, &b).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::VersionUnsupported { offset: 4, version: 2, .. })));

        let mut b = orig.clone();
        b[6] = 3;
        fs::write(&p, &b).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::ShapeMismatch { offset: 6, .. })));

        let mut b = orig.clone();
        b[HEADER_LEN + 5] = 0xff; // -1 under parity alphabet
        fs::write(&p, &b).unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(Error::AlphabetViolation { offset: 23, value: -1, .. })
        ));

        let mut b = orig.clone();
        b[HEADER_LEN] ^= 1; // still legal, but the digest no longer matches
        fs::write(&p, &b).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::ChecksumMismatch { .. })));
    }

    #[test]
    fn manifest_version_checked() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&small_dataset(&[1.0, 2.0, 3.0]), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 7");
        fs::write(&path, text).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::VersionUnsupported { version: 7, .. })));
    }

    #[test]
    fn missing_manifest_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains(MANIFEST_FILE));
    }
}
