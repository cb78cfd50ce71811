use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{LomaeError, Result};

/// One noisy/clean pair. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub patient_id: String,
    pub slice_index: usize,
    pub noisy_path: String,
    pub clean_path: String,
    /// Incident photon count `I0`; 0 when unknown.
    pub dose: f64,
    pub seed: u64,
    pub geometry: String,
}

pub const MANIFEST_NAME: &str = "manifest.csv";

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| LomaeError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|rec| rec.map_err(LomaeError::from)).collect()
}

/// Resolves a record path against the manifest location.
pub fn resolve(manifest: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(p)
    }
}
