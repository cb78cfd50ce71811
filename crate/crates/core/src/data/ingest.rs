//! Loading datasets from a manifest and exporting them back to disk.

use std::path::Path;

use super::dataset::{Dataset, SlicePair};
use super::ops::{normalize_window, resize_area};
use crate::error::ensure;
use crate::io::{read_manifest, resolve, write_manifest, write_slice, ManifestRecord, MANIFEST_NAME};
use crate::{LomaeError, Result, Slice};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IngestOptions {
    /// Intensity window mapped to [0, 1]; `None` keeps raw values.
    pub window: Option<(f64, f64)>,
    /// Area-downsample to this square size.
    pub resize: Option<usize>,
}

fn prepare(x: Slice, opts: &IngestOptions) -> Result<Slice> {
    let x = match opts.resize {
        Some(n) if n != x.nrows() || n != x.ncols() => resize_area(&x, n)?,
        _ => x,
    };
    match opts.window {
        Some(w) => normalize_window(&x, w),
        None => Ok(x),
    }
}

/// Reads every pair listed in `manifest`.
pub fn ingest(manifest: &Path, opts: &IngestOptions) -> Result<(Dataset, Vec<ManifestRecord>)> {
    let records = read_manifest(manifest)?;
    if records.is_empty() {
        return Err(LomaeError::Format {
            path: manifest.to_path_buf(),
            reason: "manifest lists no slices".into(),
        });
    }
    let mut pairs = Vec::with_capacity(records.len());
    for r in &records {
        let noisy = prepare(crate::io::read_slice(&resolve(manifest, &r.noisy_path))?, opts)?;
        let clean = prepare(crate::io::read_slice(&resolve(manifest, &r.clean_path))?, opts)?;
        pairs.push(SlicePair::new(noisy, clean, r.patient_id.clone(), r.slice_index)?);
    }
    Ok((Dataset::new(pairs)?, records))
}

/// Writes `ds` as `noisy/*.f32`, `clean/*.f32` and `manifest.csv` under `dir`.
pub fn write_dataset(dir: &Path, ds: &Dataset, dose: f64, seeds: &[u64], geometry: &str) -> Result<()> {
    ensure!(seeds.len() == ds.len(), InvalidArgument, "{} seeds for {} slices", seeds.len(), ds.len());
    for sub in ["noisy", "clean"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| LomaeError::io(&d, e))?;
    }
    let mut records = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let p = ds.pair_unlogged(i);
        let stem = format!("{}_{:03}.f32", p.patient_id, p.slice_index);
        let noisy_path = format!("noisy/{stem}");
        let clean_path = format!("clean/{stem}");
        write_slice(&dir.join(&noisy_path), &p.noisy)?;
        write_slice(&dir.join(&clean_path), &p.clean)?;
        records.push(ManifestRecord {
            patient_id: p.patient_id.clone(),
            slice_index: p.slice_index,
            noisy_path,
            clean_path,
            dose,
            seed: seeds[i],
            geometry: geometry.to_string(),
        });
    }
    write_manifest(&dir.join(MANIFEST_NAME), &records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::cohort::{simulate_cohort, CohortSpec};

    #[test]
    fn export_then_ingest_is_lossless() {
        let spec = CohortSpec {
            n_patients: 2,
            slices_per_patient: 2,
            grid: 16,
            n_views: 24,
            ..CohortSpec::desk()
        };
        let ds = simulate_cohort(&spec, &[1e5], None).unwrap().remove(0);
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds, 1e5, &[1, 2, 3, 4], &spec.geometry_tag()).unwrap();
        let (back, recs) = ingest(&dir.path().join(MANIFEST_NAME), &IngestOptions::default()).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[3].seed, 4);
        for i in 0..4 {
            assert_eq!(back.noisy(i), ds.noisy(i));
            assert_eq!(back.clean(i), ds.clean(i));
            assert_eq!(back.patient(i), ds.patient(i));
        }
        let (small, _) = ingest(
            &dir.path().join(MANIFEST_NAME),
            &IngestOptions {
                window: None,
                resize: Some(8),
            },
        )
        .unwrap();
        assert_eq!(small.shape(), Some((8, 8)));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join(MANIFEST_NAME);
        write_manifest(
            &m,
            &[ManifestRecord {
                patient_id: "P00".into(),
                slice_index: 0,
                noisy_path: "nope.f32".into(),
                clean_path: "nope.f32".into(),
                dose: 0.0,
                seed: 0,
                geometry: String::new(),
            }],
        )
        .unwrap();
        assert_eq!(ingest(&m, &IngestOptions::default()).unwrap_err().category(), "io");
    }
}
