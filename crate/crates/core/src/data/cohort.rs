//! Synthetic patient cohorts: groups of phantom slices scanned at one or more
//! dose levels.

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, SlicePair};
use crate::error::ensure;
use crate::tomo::{make_dose_series, make_phantom, phantom::default_pixel_size, PhantomKind, SimulationConfig, QUARTER_DOSE_I0};
use crate::Result;

/// Attenuation scale for 64x64 desk phantoms. With 5.3 mm pixels the
/// physical water value leaves almost no visible noise at quarter dose; this
/// value puts the quarter-dose noisy SSIM near 0.936.
pub const DESK_ATTENUATION_PER_MM: f64 = 0.0035;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_patients: usize,
    pub slices_per_patient: usize,
    pub grid: usize,
    pub n_views: usize,
    pub phantom: PhantomKind,
    pub attenuation_per_mm: f64,
    pub electronic_variance: f64,
    pub seed: u64,
}

impl CohortSpec {
    /// 10 patients x 20 slices of 64x64 ellipse phantoms.
    pub fn desk() -> Self {
        Self {
            n_patients: 10,
            slices_per_patient: 20,
            grid: 64,
            n_views: 180,
            phantom: PhantomKind::EllipseSoup,
            attenuation_per_mm: DESK_ATTENUATION_PER_MM,
            electronic_variance: crate::tomo::noise::DEFAULT_ELECTRONIC_VARIANCE,
            seed: 2024,
        }
    }

    pub fn patient_id(p: usize) -> String {
        format!("P{p:02}")
    }

    pub fn phantom_seed(&self, patient: usize, slice: usize) -> u64 {
        self.seed
            .wrapping_mul(1_000_003)
            .wrapping_add((patient * self.slices_per_patient + slice) as u64)
    }

    /// Noise seed for one slice at the `dose_index`-th requested dose.
    pub fn noise_seed(&self, patient: usize, slice: usize, dose_index: usize) -> u64 {
        self.phantom_seed(patient, slice).wrapping_mul(0x9e37_79b9).wrapping_add(dose_index as u64 * 7919 + 1)
    }

    pub fn simulation(&self) -> SimulationConfig {
        let mut cfg = SimulationConfig::parallel(self.grid, default_pixel_size(self.grid), self.n_views);
        cfg.geometry.attenuation_per_mm = self.attenuation_per_mm;
        cfg.electronic_variance = self.electronic_variance;
        cfg
    }

    pub fn geometry_tag(&self) -> String {
        let g = self.simulation().geometry;
        format!(
            "parallel views={} detectors={} pitch_mm={:.4} pixel_mm={:.4}",
            g.n_views, g.n_detectors, g.detector_pitch_mm, g.pixel_size_mm
        )
    }
}

/// Simulates the cohort (restricted to `patients`, all when `None`) at every
/// dose in `doses`; returns one dataset per dose sharing phantoms and clean
/// images.
pub fn simulate_cohort(spec: &CohortSpec, doses: &[f64], patients: Option<&[usize]>) -> Result<Vec<Dataset>> {
    ensure!(!doses.is_empty(), InvalidArgument, "no doses requested");
    ensure!(spec.n_patients > 0 && spec.slices_per_patient > 0, InvalidArgument, "empty cohort");
    let all: Vec<usize> = (0..spec.n_patients).collect();
    let which = patients.unwrap_or(&all);
    let cfg = spec.simulation();
    let mut per_dose: Vec<Vec<SlicePair>> = vec![Vec::new(); doses.len()];
    for &p in which {
        ensure!(p < spec.n_patients, InvalidArgument, "patient {p} outside cohort");
        for s in 0..spec.slices_per_patient {
            let ph = make_phantom(spec.phantom, spec.grid, spec.phantom_seed(p, s))?;
            let seeds: Vec<u64> = (0..doses.len()).map(|d| spec.noise_seed(p, s, d)).collect();
            let series = make_dose_series(&ph, &cfg, doses, &seeds)?;
            for (d, pair) in series.into_iter().enumerate() {
                per_dose[d].push(SlicePair::new(pair.noisy, pair.clean, CohortSpec::patient_id(p), s)?);
            }
        }
    }
    per_dose.into_iter().map(Dataset::new).collect()
}

/// Quarter-dose cohort.
pub fn simulate_quarter_dose(spec: &CohortSpec) -> Result<Dataset> {
    Ok(simulate_cohort(spec, &[QUARTER_DOSE_I0], None)?.remove(0))
}
