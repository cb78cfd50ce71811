use serde::{Deserialize, Serialize};

use super::noise::{inject_noise, DoseSetting, NoiseOptions, DEFAULT_ELECTRONIC_VARIANCE};
use super::phantom::Phantom;
use super::radon::{fbp_reconstruct, radon_project, ReconFilter, ScanGeometry};
use crate::error::{ensure, Result};
use crate::{round_to_f32, Slice};

/// Everything needed to turn a phantom into reconstructed slices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub geometry: ScanGeometry,
    pub filter: ReconFilter,
    pub electronic_variance: f64,
    pub count_floor: f64,
}

impl SimulationConfig {
    pub fn parallel(grid_size: usize, pixel_size_mm: f64, n_views: usize) -> Self {
        Self {
            geometry: ScanGeometry::parallel(grid_size, pixel_size_mm, n_views),
            filter: ReconFilter::Ramp,
            electronic_variance: DEFAULT_ELECTRONIC_VARIANCE,
            count_floor: super::noise::DEFAULT_COUNT_FLOOR,
        }
    }

    fn noise_options(&self) -> NoiseOptions {
        NoiseOptions {
            count_floor: self.count_floor,
            ..Default::default()
        }
    }
}

/// One simulated low-dose scan and its noise-free reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct DosePair {
    pub dose: DoseSetting,
    pub noisy: Slice,
    pub clean: Slice,
    pub clamped: usize,
}

/// Noise-free reconstruction of `phantom` under `config`.
pub fn clean_reconstruction(phantom: &Phantom, config: &SimulationConfig) -> Result<Slice> {
    let sino = radon_project(phantom, &config.geometry)?;
    let img = fbp_reconstruct(&sino, config.filter, config.geometry.grid_size)?;
    Ok(img.mapv(round_to_f32))
}

/// Simulates one noisy/clean pair per `(dose, seed)`; the clean member is the
/// same noise-free reconstruction for every pair.
pub fn make_dose_series(
    phantom: &Phantom,
    config: &SimulationConfig,
    doses: &[f64],
    seeds: &[u64],
) -> Result<Vec<DosePair>> {
    ensure!(!doses.is_empty(), InvalidArgument, "dose list is empty");
    ensure!(
        doses.len() == seeds.len(),
        InvalidArgument,
        "{} doses but {} seeds",
        doses.len(),
        seeds.len()
    );
    let sino = radon_project(phantom, &config.geometry)?;
    let n = config.geometry.grid_size;
    let clean = fbp_reconstruct(&sino, config.filter, n)?.mapv(round_to_f32);
    let opts = config.noise_options();
    doses
        .iter()
        .zip(seeds)
        .map(|(&i0, &seed)| {
            let dose = DoseSetting {
                intensity_i0: i0,
                electronic_variance: config.electronic_variance,
                rng_seed: seed,
            };
            let (noisy_sino, report) = inject_noise(&sino, &dose, &opts)?;
            let noisy = fbp_reconstruct(&noisy_sino, config.filter, n)?.mapv(round_to_f32);
            Ok(DosePair {
                dose,
                noisy,
                clean: clean.clone(),
                clamped: report.clamped,
            })
        })
        .collect()
}
