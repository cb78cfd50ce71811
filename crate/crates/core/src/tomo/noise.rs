//! Dose-dependent projection noise: Poisson photon statistics plus Gaussian
//! electronic noise, mapped back to line integrals through the log transform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::radon::Sinogram;
use crate::error::{ensure, LomaeError, Result};

/// Incident photon counts of the standard low-dose series (10% down to 2%).
pub const STANDARD_DOSE_SERIES: [f64; 5] = [1.0e5, 8.0e4, 6.0e4, 4.0e4, 2.0e4];
/// Incident photon count of a full-dose scan in the standard series.
pub const FULL_DOSE_I0: f64 = 1.0e6;
pub const QUARTER_DOSE_I0: f64 = 0.25 * FULL_DOSE_I0;
pub const DEFAULT_ELECTRONIC_VARIANCE: f64 = 10.0;
/// Smallest detected count allowed into the logarithm.
pub const DEFAULT_COUNT_FLOOR: f64 = 0.1;
/// Poisson means below this use exact inversion, above it a rounded normal draw.
pub const POISSON_INVERSION_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseSetting {
    pub intensity_i0: f64,
    pub electronic_variance: f64,
    pub rng_seed: u64,
}

impl DoseSetting {
    pub fn new(intensity_i0: f64, rng_seed: u64) -> Self {
        Self {
            intensity_i0,
            electronic_variance: DEFAULT_ELECTRONIC_VARIANCE,
            rng_seed,
        }
    }
}

/// How photon counts are drawn. `Mean` replaces every draw with its expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoissonMode {
    #[default]
    Sample,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseOptions {
    pub count_floor: f64,
    pub poisson: PoissonMode,
    /// Fraction of clamped entries above which injection fails.
    pub max_clamp_fraction: f64,
}

impl Default for NoiseOptions {
    fn default() -> Self {
        Self {
            count_floor: DEFAULT_COUNT_FLOOR,
            poisson: PoissonMode::Sample,
            max_clamp_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseReport {
    pub clamped: usize,
    pub total: usize,
}

/// Draws a Poisson variate: exact CDF inversion for small means, otherwise
/// `round(mean + sqrt(mean) * z)` clipped at zero.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if mean < POISSON_INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut k = 0u32;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf && k < 1000 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        k as f64
    } else {
        let z: f64 = rng.sample(StandardNormal);
        (mean + mean.sqrt() * z).round().max(0.0)
    }
}

/// Applies the low-dose noise model to a noise-free sinogram.
pub fn inject_noise(
    clean: &Sinogram,
    dose: &DoseSetting,
    opts: &NoiseOptions,
) -> Result<(Sinogram, NoiseReport)> {
    ensure!(
        dose.intensity_i0 > 0.0 && dose.intensity_i0.is_finite(),
        InvalidArgument,
        "I0 must be positive, got {}",
        dose.intensity_i0
    );
    ensure!(
        dose.electronic_variance >= 0.0,
        InvalidArgument,
        "electronic variance must be non-negative"
    );
    ensure!(
        opts.count_floor > 0.0,
        InvalidArgument,
        "count floor must be positive"
    );
    let i0 = dose.intensity_i0;
    let sigma_e = dose.electronic_variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(dose.rng_seed);
    let mut noisy = clean.clone();
    let mut clamped = 0usize;
    for v in noisy.values.iter_mut() {
        ensure!(
            v.is_finite() && *v >= 0.0,
            InvalidArgument,
            "noise-free line integrals must be finite and non-negative, got {v}"
        );
        let expected = i0 * (-*v).exp();
        ensure!(
            expected > 0.0,
            InvalidArgument,
            "expected count underflows for line integral {v}"
        );
        let (counts, electronic) = match opts.poisson {
            PoissonMode::Sample => {
                let c = sample_poisson(expected, &mut rng);
                let z: f64 = rng.sample(StandardNormal);
                (c, sigma_e * z)
            }
            PoissonMode::Mean => (expected, 0.0),
        };
        let mut detected = counts + electronic;
        if detected < opts.count_floor {
            detected = opts.count_floor;
            clamped += 1;
        }
        *v = (i0 / detected).ln();
    }
    let total = noisy.values.len();
    if clamped as f64 > opts.max_clamp_fraction * total as f64 {
        return Err(LomaeError::DoseTooLow { clamped, total });
    }
    Ok((noisy, NoiseReport { clamped, total }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tomo::radon::ScanGeometry;
    use ndarray::Array2;

    fn flat_sino(value: f64, views: usize) -> Sinogram {
        let g = ScanGeometry::parallel(16, 1.0, views);
        let mut s = Sinogram::zeros(g);
        s.values = Array2::from_elem((views, g.n_detectors), value);
        s
    }

    #[test]
    fn mean_hook_is_identity_at_zero() {
        let s = flat_sino(0.0, 4);
        let dose = DoseSetting {
            intensity_i0: 1e5,
            electronic_variance: 0.0,
            rng_seed: 1,
        };
        let opts = NoiseOptions {
            poisson: PoissonMode::Mean,
            ..Default::default()
        };
        let (n, rep) = inject_noise(&s, &dose, &opts).unwrap();
        assert_eq!(rep.clamped, 0);
        assert!(n.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_hook_recovers_line_integrals() {
        let mut s = flat_sino(0.0, 3);
        for (k, v) in s.values.iter_mut().enumerate() {
            *v = 0.05 * k as f64;
        }
        let dose = DoseSetting {
            intensity_i0: 2e4,
            electronic_variance: 0.0,
            rng_seed: 0,
        };
        let opts = NoiseOptions {
            poisson: PoissonMode::Mean,
            ..Default::default()
        };
        let (n, _) = inject_noise(&s, &dose, &opts).unwrap();
        for (a, b) in n.values.iter().zip(s.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_and_reproducible() {
        let s = flat_sino(1.0, 5);
        let dose = DoseSetting::new(4e4, 11);
        let a = inject_noise(&s, &dose, &NoiseOptions::default()).unwrap();
        let b = inject_noise(&s, &dose, &NoiseOptions::default()).unwrap();
        assert_eq!(a.0, b.0);
        let c = inject_noise(&s, &DoseSetting::new(4e4, 12), &NoiseOptions::default()).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn too_many_clamps_fail() {
        // expected count ~ 2e4 * e^-14 ≈ 0.017 photons per ray
        let s = flat_sino(14.0, 8);
        let dose = DoseSetting::new(2e4, 3);
        match inject_noise(&s, &dose, &NoiseOptions::default()) {
            Err(LomaeError::DoseTooLow { clamped, total }) => {
                assert!(clamped as f64 > 0.01 * total as f64)
            }
            other => panic!("expected DoseTooLow, got {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_input_and_bad_dose() {
        let s = flat_sino(-0.1, 2);
        assert!(inject_noise(&s, &DoseSetting::new(1e5, 0), &NoiseOptions::default()).is_err());
        let s = flat_sino(0.1, 2);
        assert!(inject_noise(&s, &DoseSetting::new(0.0, 0), &NoiseOptions::default()).is_err());
    }

    #[test]
    fn small_mean_poisson_inversion_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mean = 4.5;
        let draws: Vec<f64> = (0..40_000).map(|_| sample_poisson(mean, &mut rng)).collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((m - mean).abs() < 0.05, "mean {m}");
        assert!((var - mean).abs() < 0.2, "var {var}");
        assert!(draws.iter().all(|d| d.fract() == 0.0 && *d >= 0.0));
    }
}
