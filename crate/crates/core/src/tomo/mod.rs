//! Phantom generation, projection, low-dose noise simulation and FBP.

pub mod noise;
pub mod phantom;
pub mod radon;
pub mod series;

pub use noise::{
    inject_noise, sample_poisson, DoseSetting, NoiseOptions, NoiseReport, PoissonMode,
    FULL_DOSE_I0, QUARTER_DOSE_I0, STANDARD_DOSE_SERIES,
};
pub use phantom::{make_phantom, Phantom, PhantomKind};
pub use radon::{fbp_reconstruct, radon_project, Beam, ReconFilter, ScanGeometry, Sinogram};
pub use series::{clean_reconstruction, make_dose_series, DosePair, SimulationConfig};
