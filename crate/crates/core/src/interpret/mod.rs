//! Saliency, representation similarity, noise spectra and line profiles.

pub mod cka;
pub mod gradcam;
pub mod nps;
pub mod profile;

pub use cka::{cka, cka_across_doses, hsic, CkaMatrix};
pub use gradcam::{mae_gradcam, LayerProbe, Region, SaliencyMap, ToyNet};
pub use nps::{nps_map, NpsMap};
pub use profile::{intensity_profile, profile_mae, Axis};
