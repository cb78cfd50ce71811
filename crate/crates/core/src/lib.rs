//! Masked-autoencoder self-pretraining for shifted-window transformer
//! denoisers on simulated low-dose CT.
//!
//! The crate covers the whole pipeline: phantom simulation with dose-dependent
//! projection noise ([`tomo`]), dataset handling ([`data`]), shifted-window
//! attention primitives ([`swin`]) assembled into flat and U-shaped denoisers
//! ([`zoo`]), two-stage masked pretraining and supervised finetuning
//! ([`train`]), interpretability analyses ([`interpret`]) and evaluation
//! sweeps ([`eval`]).

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod interpret;
pub mod io;
pub mod nn;
pub mod swin;
pub mod tomo;
pub mod train;
pub mod zoo;

pub use error::{LomaeError, Result};

/// A single-channel 2-D image, row-major.
pub type Slice = ndarray::Array2<f64>;

/// Rounds to the nearest `f32`. Images are stored as 32-bit floats on disk, so
/// in-memory slices are kept on the same grid.
#[inline]
pub fn round_to_f32(v: f64) -> f64 {
    v as f32 as f64
}
