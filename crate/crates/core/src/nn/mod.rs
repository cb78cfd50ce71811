//! Minimal dense neural-network engine: parameter storage, per-token layers,
//! 3x3 convolutions and Adam, all in `f64` with explicit backward passes.

pub mod adam;
pub mod layers;
pub mod params;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use layers::{gelu, gelu_grad, gemm, Conv3x3, ConvCache, LayerNorm, LayerNormCache, Linear, Mlp, MlpCache};
pub use params::{Grads, Init, NamedTensor, ParamId, ParamStore};
pub use tensor::FeatureMap;
