//! File formats: slice tensors, pair manifests, weight archives and PNG output.

pub mod archive;
pub mod manifest;
pub mod render;
pub mod tensor;

pub use manifest::{read_manifest, resolve, write_manifest, ManifestRecord, MANIFEST_NAME};
pub use render::{save_png, save_png_auto};
pub use tensor::{read_slice, write_slice};
