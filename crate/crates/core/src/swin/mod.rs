//! Shifted-window transformer primitives.

pub mod attention;
pub mod block;
pub mod grid;

pub use attention::{AttentionCache, Layout, WindowAttention};
pub use block::{swin_block_pair, BlockCache, PatchEmbed, PatchExpand, PatchMerge, StageCache, SwinBlock, SwinStage, Tap};
pub use grid::{cyclic_shift, cyclic_unshift, effective_window, pixel_shuffle, pixel_unshuffle, region_labels, window_index, TokenGrid};

use crate::nn::{FeatureMap, ParamStore};

/// Runs a stage over every member of a batch independently.
pub fn stage_forward_batch(stage: &SwinStage, ps: &ParamStore, batch: &[FeatureMap]) -> Vec<FeatureMap> {
    batch.iter().map(|x| stage.forward(ps, x, &mut Tap::default()).0).collect()
}
