//! Masked self-pretraining on noisy slices and supervised finetuning.

pub mod loss;
pub mod mask;
pub mod run;
pub mod schedule;

pub use loss::{
    loss_combined, loss_combined_grad, loss_l1, loss_l1_grad, loss_ssim, loss_ssim_grad, LossWeights, SsimParams,
};
pub use mask::{apply_mask, make_mask, MaskSpec, DEFAULT_MASK_PATCH, DEFAULT_MASK_RATIO};
pub use run::{
    finetune, finetune_from_scratch, pretrain, write_history, HistoryRow, TrainConfig, TrainOutcome, TrainStage,
    TrainState,
};
pub use schedule::{StepDecay, PAPER_DECAY_EVERY, PAPER_DECAY_FACTOR, PAPER_LR};
