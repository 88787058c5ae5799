//! Masked-token and masked-entity pretraining.

mod adamw;
mod loss;
mod masking;
mod train;

pub use adamw::{adamw_step, AdamWConfig, OptimizerState};
pub use loss::{masked_batch_loss, masked_ce_loss, typing_batch_loss, BatchLoss, DropoutSeeds};
pub use masking::{mask_mep, mask_mlm, MaskedInstance, MaskingConfig, Objective};
pub use train::{
    loss_log_csv, mask_corpus, mask_one, train, write_loss_log, ObjectiveMix, StepRecord, TrainConfig, TrainSummary,
};
