//! Maximum-likelihood training: low-fidelity pretraining, high-fidelity
//! fine-tuning, the high-fidelity-only baseline, standardization and
//! checkpoints.

mod checkpoint;
mod stages;
mod standardize;
mod trainer;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use stages::{run_hf_only_stage, run_lf_stage, run_mf_stage, split_validation, StageOutput};
pub use standardize::{Standardizer, STD_FLOOR};
pub use trainer::{
    finetune_hf, fit, mean_nll, pretrain_lf, train_hf_only, EpochRecord, TrainConfig, TrainReport, TrainSet,
};
