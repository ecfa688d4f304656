//! The staged training protocol: per-branch sequence-completion pre-training,
//! per-branch fine-tuning and joint fusion training, each with early stopping
//! on a validation metric, plus ablation harnesses.
//!
//! Every random draw derives from the run seed, the stage, the epoch and the
//! sample position, so equal seeds give bit-identical parameters regardless of
//! the number of worker threads.

mod ablation;
mod config;
mod engine;
mod log;
mod pipeline;

pub use ablation::{arms_csv, run_arms, scp_ablation, Arm, ArmResult, ScpAblation, ScpPair};
pub use config::{EarlyStopMetric, Task, TrainConfig};
pub use engine::{evaluate, predict_early_records, predict_records, run_stage, EpochObserver, Stage, StageOutcome, TrainContext};
pub use log::{early_stop_select, EpochRecord, TrainLog};
pub use pipeline::{
    checkpoint, init_branch_model, SLOT_JOINT, init_fusion_model, train_branch, train_branch_anticipation, train_branch_scp, train_fusion, train_pipeline,
    PipelineOutcome, StageSummary,
};
