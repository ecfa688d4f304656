//! The Rolling-Unrolling architecture and its fusion layer.

mod branch;
mod description;
mod fusion;
mod loss;
mod marginal;
mod timeline;

pub use branch::{BranchKind, BranchOutput, BranchTape, RuBranch};
pub use description::ModelDescription;
pub use fusion::{FusionModel, FusionStrategy, FusionTape, ModelConfig, PredictionTimeline, StepPrediction};
pub use loss::{anticipation_loss, anticipation_loss_grad};
pub use marginal::marginalize;
pub use timeline::TimelineSpec;

use serde::{Deserialize, Serialize};

/// Which feature the unrolling LSTM reads at iteration `j` of step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnrollMode {
    /// The current feature `f_t` at every iteration.
    Anticipation,
    /// The in-window future feature `f_{t+j-1}` (sequence completion pre-training).
    SequenceCompletion,
}
