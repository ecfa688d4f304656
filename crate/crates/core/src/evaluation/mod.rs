//! Anticipation and early-recognition metrics over prediction timelines.
//!
//! Conventions:
//!
//! - Top-k ties are broken by lower class id: class `c` ranks above `d` when
//!   `s_c > s_d`, or `s_c == s_d` and `c < d`.
//! - Verb and noun metrics use marginals of the softmax of the action scores.
//! - Classes without test instances are left out of mean recall and counted.
//! - A sample never recognized at Top-1 contributes an observation ratio of 100%
//!   and is counted separately.
//! - Sums run in a fixed order (records in input order, classes ascending).

mod metrics;
mod report;

pub use metrics::{mean_topk_recall, min_observation_ratio, time_to_action, topk_hit, Mor, Recall};
pub use report::{
    aggregate, read_predictions, write_predictions, Column, EvalRecord, MetricsReport, MorSummary, RecallSummary, ReportKind,
    Target, TargetScores, Triple,
};
