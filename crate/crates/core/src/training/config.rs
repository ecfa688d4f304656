use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BranchKind, FusionStrategy, ModelConfig, TimelineSpec};

/// Validation metric used to pick the best epoch of a stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EarlyStopMetric {
    /// Top-5 action accuracy at the step nearest to `tau` seconds before the action.
    Top5AtTau { tau: f64 },
    /// Top-1 action accuracy averaged over all prediction steps.
    MeanTop1,
    /// No selection: keep the parameters of the last epoch.
    LastEpoch,
}

impl EarlyStopMetric {
    pub fn name(&self) -> String {
        match self {
            EarlyStopMetric::Top5AtTau { tau } => format!("action_top5@{tau:.2}s"),
            EarlyStopMetric::MeanTop1 => "action_top1_mean".into(),
            EarlyStopMetric::LastEpoch => "last_epoch".into(),
        }
    }
}

/// Which task the schedule trains for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Anticipation,
    EarlyRecognition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub matt_dropout: f64,
    pub resample_masks_per_step: bool,
    pub timeline: TimelineSpec,
    pub strategy: FusionStrategy,
    pub branch_kind: BranchKind,
    /// Modality subset, in order; `None` uses every modality of the dataset.
    pub modalities: Option<Vec<String>>,
    /// Run sequence-completion pre-training before fine-tuning each branch.
    pub scp: bool,
    /// SCP epochs per modality name; modalities not listed use `default_scp_epochs`.
    pub scp_epochs: BTreeMap<String, usize>,
    pub default_scp_epochs: usize,
    pub branch_epochs: usize,
    pub fusion_epochs: usize,
    /// Keep branch parameters fixed while training the fusion stage.
    pub freeze_branches: bool,
    pub early_stop: EarlyStopMetric,
    pub task: Task,
    /// Snippets per action for early recognition.
    pub snippets: usize,
    /// Epochs of every early-recognition stage (SCP and main task alike).
    pub early_recognition_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            clip_norm: Some(5.0),
            hidden_dim: 1024,
            dropout: 0.8,
            matt_dropout: 0.8,
            resample_masks_per_step: true,
            timeline: TimelineSpec::default(),
            strategy: FusionStrategy::Matt,
            branch_kind: BranchKind::RollingUnrolling,
            modalities: None,
            scp: true,
            scp_epochs: [("rgb", 100), ("flow", 100), ("obj", 200)]
                .into_iter()
                .map(|(m, e)| (m.to_string(), e))
                .collect(),
            default_scp_epochs: 100,
            branch_epochs: 100,
            fusion_epochs: 100,
            freeze_branches: false,
            early_stop: EarlyStopMetric::Top5AtTau { tau: 1.0 },
            task: Task::Anticipation,
            snippets: 8,
            early_recognition_epochs: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", format!("{} must be finite and >= 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", format!("{} outside [0, 1)", self.momentum)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::invalid("clip_norm", format!("{c} must be positive")));
            }
        }
        if self.hidden_dim == 0 {
            return Err(Error::invalid("hidden_dim", "must be positive"));
        }
        if self.modalities.as_ref().is_some_and(|m| m.is_empty()) {
            return Err(Error::invalid("modalities", "subset must not be empty"));
        }
        if self.task == Task::EarlyRecognition && self.snippets == 0 {
            return Err(Error::invalid("snippets", "must be at least 1"));
        }
        self.timeline.validate()?;
        crate::nn::dropout::validate_probability(self.dropout)?;
        crate::nn::dropout::validate_probability(self.matt_dropout)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    /// Timeline of the configured task.
    pub fn task_timeline(&self) -> Result<TimelineSpec> {
        match self.task {
            Task::Anticipation => Ok(self.timeline),
            Task::EarlyRecognition => TimelineSpec::early_recognition(self.timeline.alpha, self.snippets),
        }
    }

    pub fn scp_epochs_for(&self, modality: &str) -> usize {
        match self.task {
            Task::EarlyRecognition => self.early_recognition_epochs,
            Task::Anticipation => self.scp_epochs.get(modality).copied().unwrap_or(self.default_scp_epochs),
        }
    }

    pub fn branch_epochs(&self) -> usize {
        match self.task {
            Task::EarlyRecognition => self.early_recognition_epochs,
            Task::Anticipation => self.branch_epochs,
        }
    }

    pub fn fusion_epochs(&self) -> usize {
        match self.task {
            Task::EarlyRecognition => self.early_recognition_epochs,
            Task::Anticipation => self.fusion_epochs,
        }
    }

    /// Selection metric of the configured task; early recognition always uses
    /// the mean Top-1 over observation rates unless selection is disabled.
    pub fn selection(&self) -> EarlyStopMetric {
        match (self.task, self.early_stop) {
            (_, EarlyStopMetric::LastEpoch) => EarlyStopMetric::LastEpoch,
            (Task::EarlyRecognition, _) => EarlyStopMetric::MeanTop1,
            (Task::Anticipation, m) => m,
        }
    }

    /// Model configuration for the given modalities; late fusion without
    /// explicit weights gets uniform ones.
    pub fn model_config(&self, modalities: &[String], input_dims: &[usize], num_actions: usize, strategy: FusionStrategy) -> Result<ModelConfig> {
        let strategy = match strategy {
            FusionStrategy::Late { weights } if weights.is_empty() => FusionStrategy::late_uniform(modalities.len()),
            s => s,
        };
        let cfg = ModelConfig {
            modalities: modalities.to_vec(),
            input_dims: input_dims.to_vec(),
            hidden_dim: self.hidden_dim,
            num_actions,
            timeline: self.task_timeline()?,
            strategy,
            branch_kind: self.branch_kind,
            dropout: self.dropout,
            matt_dropout: self.matt_dropout,
            resample_masks_per_step: self.resample_masks_per_step,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
