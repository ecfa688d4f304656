use serde::{Deserialize, Serialize};

use super::engine::{run_stage, Stage, StageOutcome, TrainContext};
use super::log::TrainLog;
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::model::{BranchKind, FusionModel, FusionStrategy, UnrollMode};
use crate::nn::{Checkpoint, SgdMomentum};
use crate::tensor::Rng;

const TAG_SCP: u64 = 1;
const TAG_BRANCH: u64 = 2;
const TAG_FUSION: u64 = 3;
const TAG_INIT: u64 = 4;
/// Modality slot used for the fusion network and the early-fusion branch.
pub const SLOT_JOINT: u64 = 1 << 16;

/// Freshly initialized single-branch model for `data.modalities[0]`.
pub fn init_branch_model(data: &Dataset, slot: usize, ctx: &TrainContext<'_>) -> Result<FusionModel> {
    if data.modalities.len() != 1 {
        return Err(Error::invalid("modalities", format!("a branch trains on one modality, got {:?}", data.modalities)));
    }
    let cfg = ctx
        .config
        .model_config(&data.modalities, &data.dims(), ctx.vocab.num_actions(), FusionStrategy::Late { weights: vec![1.0] })?;
    FusionModel::new(cfg, &mut Rng::derive(ctx.config.seed, &[TAG_INIT, slot as u64]))
}

/// Freshly initialized model with the configured fusion strategy over all of `data`'s modalities.
pub fn init_fusion_model(data: &Dataset, ctx: &TrainContext<'_>) -> Result<FusionModel> {
    let cfg = ctx
        .config
        .model_config(&data.modalities, &data.dims(), ctx.vocab.num_actions(), ctx.config.strategy.clone())?;
    FusionModel::new(cfg, &mut Rng::derive(ctx.config.seed, &[TAG_INIT, SLOT_JOINT]))
}

fn name(model: &FusionModel) -> String {
    model.branches.iter().map(|b| b.modality.as_str()).collect::<Vec<_>>().join("+")
}

/// Sequence-completion pre-training: the unrolling LSTM reads the future
/// in-window features, so the loss mainly shapes the rolling encoder.
pub fn train_branch_scp(model: FusionModel, train: &Dataset, val: Option<&Dataset>, slot: usize, epochs: usize, ctx: &TrainContext<'_>) -> Result<StageOutcome> {
    let stage = Stage {
        name: format!("scp.{}", name(&model)),
        tags: vec![TAG_SCP, slot as u64],
        epochs,
        mode: UnrollMode::SequenceCompletion,
        freeze_branches: false,
        selection: ctx.config.selection(),
    };
    run_stage(model, train, val, ctx, &stage)
}

/// Fine-tuning of a branch for the anticipation (or early-recognition) task.
pub fn train_branch_anticipation(
    model: FusionModel,
    train: &Dataset,
    val: Option<&Dataset>,
    slot: usize,
    epochs: usize,
    ctx: &TrainContext<'_>,
) -> Result<StageOutcome> {
    let stage = Stage {
        name: format!("branch.{}", name(&model)),
        tags: vec![TAG_BRANCH, slot as u64],
        epochs,
        mode: UnrollMode::Anticipation,
        freeze_branches: false,
        selection: ctx.config.selection(),
    };
    run_stage(model, train, val, ctx, &stage)
}

/// End-to-end training of the fused model (attention network and, unless
/// frozen, the branches).
pub fn train_fusion(model: FusionModel, train: &Dataset, val: Option<&Dataset>, ctx: &TrainContext<'_>) -> Result<StageOutcome> {
    let stage = Stage {
        name: format!("fusion.{}", model.config.strategy.name()),
        tags: vec![TAG_FUSION, SLOT_JOINT],
        epochs: ctx.config.fusion_epochs(),
        mode: UnrollMode::Anticipation,
        freeze_branches: ctx.config.freeze_branches,
        selection: ctx.config.selection(),
    };
    run_stage(model, train, val, ctx, &stage)
}

/// Result of a complete training schedule.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub model: FusionModel,
    pub optimizer: SgdMomentum,
    pub logs: Vec<TrainLog>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub epochs: usize,
    pub selected_epoch: Option<usize>,
    pub metric_name: String,
    pub selected_metric: Option<f64>,
}

/// Parameters under `model`, optimizer velocities and `metadata`.
pub fn checkpoint(model: &FusionModel, optimizer: &SgdMomentum, metadata: serde_json::Value) -> Checkpoint {
    let mut ck = Checkpoint::new(metadata);
    ck.push_params("model", model);
    ck.push_velocity(optimizer.velocity());
    ck
}

impl PipelineOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        let meta = serde_json::json!({ "stages": self.summaries() });
        checkpoint(&self.model, &self.optimizer, meta)
    }

    pub fn summaries(&self) -> Vec<StageSummary> {
        self.logs
            .iter()
            .map(|l| StageSummary {
                stage: l.stage.clone(),
                epochs: l.epochs.len(),
                selected_epoch: l.selected_epoch,
                metric_name: l.metric_name.clone(),
                selected_metric: l
                    .selected_epoch
                    .and_then(|e| l.epochs.iter().find(|r| r.epoch == e))
                    .and_then(|r| r.metric),
            })
            .collect()
    }
}

/// Trains one branch: optional sequence-completion pre-training, then fine-tuning.
pub fn train_branch(
    data: &Dataset,
    val: Option<&Dataset>,
    slot: usize,
    ctx: &TrainContext<'_>,
) -> Result<(FusionModel, SgdMomentum, Vec<TrainLog>)> {
    let mut model = init_branch_model(data, slot, ctx)?;
    let mut logs = Vec::new();
    let cfg = ctx.config;
    let modality = &data.modalities[0];
    if cfg.scp && cfg.branch_kind == BranchKind::RollingUnrolling && cfg.scp_epochs_for(modality) > 0 {
        let out = train_branch_scp(model, data, val, slot, cfg.scp_epochs_for(modality), ctx)?;
        model = out.model;
        logs.push(out.log);
    }
    let out = train_branch_anticipation(model, data, val, slot, cfg.branch_epochs(), ctx)?;
    logs.push(out.log);
    Ok((out.model, out.optimizer, logs))
}

/// The full schedule over the configured modality subset:
///
/// - early fusion trains one branch over concatenated features (SCP, then fine-tuning);
/// - otherwise every modality branch is trained on its own, the branches are
///   assembled with the configured fusion strategy and, with more than one
///   modality, the assembly is trained end to end.
pub fn train_pipeline(train: &Dataset, val: Option<&Dataset>, ctx: &TrainContext<'_>) -> Result<PipelineOutcome> {
    let cfg = ctx.config;
    cfg.validate()?;
    let train = match &cfg.modalities {
        Some(m) => train.select(m)?,
        None => train.clone(),
    };
    let val = match (val, &cfg.modalities) {
        (Some(v), Some(m)) => Some(v.select(m)?),
        (Some(v), None) => Some(v.clone()),
        (None, _) => None,
    };
    let val = val.as_ref();
    let mut logs = Vec::new();

    if cfg.strategy == FusionStrategy::Early {
        let mut model = init_fusion_model(&train, ctx)?;
        if cfg.scp && cfg.branch_kind == BranchKind::RollingUnrolling {
            let epochs = cfg.scp_epochs_for("early");
            if epochs > 0 {
                let out = train_branch_scp(model, &train, val, SLOT_JOINT as usize, epochs, ctx)?;
                model = out.model;
                logs.push(out.log);
            }
        }
        let out = train_branch_anticipation(model, &train, val, SLOT_JOINT as usize, cfg.branch_epochs(), ctx)?;
        logs.push(out.log);
        return Ok(PipelineOutcome {
            model: out.model,
            optimizer: out.optimizer,
            logs,
        });
    }

    let mut branches = Vec::with_capacity(train.modalities.len());
    let mut optimizer = SgdMomentum::new(cfg.learning_rate, cfg.momentum);
    for (slot, m) in train.modalities.iter().enumerate() {
        let one = std::slice::from_ref(m);
        let val_one = val.map(|v| v.select(one)).transpose()?;
        let (model, opt, branch_logs) = train_branch(&train.select(one)?, val_one.as_ref(), slot, ctx)?;
        logs.extend(branch_logs);
        branches.extend(model.branches);
        optimizer = opt;
    }
    let mut model = init_fusion_model(&train, ctx)?;
    model.set_branches(branches)?;
    if train.modalities.len() > 1 {
        let out = train_fusion(model, &train, val, ctx)?;
        logs.push(out.log);
        model = out.model;
        optimizer = out.optimizer;
    } else {
        // Branch velocities do not match a model with an attention network.
        optimizer.reset();
    }
    Ok(PipelineOutcome { model, optimizer, logs })
}
