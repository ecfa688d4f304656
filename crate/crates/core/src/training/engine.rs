use std::time::Instant;

use rayon::prelude::*;

use super::config::{EarlyStopMetric, Task, TrainConfig};
use super::log::{early_stop_select, EpochRecord, TrainLog};
use crate::dataio::{Dataset, Vocabulary};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, EvalRecord, MetricsReport, ReportKind};
use crate::model::{FusionModel, UnrollMode};
use crate::nn::{add_scaled, all_finite, clip_global_norm, scale, zeros_like, Phase, SgdMomentum};
use crate::tensor::Rng;

/// Per-sample gradients are computed in parallel groups of this size and
/// summed in sample order, so results do not depend on the thread count.
const GRADIENT_GROUP: usize = 8;

/// Callback invoked after every epoch with the stage name and the new record.
pub type EpochObserver<'a> = &'a (dyn Fn(&str, &EpochRecord) + Sync);

/// Shared inputs of every training stage.
#[derive(Clone, Copy)]
pub struct TrainContext<'a> {
    pub config: &'a TrainConfig,
    pub vocab: &'a Vocabulary,
    pub observer: Option<EpochObserver<'a>>,
}

impl<'a> TrainContext<'a> {
    pub fn new(config: &'a TrainConfig, vocab: &'a Vocabulary) -> Self {
        Self {
            config,
            vocab,
            observer: None,
        }
    }

    pub fn report_kind(&self) -> ReportKind {
        match self.config.task {
            Task::Anticipation => ReportKind::Anticipation,
            Task::EarlyRecognition => ReportKind::EarlyRecognition,
        }
    }
}

/// One optimization stage.
#[derive(Debug, Clone)]
pub struct Stage {
    pub name: String,
    /// Random-stream prefix; every stage of a run must use a distinct one.
    pub tags: Vec<u64>,
    pub epochs: usize,
    pub mode: UnrollMode,
    pub freeze_branches: bool,
    pub selection: EarlyStopMetric,
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub model: FusionModel,
    pub log: TrainLog,
    /// Optimizer state matching the returned parameters.
    pub optimizer: SgdMomentum,
}

/// Eval-mode predictions for every sample, in dataset order.
pub fn predict_records(model: &FusionModel, data: &Dataset) -> Result<Vec<EvalRecord>> {
    check_modalities(model, data)?;
    data.samples
        .par_iter()
        .map(|s| Ok(EvalRecord::new(&s.record, model.predict(&s.features)?)))
        .collect()
}

/// Early-recognition predictions: one per snippet of every sample, whatever
/// timeline the model was trained with.
pub fn predict_early_records(model: &FusionModel, data: &Dataset) -> Result<Vec<EvalRecord>> {
    check_modalities(model, data)?;
    data.samples
        .par_iter()
        .map(|s| Ok(EvalRecord::new(&s.record, model.early_recognition_forward(&s.features)?)))
        .collect()
}

pub fn evaluate(model: &FusionModel, data: &Dataset, vocab: &Vocabulary, kind: ReportKind) -> Result<(Vec<EvalRecord>, MetricsReport)> {
    let records = predict_records(model, data)?;
    let report = aggregate(&records, vocab, kind)?;
    Ok((records, report))
}

fn check_modalities(model: &FusionModel, data: &Dataset) -> Result<()> {
    if model.config.modalities != data.modalities {
        return Err(Error::invalid(
            "modalities",
            format!("model expects {:?} but the dataset provides {:?}", model.config.modalities, data.modalities),
        ));
    }
    Ok(())
}

fn selection_value(metric: EarlyStopMetric, report: &MetricsReport) -> Option<f64> {
    match metric {
        EarlyStopMetric::Top5AtTau { tau } => report.at_anticipation_time(tau).map(|c| c.top5.action),
        EarlyStopMetric::MeanTop1 => {
            Some(report.columns.iter().map(|c| c.top1.action).sum::<f64>() / report.columns.len() as f64)
        }
        EarlyStopMetric::LastEpoch => None,
    }
}

fn column_labels(model: &FusionModel, kind: ReportKind) -> Vec<String> {
    let spec = model.spec();
    spec.anticipation_steps()
        .map(|t| match kind {
            ReportKind::Anticipation => format!("{:.2}s", spec.alpha * (spec.total_steps() + 1 - t) as f64),
            ReportKind::EarlyRecognition => format!("{:.2}%", 100.0 * spec.observation_ratio(t)),
        })
        .collect()
}

/// Mini-batch SGD with momentum over `train`, validating on `val` after every
/// epoch and keeping the parameters of the best epoch.
///
/// Samples are reshuffled every epoch; batch gradients are the mean of the
/// per-sample gradients; a non-finite loss or parameter aborts the stage.
pub fn run_stage(mut model: FusionModel, train: &Dataset, val: Option<&Dataset>, ctx: &TrainContext<'_>, stage: &Stage) -> Result<StageOutcome> {
    let cfg = ctx.config;
    cfg.validate()?;
    check_modalities(&model, train)?;
    if let Some(v) = val {
        check_modalities(&model, v)?;
    }
    if train.is_empty() {
        return Err(Error::invalid("training set", "empty dataset"));
    }
    let kind = ctx.report_kind();
    let mut log = TrainLog::new(stage.name.clone(), stage.selection.name(), column_labels(&model, kind));
    let mut opt = SgdMomentum::new(cfg.learning_rate, cfg.momentum);
    let mut best: Option<(f64, FusionModel, SgdMomentum)> = None;
    let tag = |extra: &[u64]| -> Vec<u64> { stage.tags.iter().chain(extra).copied().collect() };

    for epoch in 1..=stage.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train.len()).collect();
        Rng::derive(cfg.seed, &tag(&[epoch as u64, u64::MAX])).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = zeros_like(&model);
            for (g, group) in batch.chunks(GRADIENT_GROUP).enumerate() {
                let results: Vec<(f64, FusionModel)> = group
                    .par_iter()
                    .enumerate()
                    .map(|(i, &idx)| {
                        let position = (b * cfg.batch_size + g * GRADIENT_GROUP + i) as u64;
                        let mut rng = Rng::derive(cfg.seed, &tag(&[epoch as u64, position]));
                        let s = &train.samples[idx];
                        model.loss_and_grad(&s.features, s.record.action_id, stage.mode, &mut Phase::Train(&mut rng))
                    })
                    .collect::<Result<_>>()
                    .map_err(|e| match e {
                        Error::NonFinite(_) => Error::Diverged { epoch, batch: b, loss: f64::NAN },
                        e => e,
                    })?;
                for (loss, sample_grads) in &results {
                    if !loss.is_finite() {
                        return Err(Error::Diverged { epoch, batch: b, loss: *loss });
                    }
                    loss_sum += loss;
                    add_scaled(&mut grads, sample_grads, 1.0)?;
                }
            }
            scale(&mut grads, 1.0 / batch.len() as f64);
            if stage.freeze_branches {
                grads.branches.iter_mut().for_each(|g| scale(g, 0.0));
            }
            if let Some(max) = cfg.clip_norm {
                clip_global_norm(&mut grads, max);
            }
            opt.step(&mut model, &grads)?;
            if !all_finite(&model) {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: f64::NAN,
                });
            }
        }

        let mut record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_top1: Vec::new(),
            val_top5: Vec::new(),
            metric: None,
        };
        if let Some(v) = val.filter(|v| !v.is_empty()) {
            let (_, report) = evaluate(&model, v, ctx.vocab, kind)?;
            record.val_top1 = report.columns.iter().map(|c| c.top1.action).collect();
            record.val_top5 = report.columns.iter().map(|c| c.top5.action).collect();
            record.metric = selection_value(stage.selection, &report);
            if let Some(m) = record.metric {
                if best.as_ref().is_none_or(|(b, _, _)| m > *b) {
                    best = Some((m, model.clone(), opt.clone()));
                }
            }
        }
        if let Some(obs) = ctx.observer {
            obs(&stage.name, &record);
        }
        log.epochs.push(record);
        log.wall_seconds.push(started.elapsed().as_secs_f64());
    }

    let (model, optimizer) = match best {
        Some((_, m, o)) => {
            log.selected_epoch = Some(early_stop_select(&log)?);
            (m, o)
        }
        None => {
            log.selected_epoch = log.epochs.last().map(|e| e.epoch);
            (model, opt)
        }
    };
    Ok(StageOutcome { model, log, optimizer })
}
