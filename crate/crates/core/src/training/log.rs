use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::with_suffix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean training loss over the epoch's samples.
    pub train_loss: f64,
    /// Validation action Top-1 per prediction step (empty without validation data).
    pub val_top1: Vec<f64>,
    /// Validation action Top-5 per prediction step.
    pub val_top5: Vec<f64>,
    /// Value of the selection metric, when validation ran.
    pub metric: Option<f64>,
}

/// Per-epoch history of one training stage.
///
/// Wall-clock durations are kept out of the serialized log so that equal runs
/// produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub stage: String,
    pub metric_name: String,
    /// Labels of the validation columns (anticipation times or observation ratios).
    pub columns: Vec<String>,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub selected_epoch: Option<usize>,
    #[serde(skip)]
    pub wall_seconds: Vec<f64>,
}

impl TrainLog {
    pub fn new(stage: impl Into<String>, metric_name: impl Into<String>, columns: Vec<String>) -> Self {
        Self {
            stage: stage.into(),
            metric_name: metric_name.into(),
            columns,
            epochs: Vec::new(),
            selected_epoch: None,
            wall_seconds: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,metric");
        for c in &self.columns {
            write!(out, ",top1_{c},top5_{c}").unwrap();
        }
        out.push('\n');
        for e in &self.epochs {
            write!(out, "{},{:.6},", e.epoch, e.train_loss).unwrap();
            if let Some(m) = e.metric {
                write!(out, "{m:.2}").unwrap();
            }
            for (a, b) in e.val_top1.iter().zip(&e.val_top5) {
                write!(out, ",{a:.2},{b:.2}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        let csv = with_suffix(stem, "csv");
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = with_suffix(stem, "json");
        fs::write(&json, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&json, e))
    }
}

/// Earliest epoch reaching the maximum of the selection metric.
pub fn early_stop_select(log: &TrainLog) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for e in &log.epochs {
        let Some(m) = e.metric else { continue };
        if !m.is_finite() {
            return Err(Error::NonFinite("selection metric"));
        }
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((e.epoch, m));
        }
    }
    best.map(|(e, _)| e)
        .ok_or_else(|| Error::Missing(format!("validation metric `{}` in the training log", log.metric_name)))
}
