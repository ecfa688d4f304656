use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::engine::{evaluate, TrainContext};
use super::pipeline::train_pipeline;
use crate::dataio::{Dataset, Vocabulary};
use crate::error::{Error, Result};
use crate::evaluation::MetricsReport;

/// One configuration of an ablation sweep.
#[derive(Debug, Clone)]
pub struct Arm {
    pub name: String,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmResult {
    pub name: String,
    pub seed: u64,
    /// Validation action Top-5 at the step nearest to 1 s before the action.
    pub top5_at_1s: f64,
    pub top1_at_1s: f64,
    pub report: MetricsReport,
}

/// Trains and evaluates every arm. `data` returns the (train, validation) pair
/// for an arm's configuration, so that timeline changes re-align the features.
pub fn run_arms(arms: &[Arm], vocab: &Vocabulary, data: &dyn Fn(&TrainConfig) -> Result<(Dataset, Dataset)>) -> Result<Vec<ArmResult>> {
    let mut out = Vec::with_capacity(arms.len());
    for arm in arms {
        let (train, val) = data(&arm.config)?;
        let ctx = TrainContext::new(&arm.config, vocab);
        let outcome = train_pipeline(&train, Some(&val), &ctx)?;
        let val = match &arm.config.modalities {
            Some(m) => val.select(m)?,
            None => val,
        };
        let (_, report) = evaluate(&outcome.model, &val, vocab, ctx.report_kind())?;
        let col = report
            .at_anticipation_time(1.0)
            .or(report.columns.last())
            .ok_or_else(|| Error::Missing("prediction columns".into()))?;
        out.push(ArmResult {
            name: arm.name.clone(),
            seed: arm.config.seed,
            top5_at_1s: col.top5.action,
            top1_at_1s: col.top1.action,
            report: report.rounded(),
        });
    }
    Ok(out)
}

pub fn arms_csv(results: &[ArmResult]) -> String {
    let mut out = String::from("arm,seed,action_top1_1s,action_top5_1s\n");
    for r in results {
        writeln!(out, "{},{},{:.2},{:.2}", r.name, r.seed, r.top1_at_1s, r.top5_at_1s).unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScpPair {
    pub seed: u64,
    pub with_scp: f64,
    pub without_scp: f64,
    pub difference: f64,
}

/// Paired with/without sequence-completion pre-training runs, one pair per seed,
/// compared on validation Top-5 at 1 s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScpAblation {
    pub pairs: Vec<ScpPair>,
    pub mean_with: f64,
    pub mean_without: f64,
    pub mean_difference: f64,
}

impl ScpAblation {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,with_scp,without_scp,difference\n");
        for p in &self.pairs {
            writeln!(out, "{},{:.2},{:.2},{:.2}", p.seed, p.with_scp, p.without_scp, p.difference).unwrap();
        }
        writeln!(out, "mean,{:.2},{:.2},{:.2}", self.mean_with, self.mean_without, self.mean_difference).unwrap();
        out
    }
}

pub fn scp_ablation(base: &TrainConfig, seeds: &[u64], vocab: &Vocabulary, data: &dyn Fn(&TrainConfig) -> Result<(Dataset, Dataset)>) -> Result<ScpAblation> {
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "at least one seed is required"));
    }
    let mut pairs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let arm = |scp: bool| Arm {
            name: format!("{}scp", if scp { "" } else { "no_" }),
            config: TrainConfig {
                seed,
                scp,
                ..base.clone()
            },
        };
        let r = run_arms(&[arm(true), arm(false)], vocab, data)?;
        pairs.push(ScpPair {
            seed,
            with_scp: r[0].top5_at_1s,
            without_scp: r[1].top5_at_1s,
            difference: r[0].top5_at_1s - r[1].top5_at_1s,
        });
    }
    let n = pairs.len() as f64;
    let mean = |f: fn(&ScpPair) -> f64| pairs.iter().map(f).sum::<f64>() / n;
    Ok(ScpAblation {
        mean_with: mean(|p| p.with_scp),
        mean_without: mean(|p| p.without_scp),
        mean_difference: mean(|p| p.difference),
        pairs,
    })
}
