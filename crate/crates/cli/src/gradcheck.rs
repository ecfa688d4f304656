use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use rulstm::model::{BranchKind, ModelConfig};
use rulstm::nn::{gradcheck, Parameters, Phase};
use rulstm::{FusionModel, FusionStrategy, Matrix, Rng, TimelineSpec, UnrollMode};
use serde::{Deserialize, Serialize};

use crate::manifest::RunManifest;
use crate::synth::load_json;
use crate::{out_dir, Global};

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// JSON toy-model config; defaults are used for missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for `gradcheck.json` and the run manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Perturb the analytic gradient of the first block (negative control).
    #[arg(long, hide = true)]
    pub corrupt_backward: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub input_dims: Vec<usize>,
    pub hidden_dim: usize,
    pub num_actions: usize,
    pub s_enc: usize,
    pub s_ant: usize,
    pub strategy: FusionStrategy,
    pub branch_kind: BranchKind,
    /// Dropout with masks drawn from a fixed stream, so the loss stays deterministic.
    pub dropout: f64,
    pub mode: UnrollMode,
    pub label: usize,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            input_dims: vec![8, 8, 6],
            hidden_dim: 16,
            num_actions: 4,
            s_enc: 2,
            s_ant: 3,
            strategy: FusionStrategy::Matt,
            branch_kind: BranchKind::RollingUnrolling,
            dropout: 0.3,
            mode: UnrollMode::Anticipation,
            label: 1,
            tolerance: 1e-4,
        }
    }
}

pub fn run(global: &Global, args: GradcheckArgs) -> Result<bool> {
    let mut cfg: GradcheckConfig = load_json(args.config.as_ref())?;
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    let manifest = match &args.out {
        Some(dir) => {
            out_dir(dir)?;
            Some(RunManifest::start(dir, "gradcheck", &cfg, cfg.seed, vec![dir.join("gradcheck.json")])?)
        }
        None => None,
    };
    let names = ["rgb", "flow", "obj"];
    let model_cfg = ModelConfig {
        modalities: (0..cfg.input_dims.len())
            .map(|i| names.get(i).map_or(format!("m{i}"), |n| n.to_string()))
            .collect(),
        input_dims: cfg.input_dims.clone(),
        hidden_dim: cfg.hidden_dim,
        num_actions: cfg.num_actions,
        timeline: TimelineSpec::new(0.25, cfg.s_enc, cfg.s_ant)?,
        strategy: match &cfg.strategy {
            FusionStrategy::Late { weights } if weights.is_empty() => FusionStrategy::late_uniform(cfg.input_dims.len()),
            s => s.clone(),
        },
        branch_kind: cfg.branch_kind,
        dropout: cfg.dropout,
        matt_dropout: cfg.dropout,
        resample_masks_per_step: true,
    };
    let mut rng = Rng::new(cfg.seed);
    let mut model = FusionModel::new(model_cfg, &mut rng)?;
    // The attention output layer starts at zero, which would hide errors upstream of it.
    if let Some(mlp) = &mut model.matt {
        for l in &mut mlp.layers {
            l.weights.as_mut_slice().iter_mut().for_each(|w| *w += 0.1 * rng.normal());
        }
    }
    let rows = cfg.s_enc + cfg.s_ant;
    let feats: Vec<Matrix> = cfg.input_dims.iter().map(|&d| Matrix::from_fn(rows, d, |_, _| rng.normal())).collect();
    let mask_seed = rng.next_u64();
    let corrupt = args.corrupt_backward;
    let report = gradcheck(
        &model,
        |p: &FusionModel| {
            let (loss, mut g) = p.loss_and_grad(&feats, cfg.label, cfg.mode, &mut Phase::Train(&mut Rng::new(mask_seed)))?;
            if corrupt {
                let mut first = true;
                g.visit_mut("", &mut |_, m| {
                    if std::mem::take(&mut first) {
                        m.as_mut_slice().iter_mut().for_each(|v| *v += 0.01);
                    }
                });
            }
            Ok((loss, g))
        },
        cfg.tolerance,
    )?;
    println!("{report}");
    if let (Some(dir), Some(manifest)) = (&args.out, manifest) {
        std::fs::write(dir.join("gradcheck.json"), serde_json::to_string_pretty(&report)? + "\n")?;
        manifest.finish(report.passed)?;
    }
    Ok(report.passed)
}
