use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rulstm::dataio::{Dataset, DatasetDir, Split};
use rulstm::evaluation::ReportKind;
use rulstm::model::BranchKind;
use rulstm::nn::{Checkpoint, SgdMomentum};
use rulstm::training::{
    checkpoint, evaluate, init_branch_model, init_fusion_model, train_branch_anticipation, train_branch_scp, train_fusion,
    train_pipeline, EpochRecord, StageOutcome, Task, TrainConfig, TrainContext, TrainLog, SLOT_JOINT,
};
use rulstm::{FusionModel, FusionStrategy};

use crate::manifest::RunManifest;
use crate::synth::load_json;
use crate::{out_dir, Global};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Scp,
    Branch,
    Fusion,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    Late,
    Early,
    Matt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Anticipation,
    Early,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BranchArg {
    /// Rolling encoder plus unrolling decoder.
    Ru,
    /// Single-LSTM baseline.
    RollingOnly,
}

/// Training flags shared by `train` and `ablate`; every flag overrides the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON training config; defaults are used for missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub fusion: Option<FusionArg>,
    #[arg(long)]
    pub s_enc: Option<usize>,
    #[arg(long)]
    pub s_ant: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Epochs of every stage.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Skip sequence-completion pre-training.
    #[arg(long)]
    pub no_scp: bool,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long, value_enum)]
    pub branch_kind: Option<BranchArg>,
    /// Comma-separated modality subset.
    #[arg(long, value_delimiter = ',')]
    pub modalities: Option<Vec<String>>,
    /// Keep branches fixed during the fusion stage.
    #[arg(long)]
    pub freeze_branches: bool,
}

impl ConfigArgs {
    pub fn resolve(&self, global: &Global) -> Result<TrainConfig> {
        let mut cfg: TrainConfig = load_json(self.config.as_ref())?;
        if let Some(seed) = global.seed {
            cfg.seed = seed;
        }
        if let Some(f) = self.fusion {
            cfg.strategy = match f {
                FusionArg::Late => FusionStrategy::Late { weights: vec![] },
                FusionArg::Early => FusionStrategy::Early,
                FusionArg::Matt => FusionStrategy::Matt,
            };
        }
        if let Some(v) = self.s_enc {
            cfg.timeline.s_enc = v;
        }
        if let Some(v) = self.s_ant {
            cfg.timeline.s_ant = v;
        }
        if let Some(v) = self.hidden {
            cfg.hidden_dim = v;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.dropout {
            cfg.dropout = v;
            cfg.matt_dropout = v;
        }
        if let Some(e) = self.epochs {
            cfg.scp_epochs.clear();
            cfg.default_scp_epochs = e;
            cfg.branch_epochs = e;
            cfg.fusion_epochs = e;
            cfg.early_recognition_epochs = e;
        }
        if self.no_scp {
            cfg.scp = false;
        }
        if let Some(t) = self.task {
            cfg.task = match t {
                TaskArg::Anticipation => Task::Anticipation,
                TaskArg::Early => Task::EarlyRecognition,
            };
        }
        if let Some(k) = self.branch_kind {
            cfg.branch_kind = match k {
                BranchArg::Ru => BranchKind::RollingUnrolling,
                BranchArg::RollingOnly => BranchKind::RollingOnly,
            };
        }
        if let Some(m) = &self.modalities {
            cfg.modalities = Some(m.clone());
        }
        if self.freeze_branches {
            cfg.freeze_branches = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory (as written by `synth`).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoints, logs and reports.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub stage: StageArg,
    /// Modality of the `scp` and `branch` stages.
    #[arg(long)]
    pub modality: Option<String>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Do not print per-epoch progress.
    #[arg(long)]
    pub quiet: bool,
}

/// Training and validation splits aligned for the configured task.
pub fn load_splits(dir: &DatasetDir, cfg: &TrainConfig, modalities: Option<&[String]>) -> Result<(Dataset, Dataset)> {
    Ok(match cfg.task {
        Task::Anticipation => (
            dir.anticipation(Split::Train, modalities, &cfg.timeline)?,
            dir.anticipation(Split::Val, modalities, &cfg.timeline)?,
        ),
        Task::EarlyRecognition => (
            dir.early_recognition(Split::Train, modalities, cfg.snippets)?,
            dir.early_recognition(Split::Val, modalities, cfg.snippets)?,
        ),
    })
}

fn stage_meta(name: &str, log: Option<&TrainLog>, cfg: &TrainConfig) -> serde_json::Value {
    serde_json::json!({
        "stage": name,
        "selected_epoch": log.and_then(|l| l.selected_epoch),
        "config": cfg,
    })
}

fn save_model(path: &Path, model: &FusionModel, opt: &SgdMomentum, meta: serde_json::Value) -> Result<()> {
    let ck: Checkpoint = checkpoint(model, opt, meta);
    model.save(path, &ck).with_context(|| format!("saving {}", path.display()))
}

fn load_stage(path: &Path, expected: &FusionModel) -> Result<FusionModel> {
    if !path.exists() {
        bail!("missing input {}: run the previous stage first", path.display());
    }
    let (model, _) = FusionModel::load(path)?;
    if model.config != expected.config {
        bail!("{} was trained with a different configuration", path.display());
    }
    Ok(model)
}

fn report_stage(log: &TrainLog) {
    let selected = log.selected_epoch.map_or("-".into(), |e| e.to_string());
    let metric = log
        .selected_epoch
        .and_then(|e| log.epochs.iter().find(|r| r.epoch == e))
        .and_then(|r| r.metric)
        .map_or("-".into(), |m| format!("{m:.2}"));
    println!("{:<20} epochs {:>4}  selected {:>4}  {} {}", log.stage, log.epochs.len(), selected, log.metric_name, metric);
}

pub fn run(global: &Global, args: TrainArgs) -> Result<bool> {
    let cfg = args.cfg.resolve(global)?;
    let dir = DatasetDir::open(&args.data)?;
    out_dir(&args.out)?;
    let logs_dir = args.out.join("logs");
    out_dir(&logs_dir)?;

    let modalities: Vec<String> = cfg.modalities.clone().unwrap_or_else(|| dir.modalities.clone());
    let early = cfg.strategy == FusionStrategy::Early;
    let modality = match args.stage {
        StageArg::Scp | StageArg::Branch if early => {
            if args.modality.is_some() {
                bail!("early fusion trains a single joint branch; drop --modality");
            }
            None
        }
        StageArg::Scp | StageArg::Branch => {
            let m = args.modality.clone().context("--modality is required for the scp and branch stages")?;
            let slot = modalities
                .iter()
                .position(|x| *x == m)
                .with_context(|| format!("modality `{m}` is not among {modalities:?}"))?;
            Some((m, slot))
        }
        _ => None,
    };
    let stem = |stage: &str| match (&modality, early) {
        (Some((m, _)), _) => format!("{stage}_{m}"),
        (None, true) if stage != "model" => format!("{stage}_early"),
        _ => "model".into(),
    };
    let target = match args.stage {
        StageArg::Scp => args.out.join(format!("{}.json", stem("scp"))),
        StageArg::Branch => args.out.join(format!("{}.json", stem("branch"))),
        StageArg::Fusion | StageArg::All => args.out.join("model.json"),
    };
    let manifest = RunManifest::start(&args.out, "train", &cfg, cfg.seed, vec![target.clone()])?;

    let quiet = args.quiet;
    let observer = move |stage: &str, r: &EpochRecord| {
        if !quiet {
            let metric = r.metric.map_or(String::new(), |m| format!(" metric {m:.2}"));
            eprintln!("{stage} epoch {:>3} loss {:.4}{metric}", r.epoch, r.train_loss);
        }
    };
    let ctx = TrainContext {
        observer: Some(&observer),
        ..TrainContext::new(&cfg, &dir.vocab)
    };
    let selected: Option<Vec<String>> = match (&modality, early) {
        (Some((m, _)), _) => Some(vec![m.clone()]),
        _ => Some(modalities.clone()),
    };
    let (train, val) = load_splits(&dir, &cfg, selected.as_deref())?;

    let save_log = |log: &TrainLog| -> Result<()> {
        report_stage(log);
        log.save(logs_dir.join(&log.stage))?;
        Ok(())
    };
    let finish_stage = |out: StageOutcome, name: &str| -> Result<()> {
        save_log(&out.log)?;
        save_model(&target, &out.model, &out.optimizer, stage_meta(name, Some(&out.log), &cfg))
    };

    match args.stage {
        StageArg::Scp => {
            let (slot, fresh) = match &modality {
                Some((_, slot)) => (*slot, init_branch_model(&train, *slot, &ctx)?),
                None => (SLOT_JOINT as usize, init_fusion_model(&train, &ctx)?),
            };
            if cfg.branch_kind == BranchKind::RollingOnly {
                bail!("the rolling-only baseline has no sequence-completion stage");
            }
            let name = modality.as_ref().map_or("early", |(m, _)| m.as_str());
            let out = train_branch_scp(fresh, &train, Some(&val), slot, cfg.scp_epochs_for(name), &ctx)?;
            finish_stage(out, "scp")?;
        }
        StageArg::Branch => {
            let (slot, fresh) = match &modality {
                Some((_, slot)) => (*slot, init_branch_model(&train, *slot, &ctx)?),
                None => (SLOT_JOINT as usize, init_fusion_model(&train, &ctx)?),
            };
            let name = modality.as_ref().map_or("early", |(m, _)| m.as_str());
            let model = if cfg.scp && cfg.branch_kind == BranchKind::RollingUnrolling && cfg.scp_epochs_for(name) > 0 {
                load_stage(&args.out.join(format!("{}.json", stem("scp"))), &fresh)?
            } else {
                fresh
            };
            let out = train_branch_anticipation(model, &train, Some(&val), slot, cfg.branch_epochs(), &ctx)?;
            finish_stage(out, "branch")?;
        }
        StageArg::Fusion => {
            if early {
                bail!("early fusion has no fusion stage; its joint branch is trained with --stage branch");
            }
            let mut branches = Vec::with_capacity(modalities.len());
            for (slot, m) in modalities.iter().enumerate() {
                let one = std::slice::from_ref(m);
                let fresh = init_branch_model(&train.select(one)?, slot, &ctx)?;
                let model = load_stage(&args.out.join(format!("branch_{m}.json")), &fresh)?;
                branches.extend(model.branches);
            }
            let mut model = init_fusion_model(&train, &ctx)?;
            model.set_branches(branches)?;
            if modalities.len() > 1 {
                let out = train_fusion(model, &train, Some(&val), &ctx)?;
                model = out.model.clone();
                finish_stage(out, "fusion")?;
            } else {
                save_model(&target, &model, &SgdMomentum::new(cfg.learning_rate, cfg.momentum), stage_meta("fusion", None, &cfg))?;
            }
            write_report(&args.out, &model, &val, &dir, &cfg)?;
        }
        StageArg::All => {
            let out = train_pipeline(&train, Some(&val), &ctx)?;
            for log in &out.logs {
                save_log(log)?;
            }
            out.model.save(&target, &out.checkpoint())?;
            std::fs::write(args.out.join("summary.json"), serde_json::to_string_pretty(&out.summaries())? + "\n")?;
            write_report(&args.out, &out.model, &val, &dir, &cfg)?;
        }
    }
    println!("wrote {}", target.display());
    manifest.finish(true)?;
    Ok(true)
}

fn write_report(out: &Path, model: &FusionModel, val: &Dataset, dir: &DatasetDir, cfg: &TrainConfig) -> Result<()> {
    let kind = match cfg.task {
        Task::Anticipation => ReportKind::Anticipation,
        Task::EarlyRecognition => ReportKind::EarlyRecognition,
    };
    let (_, report) = evaluate(model, val, &dir.vocab, kind)?;
    report.rounded().save(out.join("report_val"))?;
    print!("{}", report.rounded().to_csv());
    Ok(())
}
