use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use rulstm::dataio::{Dataset, DatasetDir, Split};
use rulstm::evaluation::{aggregate, write_predictions, EvalRecord, MetricsReport, ReportKind};
use rulstm::training::{predict_early_records, predict_records};
use rulstm::FusionModel;
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::{out_dir, Global, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
}

#[derive(Args, Debug)]
pub struct Source {
    /// Model description written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "anticipation")]
    pub mode: Mode,
    #[arg(long, value_enum, default_value = "val")]
    pub split: SplitArg,
    /// Snippets sampled from each action in early and recognition modes.
    #[arg(long, default_value_t = 8)]
    pub snippets: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: Source,
    /// Output stem: writes `<stem>.csv` and `<stem>.json` (default `eval_<mode>` next to the model).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    pub source: Source,
    /// JSON-lines output file.
    #[arg(long)]
    pub out: PathBuf,
}

struct Loaded {
    model: FusionModel,
    dir: DatasetDir,
    data: Dataset,
}

fn load(src: &Source) -> Result<Loaded> {
    let (model, _) = FusionModel::load(&src.model).with_context(|| format!("loading {}", src.model.display()))?;
    let dir = DatasetDir::open(&src.data)?;
    let split = match src.split {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
    };
    let mods = Some(model.config.modalities.as_slice());
    let data = match src.mode {
        Mode::Anticipation => dir.anticipation(split, mods, &model.config.timeline)?,
        Mode::Early | Mode::Recognition => dir.early_recognition(split, mods, src.snippets)?,
    };
    Ok(Loaded { model, dir, data })
}

fn predict(l: &Loaded, mode: Mode) -> Result<Vec<EvalRecord>> {
    Ok(match mode {
        Mode::Anticipation => predict_records(&l.model, &l.data)?,
        Mode::Early | Mode::Recognition => predict_early_records(&l.model, &l.data)?,
    })
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Anticipation => "anticipation",
        Mode::Early => "early",
        Mode::Recognition => "recognition",
    }
}

#[derive(Serialize)]
struct RecognitionReport {
    samples: usize,
    snippets: usize,
    verb_top1: f64,
    noun_top1: f64,
    action_top1: f64,
}

fn parent(path: &Path) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

pub fn run_eval(global: &Global, args: EvalArgs) -> Result<bool> {
    let src = &args.source;
    let stem = args
        .out
        .clone()
        .unwrap_or_else(|| parent(&src.model).join(format!("eval_{}", mode_name(src.mode))));
    let out = parent(&stem);
    out_dir(&out)?;
    let name = stem.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let artifacts = vec![out.join(format!("{name}.csv")), out.join(format!("{name}.json"))];
    let config = serde_json::json!({
        "model": src.model, "data": src.data, "mode": mode_name(src.mode), "snippets": src.snippets,
    });
    let manifest = RunManifest::start(&out, "eval", &config, global.seed.unwrap_or(0), artifacts)?;

    let loaded = load(src)?;
    let records = predict(&loaded, src.mode)?;
    let kind = match src.mode {
        Mode::Anticipation => ReportKind::Anticipation,
        _ => ReportKind::EarlyRecognition,
    };
    let report: MetricsReport = aggregate(&records, &loaded.dir.vocab, kind)?.rounded();
    match src.mode {
        Mode::Recognition => {
            let last = report.columns.last().context("empty report")?;
            let r = RecognitionReport {
                samples: report.samples,
                snippets: src.snippets,
                verb_top1: last.top1.verb,
                noun_top1: last.top1.noun,
                action_top1: last.top1.action,
            };
            let csv = format!(
                "metric,value\nverb_top1,{:.2}\nnoun_top1,{:.2}\naction_top1,{:.2}\n",
                r.verb_top1, r.noun_top1, r.action_top1
            );
            std::fs::write(artifacts_path(&stem, "csv"), &csv)?;
            std::fs::write(artifacts_path(&stem, "json"), serde_json::to_string_pretty(&r)? + "\n")?;
            print!("{csv}");
        }
        _ => {
            report.save(&stem)?;
            print!("{}", report.to_csv());
            if let Some(r) = &report.mean_top5_recall {
                let fmt = |x: Option<rulstm::evaluation::Recall>| x.map_or("-".into(), |r| format!("{:.2}", r.percent));
                println!(
                    "mean top5 recall @{:.2}s: verb {} noun {} action {}",
                    r.anticipation_time,
                    fmt(r.recall.verb),
                    fmt(r.recall.noun),
                    fmt(r.recall.action)
                );
            }
            if let Some(m) = &report.mor {
                println!(
                    "mean MOR: verb {:.2} noun {:.2} action {:.2} (never correct: {} / {} / {})",
                    m.mean.verb, m.mean.noun, m.mean.action, m.never_correct.verb, m.never_correct.noun, m.never_correct.action
                );
            }
        }
    }
    manifest.finish(true)?;
    Ok(true)
}

fn artifacts_path(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    s.into()
}

pub fn run_predict(global: &Global, args: PredictArgs) -> Result<bool> {
    let src = &args.source;
    let out = parent(&args.out);
    out_dir(&out)?;
    let config = serde_json::json!({
        "model": src.model, "data": src.data, "mode": mode_name(src.mode), "snippets": src.snippets,
    });
    let manifest = RunManifest::start(&out, "predict", &config, global.seed.unwrap_or(0), vec![args.out.clone()])?;
    let loaded = load(src)?;
    let records = predict(&loaded, src.mode)?;
    write_predictions(&args.out, &records)?;
    println!("wrote {} predictions to {}", records.len(), args.out.display());
    manifest.finish(true)?;
    Ok(true)
}
