use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use rulstm::dataio::{Dataset, DatasetDir};
use rulstm::model::BranchKind;
use rulstm::training::{arms_csv, run_arms, scp_ablation, Arm, TrainConfig};
use rulstm::FusionStrategy;

use crate::manifest::RunManifest;
use crate::train::{load_splits, ConfigArgs};
use crate::{out_dir, Global};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// Paired runs with and without sequence-completion pre-training.
    Scp,
    /// Early, late and attention fusion.
    Fusion,
    /// Number of encoding steps, anticipation steps fixed.
    SEnc,
    /// Rolling-unrolling branches against the single-LSTM baseline.
    Branch,
    /// Every non-empty modality subset.
    Modalities,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// Comma-separated seeds; one run per arm and seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Encoding-step values of the `s-enc` sweep.
    #[arg(long, value_delimiter = ',', default_value = "0,2,4,6,8")]
    pub s_enc_values: Vec<usize>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

fn subsets(mods: &[String]) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = (1..1u32 << mods.len())
        .map(|mask| mods.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, m)| m.clone()).collect())
        .collect();
    out.sort_by_key(Vec::len);
    out
}

fn arms(kind: Kind, base: &TrainConfig, mods: &[String], s_enc: &[usize]) -> Vec<Arm> {
    let arm = |name: String, f: &dyn Fn(&mut TrainConfig)| {
        let mut config = base.clone();
        f(&mut config);
        Arm { name, config }
    };
    match kind {
        Kind::Scp => Vec::new(),
        Kind::Fusion => [FusionStrategy::Early, FusionStrategy::Late { weights: vec![] }, FusionStrategy::Matt]
            .into_iter()
            .map(|s| arm(s.name().into(), &|c| c.strategy = s.clone()))
            .collect(),
        Kind::SEnc => s_enc
            .iter()
            .map(|&v| arm(format!("s_enc={v}"), &|c| c.timeline.s_enc = v))
            .collect(),
        Kind::Branch => vec![
            arm("ru".into(), &|c| c.branch_kind = BranchKind::RollingUnrolling),
            arm("rolling_only".into(), &|c| c.branch_kind = BranchKind::RollingOnly),
        ],
        Kind::Modalities => subsets(mods)
            .into_iter()
            .map(|s| arm(s.join("+"), &|c| c.modalities = Some(s.clone())))
            .collect(),
    }
}

pub fn run(global: &Global, args: AblateArgs) -> Result<bool> {
    let base = args.cfg.resolve(global)?;
    let seeds = args.seeds.clone().unwrap_or_else(|| vec![base.seed]);
    if seeds.is_empty() {
        bail!("at least one seed is required");
    }
    let dir = DatasetDir::open(&args.data)?;
    out_dir(&args.out)?;
    let csv_path = args.out.join("ablation.csv");
    let json_path = args.out.join("ablation.json");
    let manifest = RunManifest::start(&args.out, "ablate", &base, base.seed, vec![csv_path.clone(), json_path.clone()])?;
    let data = |cfg: &TrainConfig| -> rulstm::Result<(Dataset, Dataset)> {
        load_splits(&dir, cfg, None).map_err(|e| rulstm::Error::Missing(format!("{e:#}")))
    };
    let mods = base.modalities.clone().unwrap_or_else(|| dir.modalities.clone());

    let (csv, json) = if args.kind == Kind::Scp {
        let table = scp_ablation(&base, &seeds, &dir.vocab, &data)?;
        (table.to_csv(), serde_json::to_string_pretty(&table)?)
    } else {
        let mut all = Vec::new();
        for &seed in &seeds {
            let seeded = TrainConfig { seed, ..base.clone() };
            all.extend(run_arms(&arms(args.kind, &seeded, &mods, &args.s_enc_values), &dir.vocab, &data)?);
        }
        (arms_csv(&all), serde_json::to_string_pretty(&all)?)
    };
    std::fs::write(&csv_path, &csv)?;
    std::fs::write(&json_path, json + "\n")?;
    print!("{csv}");
    manifest.finish(true)?;
    Ok(true)
}
