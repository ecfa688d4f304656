use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rulstm::dataio::{synth_generate, SynthConfig};

use crate::manifest::RunManifest;
use crate::{out_dir, Global};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON synthetic-dataset config; defaults are used for missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub train_samples: Option<usize>,
    #[arg(long)]
    pub val_samples: Option<usize>,
    /// Probability that a modality of a sample is replaced by noise.
    #[arg(long)]
    pub corruption: Option<f64>,
}

pub fn load_json<T: serde::de::DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

pub fn run(global: &Global, args: SynthArgs) -> Result<bool> {
    let mut cfg: SynthConfig = load_json(args.config.as_ref())?;
    if let Some(k) = args.classes {
        cfg.num_actions = k;
    }
    if let Some(n) = args.train_samples {
        cfg.train_samples = n;
    }
    if let Some(n) = args.val_samples {
        cfg.val_samples = n;
    }
    if let Some(c) = args.corruption {
        cfg.modalities.iter_mut().for_each(|m| m.corruption = c);
    }
    cfg.validate()?;
    let seed = global.seed.unwrap_or(0);
    out_dir(&args.out)?;
    let artifacts = vec![args.out.join("vocab.json"), args.out.join("manifest.csv"), args.out.join("manifest_val.csv")];
    let manifest = RunManifest::start(&args.out, "synth", &cfg, seed, artifacts)?;
    let data = synth_generate(&cfg, seed)?;
    data.save(&args.out)?;
    println!(
        "wrote {}: {} actions ({} verbs, {} nouns), {} train / {} val samples, modalities {}",
        args.out.display(),
        data.vocab.num_actions(),
        data.vocab.verbs.len(),
        data.vocab.nouns.len(),
        data.train.len(),
        data.val.len(),
        cfg.modality_names().join(",")
    );
    manifest.finish(true)?;
    Ok(true)
}
