//! Seeded synthetic anticipation datasets.
//!
//! Generative scheme:
//!
//! - Every action class owns one prototype vector per modality, with i.i.d.
//!   standard normal entries.
//! - A sample draws a class uniformly, an action start `τ_s = α (S + 1) + U(0, max_lead)`
//!   and a duration `U(min_duration, max_duration)`. Its video holds one frame every
//!   `1 / fps` seconds from `0` to the action end.
//! - The feature of a frame at time `u` is `r(u) · prototype + noise · ε` with
//!   `ε ~ N(0, I)`. Class evidence ramps up towards the action start:
//!   `r(u) = max(0, 1 - (τ_s - u) / ramp_horizon)` before the action and `1` inside it.
//! - With probability `corruption` (per sample and modality) the whole modality is
//!   replaced by `corrupt_scale · ε` and the sample is flagged as corrupted.
//!
//! Feature values are rounded to `f32` so that the in-memory dataset equals its
//! `RUFT` round trip.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_manifest, FeatureStore, FeatureTable, SampleRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::model::TimelineSpec;
use crate::tensor::{Matrix, Rng};

/// Minimum training instances for a class to count as many-shot.
pub const MANY_SHOT_THRESHOLD: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthModality {
    pub name: String,
    pub dim: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub corruption: f64,
}

fn default_noise() -> f64 {
    2.5
}

impl SynthModality {
    pub fn new(name: &str, dim: usize, noise: f64, corruption: f64) -> Self {
        Self {
            name: name.into(),
            dim,
            noise,
            corruption,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_actions: usize,
    pub num_verbs: usize,
    pub num_nouns: usize,
    pub modalities: Vec<SynthModality>,
    pub train_samples: usize,
    pub val_samples: usize,
    pub timeline: TimelineSpec,
    pub fps: u32,
    pub ramp_horizon: f64,
    pub corrupt_scale: f64,
    pub max_lead: f64,
    pub min_duration: f64,
    pub max_duration: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_actions: 10,
            num_verbs: 5,
            num_nouns: 5,
            modalities: vec![
                SynthModality::new("rgb", 16, 2.5, 0.0),
                SynthModality::new("flow", 16, 2.5, 0.0),
                SynthModality::new("obj", 12, 2.5, 0.0),
            ],
            train_samples: 2000,
            val_samples: 500,
            timeline: TimelineSpec::default(),
            fps: 4,
            ramp_horizon: 4.0,
            corrupt_scale: 1.0,
            max_lead: 2.0,
            min_duration: 1.0,
            max_duration: 3.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.timeline.validate()?;
        if self.num_actions == 0 {
            return Err(Error::invalid("num_actions", "must be at least 1"));
        }
        if self.num_verbs == 0 || self.num_nouns == 0 || self.num_verbs * self.num_nouns < self.num_actions {
            return Err(Error::invalid(
                "num_verbs/num_nouns",
                format!("{} x {} pairs cannot hold {} actions", self.num_verbs, self.num_nouns, self.num_actions),
            ));
        }
        if self.modalities.is_empty() {
            return Err(Error::invalid("modalities", "at least one modality is required"));
        }
        for m in &self.modalities {
            if m.dim == 0 || m.name.is_empty() {
                return Err(Error::invalid("modalities", format!("`{}` needs a name and a positive dim", m.name)));
            }
            if !(0.0..=1.0).contains(&m.corruption) || m.noise < 0.0 {
                return Err(Error::invalid("modalities", format!("`{}`: corruption in [0, 1] and noise >= 0", m.name)));
            }
        }
        if self.train_samples == 0 {
            return Err(Error::invalid("train_samples", "must be at least 1"));
        }
        if self.fps == 0 || self.ramp_horizon <= 0.0 || self.corrupt_scale < 0.0 {
            return Err(Error::invalid("fps/ramp_horizon/corrupt_scale", "must be positive"));
        }
        if self.max_lead < 0.0 || self.min_duration <= 0.0 || self.max_duration < self.min_duration {
            return Err(Error::invalid("max_lead/min_duration/max_duration", "inconsistent ranges"));
        }
        Ok(())
    }

    pub fn modality_names(&self) -> Vec<String> {
        self.modalities.iter().map(|m| m.name.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub seed: u64,
    pub vocab: Vocabulary,
    pub train: Vec<SampleRecord>,
    pub val: Vec<SampleRecord>,
    pub store: FeatureStore,
    /// Per modality, `num_actions x dim` class prototypes.
    pub prototypes: Vec<Matrix>,
    /// Corrupted modalities per video id.
    pub corrupted: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct SynthMeta {
    pub seed: u64,
    pub config: SynthConfig,
    pub corrupted: BTreeMap<String, Vec<String>>,
}

pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = Rng::new(seed);

    let mut pairs: Vec<[usize; 2]> = (0..config.num_verbs)
        .flat_map(|v| (0..config.num_nouns).map(move |n| [v, n]))
        .collect();
    rng.shuffle(&mut pairs);
    pairs.truncate(config.num_actions);
    let mut vocab = Vocabulary::new(
        (0..config.num_verbs).map(|i| format!("verb_{i}")).collect(),
        (0..config.num_nouns).map(|i| format!("noun_{i}")).collect(),
        pairs,
    )?;

    let prototypes: Vec<Matrix> = config
        .modalities
        .iter()
        .map(|m| Matrix::from_fn(config.num_actions, m.dim, |_, _| round_f32(rng.normal())))
        .collect();

    let spec = config.timeline;
    let mut store = FeatureStore::new();
    let mut corrupted = BTreeMap::new();
    let mut splits = [Vec::new(), Vec::new()];
    for (split, (prefix, count)) in [("train", config.train_samples), ("val", config.val_samples)].into_iter().enumerate() {
        for i in 0..count {
            let video_id = format!("{prefix}_{i:05}");
            let action = rng.below(config.num_actions);
            let start = spec.alpha * (spec.total_steps() + 1) as f64 + rng.uniform_range(0.0, config.max_lead);
            let end = start + rng.uniform_range(config.min_duration, config.max_duration);
            let fps = config.fps as f64;
            let n_frames = (end * fps).floor() as usize + 1;
            let mut bad = Vec::new();
            for (mi, m) in config.modalities.iter().enumerate() {
                let is_corrupted = rng.bernoulli(m.corruption);
                let rows = Matrix::from_fn(n_frames, m.dim, |f, c| {
                    let value = if is_corrupted {
                        config.corrupt_scale * rng.normal()
                    } else {
                        let u = f as f64 / fps;
                        let ramp = if u >= start {
                            1.0
                        } else {
                            (1.0 - (start - u) / config.ramp_horizon).max(0.0)
                        };
                        ramp * prototypes[mi].get(action, c) + m.noise * rng.normal()
                    };
                    round_f32(value)
                });
                let table = FeatureTable::new(config.fps, 1, (0..n_frames as u32).collect(), rows)?;
                store.insert(video_id.clone(), m.name.clone(), table)?;
                if is_corrupted {
                    bad.push(m.name.clone());
                }
            }
            if !bad.is_empty() {
                corrupted.insert(video_id.clone(), bad);
            }
            let [verb_id, noun_id] = vocab.actions[action];
            splits[split].push(SampleRecord {
                video_id,
                start_sec: start,
                end_sec: end,
                verb_id,
                noun_id,
                action_id: action,
            });
        }
    }
    let [train, val] = splits;
    vocab.fill_many_shot(&train, MANY_SHOT_THRESHOLD);
    Ok(SynthDataset {
        config: config.clone(),
        seed,
        vocab,
        train,
        val,
        store,
        prototypes,
        corrupted,
    })
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl SynthDataset {
    /// Writes `vocab.json`, `manifest.csv` (training split), `manifest_val.csv`,
    /// `features/<modality>/<video>.ruft` and `synth_meta.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.vocab.save(dir.join("vocab.json"))?;
        write_manifest(dir.join("manifest.csv"), &self.train)?;
        write_manifest(dir.join("manifest_val.csv"), &self.val)?;
        self.store.save_dir(dir.join("features"))?;
        let meta = SynthMeta {
            seed: self.seed,
            config: self.config.clone(),
            corrupted: self.corrupted.clone(),
        };
        let path = dir.join("synth_meta.json");
        fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn is_corrupted(&self, video: &str, modality: &str) -> bool {
        self.corrupted.get(video).is_some_and(|m| m.iter().any(|x| x == modality))
    }
}
