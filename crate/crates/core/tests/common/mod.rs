#![allow(dead_code)]

use rulstm::dataio::{synth_generate, Dataset, Split, SynthConfig, SynthDataset, SynthModality};
use rulstm::model::TimelineSpec;
use rulstm::training::{EarlyStopMetric, TrainConfig};

pub fn synth(modalities: Vec<SynthModality>, num_actions: usize, train: usize, val: usize, seed: u64) -> SynthDataset {
    let cfg = SynthConfig {
        num_actions,
        num_verbs: 5,
        num_nouns: 5,
        modalities,
        train_samples: train,
        val_samples: val,
        ..SynthConfig::default()
    };
    synth_generate(&cfg, seed).expect("valid synthetic config")
}

pub fn splits(s: &SynthDataset, spec: &TimelineSpec) -> (Dataset, Dataset) {
    (s.anticipation(Split::Train, spec).unwrap(), s.anticipation(Split::Val, spec).unwrap())
}

/// Small dense configuration without dropout for desk-scale runs.
pub fn toy_config() -> TrainConfig {
    TrainConfig {
        hidden_dim: 16,
        dropout: 0.0,
        matt_dropout: 0.0,
        scp: false,
        branch_epochs: 3,
        fusion_epochs: 3,
        early_stop: EarlyStopMetric::LastEpoch,
        ..TrainConfig::default()
    }
}
