//! In-memory datasets of aligned feature sequences, and the on-disk dataset layout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::synth::SynthMeta;
use super::{read_manifest, sample_features, FeatureStore, SampleRecord, SynthDataset, Vocabulary};
use crate::error::{Error, Result};
use crate::model::TimelineSpec;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn manifest_name(self) -> &'static str {
        match self {
            Split::Train => "manifest.csv",
            Split::Val => "manifest_val.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub record: SampleRecord,
    /// One `steps x dim` matrix per modality.
    pub features: Vec<Matrix>,
    /// Whether each modality of this sample is known to be corrupted.
    pub corrupted: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub modalities: Vec<String>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Observed windows before each action start, aligned to `spec`.
    pub fn anticipation(
        records: &[SampleRecord],
        store: &FeatureStore,
        modalities: &[String],
        spec: &TimelineSpec,
        corrupted: &BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        spec.validate()?;
        Self::build(records, modalities, corrupted, |r, m| {
            sample_features(store, &r.video_id, m, spec, r.start_sec)
        })
    }

    /// `n` snippets spread uniformly over each action segment, at
    /// `start + (end - start) · i / n` for `i = 1..=n`.
    pub fn early_recognition(
        records: &[SampleRecord],
        store: &FeatureStore,
        modalities: &[String],
        n: usize,
        corrupted: &BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("snippets", "must be at least 1"));
        }
        Self::build(records, modalities, corrupted, |r, m| {
            let table = store.get(&r.video_id, m)?;
            let mut data = Vec::with_capacity(n * table.dim());
            for i in 1..=n {
                let time = r.start_sec + (r.end_sec - r.start_sec) * i as f64 / n as f64;
                data.extend_from_slice(table.row_at_time(time));
            }
            Matrix::new(n, table.dim(), data)
        })
    }

    fn build(
        records: &[SampleRecord],
        modalities: &[String],
        corrupted: &BTreeMap<String, Vec<String>>,
        mut features: impl FnMut(&SampleRecord, &str) -> Result<Matrix>,
    ) -> Result<Self> {
        if modalities.is_empty() {
            return Err(Error::invalid("modalities", "at least one modality is required"));
        }
        let mut samples = Vec::with_capacity(records.len());
        for r in records {
            let feats = modalities.iter().map(|m| features(r, m)).collect::<Result<Vec<_>>>()?;
            let bad = corrupted.get(&r.video_id);
            samples.push(Sample {
                record: r.clone(),
                features: feats,
                corrupted: modalities.iter().map(|m| bad.is_some_and(|b| b.contains(m))).collect(),
            });
        }
        Ok(Self {
            modalities: modalities.to_vec(),
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dims(&self) -> Vec<usize> {
        match self.samples.first() {
            Some(s) => s.features.iter().map(Matrix::cols).collect(),
            None => vec![0; self.modalities.len()],
        }
    }

    /// Restricts to a subset of modalities, in the order given.
    pub fn select(&self, modalities: &[String]) -> Result<Self> {
        let idx = modalities
            .iter()
            .map(|m| {
                self.modalities
                    .iter()
                    .position(|x| x == m)
                    .ok_or_else(|| Error::Missing(format!("modality `{m}` in dataset")))
            })
            .collect::<Result<Vec<_>>>()?;
        if idx.is_empty() {
            return Err(Error::invalid("modalities", "at least one modality is required"));
        }
        Ok(Self {
            modalities: modalities.to_vec(),
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    record: s.record.clone(),
                    features: idx.iter().map(|&i| s.features[i].clone()).collect(),
                    corrupted: idx.iter().map(|&i| s.corrupted[i]).collect(),
                })
                .collect(),
        })
    }

    /// First `n` samples.
    pub fn truncate(&self, n: usize) -> Self {
        Self {
            modalities: self.modalities.clone(),
            samples: self.samples.iter().take(n).cloned().collect(),
        }
    }
}

impl SynthDataset {
    pub fn records(&self, split: Split) -> &[SampleRecord] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
        }
    }

    pub fn anticipation(&self, split: Split, spec: &TimelineSpec) -> Result<Dataset> {
        Dataset::anticipation(self.records(split), &self.store, &self.config.modality_names(), spec, &self.corrupted)
    }

    pub fn early_recognition(&self, split: Split, n: usize) -> Result<Dataset> {
        Dataset::early_recognition(self.records(split), &self.store, &self.config.modality_names(), n, &self.corrupted)
    }
}

/// A dataset directory: `vocab.json`, `manifest.csv`, `manifest_val.csv`,
/// `features/<modality>/<video>.ruft` and optionally `synth_meta.json`.
#[derive(Debug, Clone)]
pub struct DatasetDir {
    pub root: PathBuf,
    pub vocab: Vocabulary,
    pub modalities: Vec<String>,
    corrupted: BTreeMap<String, Vec<String>>,
}

impl DatasetDir {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let vocab = Vocabulary::load(root.join("vocab.json"))?;
        let modalities = FeatureStore::list_modalities(root.join("features"))?;
        if modalities.is_empty() {
            return Err(Error::Missing(format!("feature modalities under {}", root.join("features").display())));
        }
        let meta_path = root.join("synth_meta.json");
        let corrupted = if meta_path.exists() {
            let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            serde_json::from_str::<SynthMeta>(&text)?.corrupted
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            root,
            vocab,
            modalities,
            corrupted,
        })
    }

    pub fn records(&self, split: Split) -> Result<Vec<SampleRecord>> {
        read_manifest(self.root.join(split.manifest_name()), Some(&self.vocab))
    }

    fn store(&self, records: &[SampleRecord], modalities: &[String]) -> Result<FeatureStore> {
        FeatureStore::load_dir(self.root.join("features"), modalities, records.iter().map(|r| r.video_id.as_str()))
    }

    fn resolve<'a>(&'a self, modalities: Option<&'a [String]>) -> &'a [String] {
        modalities.unwrap_or(&self.modalities)
    }

    pub fn anticipation(&self, split: Split, modalities: Option<&[String]>, spec: &TimelineSpec) -> Result<Dataset> {
        let records = self.records(split)?;
        let mods = self.resolve(modalities);
        let store = self.store(&records, mods)?;
        Dataset::anticipation(&records, &store, mods, spec, &self.corrupted)
    }

    pub fn early_recognition(&self, split: Split, modalities: Option<&[String]>, n: usize) -> Result<Dataset> {
        let records = self.records(split)?;
        let mods = self.resolve(modalities);
        let store = self.store(&records, mods)?;
        Dataset::early_recognition(&records, &store, mods, n, &self.corrupted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synth_generate, SynthConfig, SynthModality};

    fn config() -> SynthConfig {
        SynthConfig {
            num_actions: 4,
            num_verbs: 2,
            num_nouns: 2,
            modalities: vec![SynthModality::new("x", 3, 1.0, 0.5), SynthModality::new("y", 2, 1.0, 0.0)],
            train_samples: 12,
            val_samples: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn directory_round_trip_matches_memory() {
        let synth = synth_generate(&config(), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        synth.save(dir.path()).unwrap();
        let disk = DatasetDir::open(dir.path()).unwrap();
        assert_eq!(disk.modalities, vec!["x", "y"]);
        let spec = synth.config.timeline;
        for split in [Split::Train, Split::Val] {
            let a = synth.anticipation(split, &spec).unwrap();
            let b = disk.anticipation(split, None, &spec).unwrap();
            assert_eq!(a, b);
            let a = synth.early_recognition(split, 8).unwrap();
            let b = disk.early_recognition(split, None, 8).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn shapes_and_flags() {
        let synth = synth_generate(&config(), 1).unwrap();
        let d = synth.anticipation(Split::Train, &TimelineSpec::default()).unwrap();
        assert_eq!(d.len(), 12);
        assert_eq!(d.dims(), vec![3, 2]);
        assert!(d.samples.iter().all(|s| s.features[0].rows() == 14));
        for s in &d.samples {
            assert_eq!(s.corrupted[0], synth.is_corrupted(&s.record.video_id, "x"));
            assert!(!s.corrupted[1]);
        }
        let y = d.select(&["y".to_string()]).unwrap();
        assert_eq!(y.dims(), vec![2]);
        assert_eq!(y.samples[3].features[0], d.samples[3].features[1]);
        assert!(d.select(&["z".to_string()]).is_err());
        assert!(d.select(&[]).is_err());
    }

    #[test]
    fn early_recognition_reads_inside_the_action() {
        let synth = synth_generate(&config(), 4).unwrap();
        let d = synth.early_recognition(Split::Val, 8).unwrap();
        for s in &d.samples {
            let table = synth.store.get(&s.record.video_id, "y").unwrap();
            let last = table.rows().row(table.rows().rows() - 1);
            assert_eq!(s.features[1].row(7), last);
            assert_eq!(s.features[1].rows(), 8);
        }
        assert!(synth.early_recognition(Split::Val, 0).is_err());
    }
}
