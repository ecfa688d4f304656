//! Dataset manifests, vocabularies, feature stores, timeline alignment,
//! bag-of-objects encoding and the synthetic dataset generator.

mod align;
mod dataset;
mod detections;
mod features;
mod manifest;
mod synth;
mod vocab;

pub use align::{sample_features, step_time};
pub use dataset::{Dataset, DatasetDir, Sample, Split};
pub use detections::{bag_of_objects, object_features, read_detections, write_detections, DetectionRecord};
pub use features::{FeatureStore, FeatureTable, RUFT_MAGIC, RUFT_VERSION};
pub use manifest::{read_manifest, write_manifest, SampleRecord, MANIFEST_HEADER};
pub use synth::{synth_generate, SynthConfig, SynthDataset, SynthModality};
pub use vocab::Vocabulary;

/// `<stem>.<ext>`, keeping any dots already in the stem's file name.
pub(crate) fn with_suffix(stem: &std::path::Path, ext: &str) -> std::path::PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    s.into()
}
