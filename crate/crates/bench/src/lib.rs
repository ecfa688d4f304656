//! Shared fixtures for the benchmarks.

use rulstm::model::{BranchKind, ModelConfig};
use rulstm::{FusionModel, FusionStrategy, Matrix, Rng, TimelineSpec};

/// Three-modality model at the default timeline.
pub fn model(hidden: usize, classes: usize, strategy: FusionStrategy) -> FusionModel {
    let dims = vec![32, 32, 24];
    let cfg = ModelConfig {
        modalities: vec!["rgb".into(), "flow".into(), "obj".into()],
        input_dims: dims,
        hidden_dim: hidden,
        num_actions: classes,
        timeline: TimelineSpec::default(),
        strategy,
        branch_kind: BranchKind::RollingUnrolling,
        dropout: 0.0,
        matt_dropout: 0.0,
        resample_masks_per_step: true,
    };
    FusionModel::new(cfg, &mut Rng::new(1)).expect("valid config")
}

pub fn features(model: &FusionModel, rng: &mut Rng) -> Vec<Matrix> {
    let rows = model.spec().total_steps();
    model
        .config
        .input_dims
        .iter()
        .map(|&d| Matrix::from_fn(rows, d, |_, _| rng.normal()))
        .collect()
}
