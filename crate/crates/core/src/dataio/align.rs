use super::FeatureStore;
use crate::error::{Error, Result};
use crate::model::TimelineSpec;
use crate::tensor::Matrix;

/// Absolute time of snippet `t` for an action starting at `start_sec`:
/// `start_sec - alpha (S + 1 - t)`, so step `S` lands one `alpha` before the action.
pub fn step_time(spec: &TimelineSpec, start_sec: f64, t: usize) -> Result<f64> {
    let total = spec.total_steps();
    if t == 0 || t > total {
        return Err(Error::invalid("step", format!("{t} outside 1..={total}")));
    }
    Ok(start_sec - spec.alpha * (total + 1 - t) as f64)
}

/// `S x D` feature sequence of the observed window before `start_sec`.
///
/// Row `t` is the table row at frame `floor(step_time · fps)` (the last stored
/// frame at or before it); times before the first stored frame clamp to it.
pub fn sample_features(
    store: &FeatureStore,
    video: &str,
    modality: &str,
    spec: &TimelineSpec,
    start_sec: f64,
) -> Result<Matrix> {
    let table = store.get(video, modality)?;
    let total = spec.total_steps();
    let mut data = Vec::with_capacity(total * table.dim());
    for t in 1..=total {
        data.extend_from_slice(table.row_at_time(step_time(spec, start_sec, t)?));
    }
    Matrix::new(total, table.dim(), data)
}
