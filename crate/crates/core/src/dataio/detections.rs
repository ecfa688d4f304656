use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureStore, FeatureTable};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Object detections of one frame; each detection is `[class, score]`.
/// Box geometry is not needed by the bag-of-objects encoding and is not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub video_id: String,
    pub frame: u32,
    pub dets: Vec<(usize, f64)>,
}

/// Per-class sum of detection confidences.
///
/// Detections are summed in (class, score) order, so the result is bitwise
/// independent of the input order.
pub fn bag_of_objects(dets: &[(usize, f64)], num_classes: usize) -> Result<Vec<f64>> {
    let mut sorted = dets.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out = vec![0.0; num_classes];
    for (class, score) in sorted {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid("detection score", format!("{score} not in [0, 1]")));
        }
        *out
            .get_mut(class)
            .ok_or_else(|| Error::invalid("detection class", format!("{class} >= {num_classes}")))? += score;
    }
    Ok(out)
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_detections(path: impl AsRef<Path>, records: &[DetectionRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

/// Builds bag-of-objects feature tables, one per video, under `modality`.
pub fn object_features(
    records: &[DetectionRecord],
    num_classes: usize,
    fps_num: u32,
    fps_den: u32,
    modality: &str,
) -> Result<FeatureStore> {
    let mut by_video: BTreeMap<&str, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    for r in records {
        let boo = bag_of_objects(&r.dets, num_classes)?;
        let frames = by_video.entry(&r.video_id).or_default();
        if frames.insert(r.frame, boo).is_some() {
            return Err(Error::invalid("detections", format!("duplicate frame {} in {}", r.frame, r.video_id)));
        }
    }
    let mut store = FeatureStore::new();
    for (video, frames) in by_video {
        let ids: Vec<u32> = frames.keys().copied().collect();
        let data: Vec<f64> = frames.into_values().flatten().collect();
        let rows = Matrix::new(ids.len(), num_classes, data)?;
        store.insert(video, modality, FeatureTable::new(fps_num, fps_den, ids, rows)?)?;
    }
    Ok(store)
}
