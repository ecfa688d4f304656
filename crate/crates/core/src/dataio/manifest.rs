use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Vocabulary;
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "video_id,start_sec,end_sec,verb_id,noun_id,action_id";

/// One annotated action segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub video_id: String,
    pub start_sec: f64,
    pub end_sec: f64,
    pub verb_id: usize,
    pub noun_id: usize,
    pub action_id: usize,
}

impl SampleRecord {
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if !(self.start_sec < self.end_sec) {
            return Err(Error::invalid(
                "sample record",
                format!("{}: start {} is not before end {}", self.video_id, self.start_sec, self.end_sec),
            ));
        }
        match vocab.actions.get(self.action_id) {
            Some(&[v, n]) if v == self.verb_id && n == self.noun_id => Ok(()),
            _ => Err(Error::invalid(
                "sample record",
                format!(
                    "{}: action {} does not map to (verb {}, noun {})",
                    self.video_id, self.action_id, self.verb_id, self.noun_id
                ),
            )),
        }
    }
}

pub fn read_manifest(path: impl AsRef<Path>, vocab: Option<&Vocabulary>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<&str> = reader.headers()?.iter().collect();
    if header.join(",") != MANIFEST_HEADER {
        return Err(Error::format("manifest header", format!("{} (expected {MANIFEST_HEADER})", header.join(","))));
    }
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let rec: SampleRecord = row?;
        if let Some(v) = vocab {
            rec.validate(v)?;
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[SampleRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(MANIFEST_HEADER.split(','))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.csv");
        let recs = vec![SampleRecord {
            video_id: "P01_01".into(),
            start_sec: 12.5,
            end_sec: 14.25,
            verb_id: 1,
            noun_id: 0,
            action_id: 0,
        }];
        write_manifest(&p, &recs).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), MANIFEST_HEADER);
        let v = Vocabulary::new(vec!["a".into(), "b".into()], vec!["x".into()], vec![[1, 0]]).unwrap();
        assert_eq!(read_manifest(&p, Some(&v)).unwrap(), recs);
    }

    #[test]
    fn inconsistent_labels_are_rejected() {
        let v = Vocabulary::new(vec!["a".into()], vec!["x".into()], vec![[0, 0]]).unwrap();
        let r = SampleRecord {
            video_id: "v".into(),
            start_sec: 2.0,
            end_sec: 1.0,
            verb_id: 0,
            noun_id: 0,
            action_id: 0,
        };
        assert!(r.validate(&v).is_err());
        let r = SampleRecord { start_sec: 0.5, noun_id: 3, ..r };
        assert!(r.validate(&v).is_err());
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "video,start\nx,1\n").unwrap();
        assert!(read_manifest(&p, None).is_err());
    }
}
