//! `RUFT` feature container: one frame-indexed table per (video, modality).
//!
//! ```text
//! "RUFT"                 4 bytes
//! version                u32 (= 1)
//! dim                    u32
//! fps numerator          u32
//! fps denominator        u32
//! row count              u64
//! frame ids              row count × u32, strictly increasing
//! rows                   row count × dim × f32
//! ```
//!
//! All integers and floats are little-endian. Values are promoted to `f64` on load.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const RUFT_MAGIC: &[u8; 4] = b"RUFT";
pub const RUFT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    fps_num: u32,
    fps_den: u32,
    frames: Vec<u32>,
    rows: Matrix,
}

impl FeatureTable {
    pub fn new(fps_num: u32, fps_den: u32, frames: Vec<u32>, rows: Matrix) -> Result<Self> {
        if fps_num == 0 || fps_den == 0 {
            return Err(Error::invalid("frame rate", format!("{fps_num}/{fps_den}")));
        }
        if frames.len() != rows.rows() {
            return Err(Error::shape("feature table rows", frames.len(), rows.rows()));
        }
        if frames.is_empty() {
            return Err(Error::invalid("feature table", "no rows"));
        }
        if frames.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("feature table", "frame ids must be strictly increasing"));
        }
        Ok(Self {
            fps_num,
            fps_den,
            frames,
            rows,
        })
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn fps(&self) -> f64 {
        self.fps_num as f64 / self.fps_den as f64
    }

    pub fn frames(&self) -> &[u32] {
        &self.frames
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    /// Frame index of a timestamp: `floor(time · fps)`.
    pub fn frame_of(&self, seconds: f64) -> i64 {
        (seconds * self.fps_num as f64 / self.fps_den as f64).floor() as i64
    }

    /// Row for the last stored frame at or before `frame`; frames before the
    /// first stored one clamp to it.
    pub fn row_index_for_frame(&self, frame: i64) -> usize {
        if frame < 0 {
            return 0;
        }
        let frame = frame.min(u32::MAX as i64) as u32;
        self.frames.partition_point(|&f| f <= frame).saturating_sub(1)
    }

    pub fn row_at_time(&self, seconds: f64) -> &[f64] {
        self.rows.row(self.row_index_for_frame(self.frame_of(seconds)))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(RUFT_MAGIC)?;
        w.write_all(&RUFT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        w.write_all(&self.fps_num.to_le_bytes())?;
        w.write_all(&self.fps_den.to_le_bytes())?;
        w.write_all(&(self.frames.len() as u64).to_le_bytes())?;
        for f in &self.frames {
            w.write_all(&f.to_le_bytes())?;
        }
        for v in self.rows.as_slice() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(32 + self.frames.len() * 4 + self.rows.len() * 4);
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |reason: &str| Error::format("RUFT feature file", reason);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != RUFT_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32s = [0u8; 16];
        r.read_exact(&mut u32s).map_err(|_| bad("truncated header"))?;
        let word = |i: usize| u32::from_le_bytes(u32s[i * 4..i * 4 + 4].try_into().expect("4 bytes"));
        let (version, dim, num, den) = (word(0), word(1) as usize, word(2), word(3));
        if version != RUFT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mut count = [0u8; 8];
        r.read_exact(&mut count).map_err(|_| bad("truncated header"))?;
        let count = u64::from_le_bytes(count) as usize;
        let mut buf = vec![0u8; count * 4];
        r.read_exact(&mut buf).map_err(|_| bad("truncated frame table"))?;
        let frames = buf
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let mut buf = vec![0u8; count * dim * 4];
        r.read_exact(&mut buf).map_err(|_| bad("truncated rows"))?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        Self::new(num, den, frames, Matrix::new(count, dim, data)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut bytes.as_slice())
    }
}

/// Feature tables keyed by `(video id, modality)`.
///
/// On disk a store is a directory with one `<modality>/<video id>.ruft` file per table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    tables: BTreeMap<(String, String), FeatureTable>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, video: impl Into<String>, modality: impl Into<String>, table: FeatureTable) -> Result<()> {
        let modality = modality.into();
        if let Some(dim) = self.dim(&modality) {
            if dim != table.dim() {
                return Err(Error::shape("feature store dim", format!("{modality} = {dim}"), table.dim()));
            }
        }
        self.tables.insert((video.into(), modality), table);
        Ok(())
    }

    pub fn get(&self, video: &str, modality: &str) -> Result<&FeatureTable> {
        self.tables
            .get(&(video.to_string(), modality.to_string()))
            .ok_or_else(|| Error::Missing(format!("features for video `{video}`, modality `{modality}`")))
    }

    pub fn dim(&self, modality: &str) -> Option<usize> {
        self.tables.iter().find(|((_, m), _)| m == modality).map(|(_, t)| t.dim())
    }

    pub fn modalities(&self) -> Vec<String> {
        let mut m: Vec<String> = self.tables.keys().map(|(_, m)| m.clone()).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    fn table_path(root: &Path, video: &str, modality: &str) -> PathBuf {
        root.join(modality).join(format!("{video}.ruft"))
    }

    pub fn save_dir(&self, root: impl AsRef<Path>) -> Result<()> {
        let root = root.as_ref();
        for ((video, modality), table) in &self.tables {
            let dir = root.join(modality);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            table.save(Self::table_path(root, video, modality))?;
        }
        Ok(())
    }

    /// Loads the tables of the given videos for the given modalities.
    pub fn load_dir<'a>(root: impl AsRef<Path>, modalities: &[String], videos: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let root = root.as_ref();
        let mut store = Self::new();
        for video in videos {
            for m in modalities {
                if store.tables.contains_key(&(video.to_string(), m.clone())) {
                    continue;
                }
                let table = FeatureTable::load(Self::table_path(root, video, m))?;
                store.insert(video, m.clone(), table)?;
            }
        }
        Ok(store)
    }

    /// Modality names present as sub-directories of `root`, sorted.
    pub fn list_modalities(root: impl AsRef<Path>) -> Result<Vec<String>> {
        let root = root.as_ref();
        let mut out = Vec::new();
        for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            if entry.path().is_dir() {
                out.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        out.sort();
        Ok(out)
    }
}
