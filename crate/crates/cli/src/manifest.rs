use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Record of one command invocation, written before any heavy work and
/// completed when the command finishes.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Value,
    pub seed: u64,
    pub artifacts: Vec<PathBuf>,
    pub versions: Versions,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub status: String,
    #[serde(skip)]
    path: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub rulstm: &'static str,
    pub cli: &'static str,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(dir: &Path, command: &str, config: &impl Serialize, seed: u64, artifacts: Vec<PathBuf>) -> Result<Self> {
        let m = Self {
            command: command.into(),
            args: std::env::args().collect(),
            config: serde_json::to_value(config)?,
            seed,
            artifacts,
            versions: Versions {
                rulstm: env!("CARGO_PKG_VERSION"),
                cli: env!("CARGO_PKG_VERSION"),
            },
            started_unix: now(),
            finished_unix: None,
            status: "running".into(),
            path: dir.join(MANIFEST_FILE),
        };
        m.write()?;
        Ok(m)
    }

    fn write(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&self.path, text).with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn finish(mut self, ok: bool) -> Result<()> {
        self.finished_unix = Some(now());
        self.status = if ok { "ok" } else { "failed" }.into();
        for a in &self.artifacts {
            if ok && !a.exists() {
                anyhow::bail!("artifact {} was not written", a.display());
            }
        }
        self.write()
    }
}
