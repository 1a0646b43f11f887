use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Record that a step completed for a given set of inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step_id: String,
    pub input_hashes: BTreeMap<String, String>,
    pub output_artifacts: Vec<String>,
    pub output_hashes: BTreeMap<String, String>,
    pub completed_at: DateTime<Utc>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write through a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp: PathBuf = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn checkpoint_path(run_dir: &Path, step_id: &str) -> PathBuf {
    run_dir.join("checkpoints").join(format!("{step_id}.json"))
}

/// `Ok(None)` when absent, `Err(reason)` when unreadable.
pub fn read_checkpoint(run_dir: &Path, step_id: &str) -> Result<Option<Checkpoint>, String> {
    let path = checkpoint_path(run_dir, step_id);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.to_string()),
    };
    let cp: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    if cp.step_id != step_id {
        return Err(format!("checkpoint names step {:?}", cp.step_id));
    }
    Ok(Some(cp))
}

impl Checkpoint {
    /// Whether every recorded output is still on disk unchanged.
    pub fn outputs_intact(&self, run_dir: &Path) -> bool {
        self.output_artifacts.iter().all(|name| {
            match (fs::read(run_dir.join(name)), self.output_hashes.get(name)) {
                (Ok(bytes), Some(expected)) => sha256_hex(&bytes) == *expected,
                _ => false,
            }
        })
    }
}
