//! Versioned GA checkpoints.
//!
//! Layout: one header line `evoesn-checkpoint <version> <sha256-hex>` followed
//! by a JSON payload whose digest is in the header. Writes go to a sibling
//! temporary file that is renamed into place, so readers never observe a
//! partially written checkpoint.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GaState;
use crate::error::{Error, Result};

const MAGIC: &str = "evoesn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Opaque run configuration stored alongside the state.
    pub config: serde_json::Value,
    pub state: GaState,
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let payload = serde_json::to_vec(checkpoint)?;
    let digest = hex::encode(Sha256::digest(&payload));
    let mut tmp_name = path.as_os_str().to_owned();
    tmp_name.push(".tmp");
    let tmp = Path::new(&tmp_name);
    {
        let mut f = std::fs::File::create(tmp)?;
        writeln!(f, "{MAGIC} {CHECKPOINT_VERSION} {digest}")?;
        f.write_all(&payload)?;
        f.sync_all()?;
    }
    std::fs::rename(tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let bad = |msg: &str| Error::Load(format!("{}: {msg}", path.display()));
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8"))?;
    let mut parts = header.split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(bad("not a checkpoint file"));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("unreadable version"))?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!(
            "checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )));
    }
    let digest = parts.next().ok_or_else(|| bad("missing checksum"))?;
    let payload = &bytes[nl + 1..];
    if hex::encode(Sha256::digest(payload)) != digest {
        return Err(bad("checksum mismatch (corrupted or truncated)"));
    }
    serde_json::from_slice(payload).map_err(|e| bad(&e.to_string()))
}
