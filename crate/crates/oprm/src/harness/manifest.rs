//! Per-run manifest: resolved config snapshot, artifact hashes, version,
//! and stage timings. Written next to the artifacts it describes.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the manifest directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    /// Resolved experiment config, embedded verbatim.
    pub config: String,
    pub artifacts: Vec<ArtifactEntry>,
    pub timings: Vec<StageTiming>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, config_snapshot: String) -> Self {
        RunManifest {
            tool: format!("oprm {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            config: config_snapshot,
            artifacts: Vec::new(),
            timings: Vec::new(),
        }
    }

    /// Hash an artifact that lives under `dir`.
    pub fn add_artifact(&mut self, dir: &Path, rel: &str) -> Result<()> {
        let bytes = std::fs::read(dir.join(rel))?;
        self.artifacts.push(ArtifactEntry {
            path: rel.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn add_timing(&mut self, stage: &str, seconds: f64) {
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("manifest parse: {e}")))
    }
}

/// Recompute every artifact hash and compare with the manifest.
pub fn verify_manifest(dir: &Path) -> Result<()> {
    let manifest = RunManifest::read(dir)?;
    for a in &manifest.artifacts {
        let bytes = std::fs::read(dir.join(&a.path))
            .map_err(|e| Error::Config(format!("artifact {} unreadable: {e}", a.path)))?;
        let got = sha256_hex(&bytes);
        if got != a.sha256 {
            return Err(Error::Config(format!(
                "artifact {} hash mismatch: manifest {} vs file {}",
                a.path, a.sha256, got
            )));
        }
        if bytes.len() as u64 != a.bytes {
            return Err(Error::Config(format!("artifact {} size mismatch", a.path)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_roundtrip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "m,acc\n1,0.5\n").unwrap();
        let mut m = RunManifest::new("eval", "seed = 1".into());
        m.add_artifact(dir.path(), "a.csv").unwrap();
        m.add_timing("eval", 0.25);
        m.write(dir.path()).unwrap();

        verify_manifest(dir.path()).unwrap();

        // Tampering must be detected.
        std::fs::write(dir.path().join("a.csv"), "m,acc\n1,0.9\n").unwrap();
        assert!(verify_manifest(dir.path()).is_err());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
