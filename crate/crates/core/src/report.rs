//! Run manifests and the per-run report written by `train`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::fsio;
use crate::metrics::Evaluation;
use crate::models::{build, ModelGraph, ModelSpec};
use crate::training::TrainReport;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fsio::read(path)?;
        Ok(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
    }
}

/// What a command read and wrote. Wall-clock time is recorded here and
/// nowhere else, so every other artifact stays byte-reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_hash: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub tool_version: String,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        RunManifest {
            command: command.to_string(),
            args,
            config_hash: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            tool_version: TOOL_VERSION.to_string(),
            wall_clock_secs: 0.0,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    /// Writes `bytes` atomically and records the file.
    pub fn emit(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        fsio::write_atomic(path, bytes)?;
        self.outputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Records files already written by someone else.
    pub fn record(&mut self, paths: &[PathBuf]) -> Result<()> {
        for p in paths {
            self.outputs.push(FileDigest::of(p)?);
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, self.to_json().as_bytes())
    }
}

/// Metadata stored next to a checkpoint: enough to rebuild the graph and to
/// refuse data normalized with other statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub spec: ModelSpec,
    pub init_seed: u64,
    pub stats_digest: String,
    pub checkpoint_sha256: String,
}

impl ModelCard {
    /// `<checkpoint>.json`.
    pub fn path_for(checkpoint: &Path) -> PathBuf {
        let mut s = checkpoint.as_os_str().to_os_string();
        s.push(".json");
        PathBuf::from(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("card serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Reads a checkpoint and its card, rejecting bytes whose digest differs
    /// from the card.
    pub fn load(checkpoint: &Path) -> Result<(ModelCard, ModelGraph)> {
        let card = ModelCard::from_json(&String::from_utf8_lossy(&fsio::read(&ModelCard::path_for(checkpoint))?))?;
        let bytes = fsio::read(checkpoint)?;
        if sha256_hex(&bytes) != card.checkpoint_sha256 {
            return Err(Error::Format {
                offset: 0,
                detail: format!("{} does not match the digest in its model card", checkpoint.display()),
            });
        }
        let mut model = build(&card.spec, card.init_seed)?;
        model.load_checkpoint_bytes(&bytes)?;
        Ok((card, model))
    }
}

/// Output of one `train` invocation: the training report plus the test-split
/// evaluation, which `compare` aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub train: TrainReport,
    pub test: Option<Evaluation>,
    pub test_digest: String,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emitted_files_are_listed_with_content_digests() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("cost", vec![]);
        let p = dir.path().join("a.csv");
        m.emit(&p, b"x,y\n").unwrap();
        assert_eq!(m.outputs.len(), 1);
        assert_eq!(m.outputs[0].sha256, sha256_hex(b"x,y\n"));
        assert_eq!(FileDigest::of(&p).unwrap(), m.outputs[0]);
    }

    #[test]
    fn card_path_appends_suffix() {
        assert_eq!(ModelCard::path_for(Path::new("out/unet.pyc1")), PathBuf::from("out/unet.pyc1.json"));
    }

    #[test]
    fn card_load_round_trips_and_rejects_tampering() {
        use crate::models::{Family, Width};
        let dir = tempfile::tempdir().unwrap();
        let spec = ModelSpec::desk(Family::UNet).with_width(Width::new(1, 8).unwrap());
        let model = build(&spec, 5).unwrap();
        let bytes = model.checkpoint_bytes();
        let ckpt = dir.path().join("m.pyc1");
        let card = ModelCard { spec, init_seed: 5, stats_digest: "s".into(), checkpoint_sha256: sha256_hex(&bytes) };
        fsio::write_atomic(&ckpt, &bytes).unwrap();
        fsio::write_atomic(&ModelCard::path_for(&ckpt), card.to_json().as_bytes()).unwrap();
        let (back, loaded) = ModelCard::load(&ckpt).unwrap();
        assert_eq!(back, card);
        assert_eq!(loaded.checkpoint_bytes(), bytes);
        let mut bad = bytes.clone();
        *bad.last_mut().unwrap() ^= 1;
        fsio::write_atomic(&ckpt, &bad).unwrap();
        assert!(matches!(ModelCard::load(&ckpt), Err(Error::Format { .. })));
    }
}
