use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Seeds {
    pub global: u64,
    pub synth: u64,
    pub embedding: u64,
    pub random_features: u64,
    pub protocol: u64,
    pub error_model: u64,
}

impl Seeds {
    pub fn of(cfg: &RunConfig) -> Self {
        Seeds {
            global: cfg.seed,
            synth: cfg.synth.seed,
            embedding: cfg.embedding.seed,
            random_features: cfg.seed,
            protocol: cfg.protocol.seed,
            error_model: cfg.explain.error_model.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_sha256: String,
    pub seeds: Seeds,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<OutputDigest>,
    pub summary: serde_json::Value,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub fn input_digest(name: &str, path: &Path) -> Result<InputDigest> {
    Ok(InputDigest {
        name: name.to_string(),
        sha256: file_sha256(path)?,
    })
}

fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Collects one stage's files in a hidden staging directory and moves it
/// into place only once every file is written.
pub struct StageWriter {
    name: String,
    staging: PathBuf,
    target: PathBuf,
    files: Vec<String>,
    committed: bool,
}

impl StageWriter {
    pub fn begin(out: &Path, name: &str) -> Result<Self> {
        fs::create_dir_all(out)
            .with_context(|| format!("creating output directory {}", out.display()))?;
        let staging = out.join(format!(".{name}.partial"));
        if staging.exists() {
            fs::remove_dir_all(&staging)
                .with_context(|| format!("removing stale {}", staging.display()))?;
        }
        fs::create_dir_all(&staging).with_context(|| format!("creating {}", staging.display()))?;
        Ok(StageWriter {
            name: name.to_string(),
            staging,
            target: out.join(name),
            files: Vec::new(),
            committed: false,
        })
    }

    /// Writes `rel` (a `/`-separated path inside the stage) with `fill`.
    pub fn write<F>(&mut self, rel: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.staging.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        fill(&mut w).with_context(|| format!("writing {rel}"))?;
        w.flush()?;
        self.files.push(rel.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let bytes = to_json_bytes(value)?;
        self.write(rel, |w| Ok(w.write_all(&bytes)?))
    }

    /// Writes the stage manifest, replaces any previous stage directory and
    /// returns the manifest's SHA-256.
    pub fn commit(
        mut self,
        config_sha256: &str,
        seeds: Seeds,
        inputs: Vec<InputDigest>,
        summary: serde_json::Value,
    ) -> Result<String> {
        let mut files = self.files.clone();
        files.sort();
        let outputs = files
            .iter()
            .map(|rel| {
                let path = self.staging.join(rel);
                Ok(OutputDigest {
                    path: rel.clone(),
                    sha256: file_sha256(&path)?,
                    bytes: fs::metadata(&path)?.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = StageManifest {
            stage: self.name.clone(),
            config_sha256: config_sha256.to_string(),
            seeds,
            inputs,
            outputs,
            summary,
        };
        let bytes = to_json_bytes(&manifest)?;
        fs::write(self.staging.join(MANIFEST), &bytes)?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target)
                .with_context(|| format!("removing old {}", self.target.display()))?;
        }
        fs::rename(&self.staging, &self.target)
            .with_context(|| format!("moving {} into place", self.target.display()))?;
        self.committed = true;
        Ok(hex(&Sha256::digest(&bytes)))
    }
}

impl Drop for StageWriter {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRef {
    pub stage: String,
    pub manifest_sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub seeds: Seeds,
    pub stages: Vec<StageRef>,
}

/// Atomically replaces `out/manifest.json`.
pub fn write_run_manifest(out: &Path, manifest: &RunManifest) -> Result<()> {
    let tmp = out.join(".manifest.json.partial");
    fs::write(&tmp, to_json_bytes(manifest)?)?;
    fs::rename(&tmp, out.join(MANIFEST))?;
    Ok(())
}
