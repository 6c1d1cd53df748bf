//! Run manifests: what went in, what came out, and with which settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct FileRef {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
pub struct Manifest {
    command: String,
    version: String,
    seed: Option<u64>,
    inputs: BTreeMap<String, FileRef>,
    outputs: BTreeMap<String, FileRef>,
    settings: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn file_ref(path: &Path) -> Result<FileRef> {
    Ok(FileRef { path: path.display().to_string(), sha256: sha256_file(path)? })
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, settings: impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            settings: serde_json::to_value(settings)?,
        })
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<&mut Self> {
        self.inputs.insert(role.into(), file_ref(path)?);
        Ok(self)
    }

    pub fn output(&mut self, role: &str, path: &Path) -> Result<&mut Self> {
        self.outputs.insert(role.into(), file_ref(path)?);
        Ok(self)
    }

    /// Writes `<path>.manifest.json`, or `manifest.json` inside a directory.
    pub fn write_beside(&self, path: &Path) -> Result<PathBuf> {
        let target = if path.is_dir() {
            path.join("manifest.json")
        } else {
            let mut name = path.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            path.with_file_name(name)
        };
        std::fs::write(&target, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", target.display()))?;
        Ok(target)
    }
}
