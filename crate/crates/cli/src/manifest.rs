//! Reproducibility manifest written next to every command's artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub artifacts: Vec<String>,
    pub wall_clock_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads an input file and records its digest.
pub fn read_input(path: &Path, inputs: &mut Vec<InputDigest>) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    inputs.push(InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    });
    String::from_utf8(bytes).map_err(|_| CliError::Usage(format!("{} is not UTF-8 text", path.display())))
}

/// Output directory with a fixed list of artifact names. Creation fails when
/// any of them exists, unless `force` is set.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn prepare(dir: &Path, names: &[&str], force: bool) -> Result<Self, CliError> {
        if !force {
            for name in names.iter().chain(["manifest.json"].iter()) {
                let p = dir.join(name);
                if p.exists() {
                    return Err(CliError::Usage(format!(
                        "{} already exists; pass --force to overwrite",
                        p.display()
                    )));
                }
            }
        }
        fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let p = self.dir.join(name);
        fs::write(&p, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display())))?;
        self.written.push(p.display().to_string());
        Ok(p)
    }

    pub fn finish(mut self, mut manifest: RunManifest) -> Result<(), CliError> {
        let path = self.dir.join("manifest.json");
        self.written.push(path.display().to_string());
        manifest.artifacts = self.written;
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        fs::write(&path, text + "\n").map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}
