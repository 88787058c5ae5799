use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: RunConfig,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub summary: serde_json::Value,
    pub wall_time_secs: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries: Vec<PathBuf> = rd
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Hashes of every file under `run_dir` except the manifest itself.
pub fn hash_outputs(run_dir: &Path) -> Result<Vec<FileHash>> {
    let mut files = Vec::new();
    walk(run_dir, &mut files)?;
    files
        .into_iter()
        .filter(|p| p.file_name().is_none_or(|n| n != "manifest.json") || p.parent() != Some(run_dir))
        .map(|p| {
            let rel = p.strip_prefix(run_dir).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            Ok(FileHash { sha256: sha256_file(&p)?, path: rel })
        })
        .collect()
}

pub fn hash_inputs(paths: &[PathBuf]) -> Result<Vec<FileHash>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files = Vec::new();
            walk(p, &mut files)?;
            for f in files {
                out.push(FileHash { path: f.display().to_string(), sha256: sha256_file(&f)? });
            }
        } else {
            out.push(FileHash { path: p.display().to_string(), sha256: sha256_file(p)? });
        }
    }
    Ok(out)
}

impl Manifest {
    pub fn write(&self, run_dir: &Path) -> Result<()> {
        let p = run_dir.join("manifest.json");
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        fs::write(&p, s).map_err(|e| Error::io(&p, e))
    }
}
