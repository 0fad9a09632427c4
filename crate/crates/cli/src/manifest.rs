use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use radnet_core::experiment::Format;
use radnet_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance record written next to every command's outputs. Contains no
/// timestamps so reruns are byte-identical.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: &'static str,
    pub config_file: String,
    pub seed: u64,
    pub threads: usize,
    pub formats: Vec<Format>,
    /// Effective configuration with every default filled in.
    pub config: serde_json::Value,
    /// SHA-256 of every file read.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every file written, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(command: &'static str, config_file: &Path) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: radnet_core::VERSION,
            command,
            config_file: config_file.display().to_string(),
            seed: 0,
            threads: 1,
            formats: Vec::new(),
            config: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Records a file from the output directory under its bare name.
    pub fn record_artifact_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(file_name(path), sha256_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(file_name(path), sha256_file(path)?);
        Ok(())
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let io = |e| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut file = File::open(path).map_err(io)?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher).map_err(io)?;
    Ok(hex::encode(hasher.finalize()))
}
