//! Run manifests: one `manifest.json` per output directory recording how the
//! outputs were produced and what went in.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const TOOL_NAME: &str = "gvtcnn";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Command line after the program name, as given.
    pub args: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    /// Inputs of the runs that produced this run's inputs, when known.
    #[serde(default)]
    pub upstream_inputs: Vec<FileDigest>,
    /// Output files, relative to the manifest's directory.
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String], seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            tool: TOOL_NAME.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: args.to_vec(),
            seed,
            threads: rayon::current_num_threads(),
            config,
            inputs: Vec::new(),
            upstream_inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        let bytes = read(path)?;
        self.add_input_bytes(path, &bytes);
        Ok(())
    }

    pub fn add_input_bytes(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    /// Every input digest this run depends on, directly or upstream.
    pub fn all_input_hashes(&self) -> impl Iterator<Item = &str> {
        self.inputs.iter().chain(&self.upstream_inputs).map(|d| d.sha256.as_str())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

/// Writes named outputs into `dir`, then the manifest listing them.
pub struct OutputDir {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutputDir {
    pub fn create(dir: &Path, manifest: RunManifest) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn manifest_mut(&mut self) -> &mut RunManifest {
        &mut self.manifest
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.manifest.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn finish(self) -> CliResult<PathBuf> {
        let path = self.dir.join(MANIFEST_NAME);
        let mut json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        json.push('\n');
        fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("synth", &["synth".into(), "--count".into(), "2".into()], 7, serde_json::json!({"count": 2}));
        m.add_input_bytes(Path::new("a.pgm"), b"xyz");
        let mut out = OutputDir::create(dir.path(), m.clone()).unwrap();
        out.write("x.bin", b"abc").unwrap();
        let path = out.finish().unwrap();
        let back = RunManifest::load(&path).unwrap();
        assert_eq!(back.inputs, m.inputs);
        assert_eq!(back.outputs.len(), 1);
        assert_eq!(back.outputs[0].path, "x.bin");
        assert_eq!(back.all_input_hashes().count(), 1);
    }
}
