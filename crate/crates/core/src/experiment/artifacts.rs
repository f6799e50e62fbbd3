//! Run directories: every output file is recorded with its SHA-256, and a
//! manifest ties them to a content hash of everything the run read.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::ExperimentConfig;

pub const MANIFEST: &str = "manifest.json";
pub const TIMING: &str = "timing.txt";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of an upstream file; a missing file is a dependency error.
pub fn hash_file(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::Dependency(format!("{} not found", path.display())));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Hash of the command, its options, the config snapshot and the upstream artifacts.
    pub input_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// The output directory of one subcommand. Files are written through it so the
/// manifest lists each one. They go to a staging directory that replaces the
/// final one only when the run finishes, so a failed run leaves nothing behind.
pub struct RunDir {
    path: PathBuf,
    staging: PathBuf,
    finished: bool,
    command: String,
    options: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl RunDir {
    /// Starts a run whose outputs will replace `path` on success.
    pub fn create(path: &Path, command: &str) -> Result<Self> {
        let mut name = path.file_name().ok_or_else(|| Error::Config(format!("invalid output directory {}", path.display())))?.to_os_string();
        name.push(".partial");
        let staging = path.with_file_name(name);
        if staging.exists() {
            std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        std::fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            staging,
            finished: false,
            command: command.to_string(),
            options: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    /// Final location of the run.
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn option(&mut self, key: &str, value: &str) {
        self.options.insert(key.to_string(), value.to_string());
    }

    /// Records an upstream file the run depends on and returns its path.
    pub fn input(&mut self, name: &str, path: &Path) -> Result<PathBuf> {
        let hash = hash_file(path)?;
        self.inputs.insert(name.to_string(), hash);
        Ok(path.to_path_buf())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.staging.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.write_text(name, &text)
    }

    /// Writes the config snapshot, the seeds and the manifest. Wall-clock time goes
    /// to a separate file left out of the manifest so reruns stay byte-identical.
    pub fn finish(mut self, cfg: &ExperimentConfig, elapsed_secs: f64) -> Result<Manifest> {
        let snapshot = cfg.to_toml_string()?;
        self.write_text("config.toml", &snapshot)?;
        let seeds = serde_json::json!({
            "master": cfg.seed,
            "evaluation": cfg.evaluation.seeds,
            "layout": cfg.scenario.layout_seed,
            "branches": {
                "history": super::pipeline::branch::HISTORY,
                "train_feed": super::pipeline::branch::TRAIN_FEED,
                "lstm": super::pipeline::branch::LSTM,
                "agent": super::pipeline::branch::AGENT,
                "meta": super::pipeline::branch::META,
                "validation": super::pipeline::branch::VALIDATION,
                "evaluation_offset": super::pipeline::branch::EVAL,
            },
        });
        self.write_json("seeds.json", &seeds)?;

        let mut material = String::new();
        writeln!(material, "command {}", self.command).expect("string write");
        for (k, v) in &self.options {
            writeln!(material, "option {k} {v}").expect("string write");
        }
        writeln!(material, "seed {}", cfg.seed).expect("string write");
        for (k, v) in &self.inputs {
            writeln!(material, "input {k} {v}").expect("string write");
        }
        material.push_str(&snapshot);
        let manifest = Manifest {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            input_hash: sha256_hex(material.as_bytes()),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let p = self.staging.join(MANIFEST);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        let t = self.staging.join(TIMING);
        std::fs::write(&t, format!("elapsed_seconds {elapsed_secs:.3}\n")).map_err(|e| Error::io(&t, e))?;
        if self.path.exists() {
            std::fs::remove_dir_all(&self.path).map_err(|e| Error::io(&self.path, e))?;
        }
        std::fs::rename(&self.staging, &self.path).map_err(|e| Error::io(&self.path, e))?;
        self.finished = true;
        Ok(manifest)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if !self.finished {
            let _ = std::fs::remove_dir_all(&self.staging);
        }
    }
}
