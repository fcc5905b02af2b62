//! Run manifests: what a command read, what it wrote, and how to rerun it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
    /// False for files holding wall-clock measurements.
    pub reproducible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Every argument after defaults were applied.
    pub config: serde_json::Value,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    /// Working directory that relative paths in `argv` resolve against.
    pub cwd: PathBuf,
    pub output_dir: PathBuf,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

/// Files a command touched, before hashing.
#[derive(Debug, Clone, Default)]
pub struct Run {
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub inputs: Vec<(String, PathBuf)>,
    /// `(role, path, reproducible)`
    pub outputs: Vec<(String, PathBuf, bool)>,
}

impl Run {
    pub fn new(output_dir: impl Into<PathBuf>, seed: Option<u64>) -> Self {
        Self {
            seed,
            output_dir: output_dir.into(),
            ..Self::default()
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) {
        self.inputs.push((role.to_string(), path.to_path_buf()));
    }

    pub fn output(&mut self, role: &str, path: &Path) {
        self.outputs.push((role.to_string(), path.to_path_buf(), true));
    }

    pub fn timing_output(&mut self, role: &str, path: &Path) {
        self.outputs.push((role.to_string(), path.to_path_buf(), false));
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn records<'a>(files: impl Iterator<Item = (&'a str, &'a Path, bool)>) -> Result<Vec<FileRecord>> {
    files
        .map(|(role, path, reproducible)| {
            Ok(FileRecord {
                role: role.to_string(),
                path: path.to_path_buf(),
                sha256: sha256_file(path)?,
                reproducible,
            })
        })
        .collect()
}

impl RunManifest {
    pub fn build(command: &str, config: serde_json::Value, argv: Vec<String>, run: &Run) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: run.seed,
            config,
            argv,
            cwd: std::env::current_dir().context("cannot determine the working directory")?,
            output_dir: run.output_dir.clone(),
            inputs: records(run.inputs.iter().map(|(r, p)| (r.as_str(), p.as_path(), true)))?,
            outputs: records(run.outputs.iter().map(|(r, p, rep)| (r.as_str(), p.as_path(), *rep)))?,
        })
    }

    /// `<output_dir>/<command>.manifest.json`
    pub fn path(&self) -> PathBuf {
        manifest_path(&self.output_dir, &self.command)
    }

    pub fn save(&self) -> Result<PathBuf> {
        let path = self.path();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(&path, json + "\n").with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("{} is not a run manifest", path.display()))
    }

    /// The recorded arguments with every output path, and the output
    /// directory itself, moved into `out_dir`.
    pub fn redirected_argv(&self, out_dir: &Path) -> Vec<String> {
        let redirect = |value: &str| -> Option<String> {
            let value = Path::new(value);
            if value == self.output_dir {
                return Some(out_dir.display().to_string());
            }
            self.outputs
                .iter()
                .find(|o| o.path == value)
                .and_then(|o| o.path.file_name())
                .map(|name| out_dir.join(name).display().to_string())
        };
        self.argv
            .iter()
            .map(|arg| match arg.split_once('=') {
                Some((flag, value)) if flag.starts_with("--") => match redirect(value) {
                    Some(new) => format!("{flag}={new}"),
                    None => arg.clone(),
                },
                _ => redirect(arg).unwrap_or_else(|| arg.clone()),
            })
            .collect()
    }
}

pub fn manifest_path(output_dir: &Path, command: &str) -> PathBuf {
    output_dir.join(format!("{command}.manifest.json"))
}
