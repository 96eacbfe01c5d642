//! Run directories: an exclusive lock while a command writes, and one
//! `manifest.json` recording inputs, outputs and their SHA-256 digests.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".hetlink.lock";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Later commands that added files to this directory (e.g. `report`).
    #[serde(default)]
    pub amended_by: Vec<String>,
    pub created_unix: u64,
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

fn digest(path: &Path) -> Result<FileDigest, Failure> {
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: sha256_file(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?,
    })
}

/// An output directory held exclusively until dropped.
pub struct RunDir {
    dir: PathBuf,
    lock: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl RunDir {
    pub fn open(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::data(format!("cannot create {}: {e}", dir.display())))?;
        let lock = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                return Err(Failure::config(format!(
                    "{} is locked by another run (remove {} if it is stale)",
                    dir.display(),
                    lock.display()
                )));
            }
            Err(e) => return Err(Failure::data(format!("cannot lock {}: {e}", dir.display()))),
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            lock,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn input(&mut self, path: &Path) {
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
    }

    /// Creates `name` inside the directory, fills it with `f` and records it
    /// as an output.
    pub fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<PathBuf, Failure> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Failure::data(format!("{}: {e}", parent.display())))?;
        }
        let io_err = |e: io::Error| Failure::data(format!("{}: {e}", path.display()));
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        f(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)?;
        self.output(&path);
        Ok(path)
    }

    pub fn output(&mut self, path: &Path) {
        if !self.outputs.iter().any(|p| p == path) {
            self.outputs.push(path.to_path_buf());
        }
    }

    /// Writes a fresh manifest, replacing any earlier one.
    pub fn finish(self, command: &str, seed: Option<u64>, config: serde_json::Value) -> Result<(), Failure> {
        let manifest = RunManifest {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs: self.inputs.iter().map(|p| digest(p)).collect::<Result<_, _>>()?,
            outputs: self.outputs.iter().map(|p| digest(p)).collect::<Result<_, _>>()?,
            amended_by: Vec::new(),
            created_unix: now(),
        };
        self.save(&manifest)
    }

    /// Adds this command's files to an existing manifest, or starts one.
    pub fn amend(self, command: &str) -> Result<(), Failure> {
        let path = self.path(MANIFEST);
        let Ok(text) = fs::read_to_string(&path) else {
            return self.finish(command, None, serde_json::Value::Null);
        };
        let mut manifest: RunManifest =
            serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        for p in &self.inputs {
            let d = digest(p)?;
            manifest.inputs.retain(|x| x.path != d.path);
            manifest.inputs.push(d);
        }
        for p in &self.outputs {
            let d = digest(p)?;
            manifest.outputs.retain(|x| x.path != d.path);
            manifest.outputs.push(d);
        }
        manifest.amended_by.push(command.to_string());
        self.save(&manifest)
    }

    fn save(&self, manifest: &RunManifest) -> Result<(), Failure> {
        let path = self.path(MANIFEST);
        let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Failure::data(format!("{}: {e}", path.display())))
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}
