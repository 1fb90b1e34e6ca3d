//! Run directory ownership, atomic output writes and the run manifest.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";
const LOCK_NAME: &str = ".skyloc.lock";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: f64,
}

/// Everything needed to reproduce a run: the effective configuration, the
/// digests of its inputs, and what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    /// Canonical text of the effective configuration.
    pub config: String,
    /// Input role to file digest.
    pub inputs: BTreeMap<String, FileDigest>,
    /// Wall-clock time per stage; the only field that varies between reruns.
    pub timings: Vec<StageTiming>,
    /// Files written to the run directory, in write order.
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config_file(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("manifest {}: {e}", path.display())))
    }

    /// Fails if any recorded input no longer has its recorded digest. The
    /// config file is exempt: a rerun uses the snapshot instead.
    pub fn verify_inputs(&self) -> CliResult<()> {
        for (role, recorded) in self.inputs.iter().filter(|(role, _)| *role != "config") {
            let path = PathBuf::from(&recorded.path);
            let current = digest_path(&path)?;
            if current.sha256 != recorded.sha256 {
                return Err(CliError::InputChanged { role: role.clone(), path });
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of a file, or of a directory as its sorted `name\0digest` listing.
pub fn digest_path(path: &Path) -> CliResult<FileDigest> {
    let meta = fs::metadata(path).map_err(|e| CliError::input(path, e))?;
    if meta.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| CliError::input(path, e))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::input(path, e))?;
        entries.sort();
        let mut hasher = Sha256::new();
        let mut bytes = 0;
        for entry in entries.iter().filter(|p| p.is_file()) {
            let d = digest_path(entry)?;
            let name = entry.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            hasher.update(name.as_bytes());
            hasher.update([0]);
            hasher.update(d.sha256.as_bytes());
            bytes += d.bytes;
        }
        let sha256 = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        return Ok(FileDigest { path: path.display().to_string(), sha256, bytes });
    }
    let data = fs::read(path).map_err(|e| CliError::input(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&data),
        bytes: data.len() as u64,
    })
}

/// Collects named outputs and stage timings in memory; nothing touches the
/// run directory until [`RunDir::commit`].
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    timings: Vec<StageTiming>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        let name = name.into();
        let bytes = bytes.into();
        match self.files.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = bytes,
            None => self.files.push((name, bytes)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Runs `f` and records its wall-clock time under `stage`.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> CliResult<T>) -> CliResult<T> {
        let start = Instant::now();
        let out = f(self)?;
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
        Ok(out)
    }
}

/// Exclusive ownership of a run directory for the life of the value.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    lock: PathBuf,
}

impl RunDir {
    pub fn acquire(root: &Path) -> CliResult<Self> {
        let out_err = |source| CliError::Output { path: root.to_path_buf(), source };
        fs::create_dir_all(root).map_err(out_err)?;
        let lock = root.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => return Err(CliError::Locked(root.to_path_buf())),
            Err(e) => return Err(out_err(e)),
        }
        Ok(Self { root: root.to_path_buf(), lock })
    }

    /// Writes `bytes` to `name` through a temporary file and a rename, so a
    /// reader never sees a partial file.
    pub fn write_atomic(&self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let target = self.root.join(name);
        let out_err = |source| CliError::Output { path: target.clone(), source };
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(out_err)?;
        }
        let file_name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let tmp = target.with_file_name(format!(".{file_name}.tmp"));
        let mut f = File::create(&tmp).map_err(out_err)?;
        f.write_all(bytes).map_err(out_err)?;
        f.sync_all().map_err(out_err)?;
        drop(f);
        fs::rename(&tmp, &target).map_err(out_err)
    }

    /// Writes every output, then the manifest.
    pub fn commit(&self, command: &str, config: String, inputs: BTreeMap<String, FileDigest>, outputs: Outputs) -> CliResult<RunManifest> {
        let mut listed = Vec::new();
        for (name, bytes) in &outputs.files {
            self.write_atomic(name, bytes)?;
            listed.push(FileDigest {
                path: name.clone(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            });
        }
        let manifest = RunManifest {
            tool: format!("skyloc {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            config,
            inputs,
            timings: outputs.timings,
            outputs: listed,
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::config(format!("manifest serialization: {e}")))?;
        self.write_atomic(MANIFEST_NAME, format!("{text}\n").as_bytes())?;
        Ok(manifest)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}
