//! Report envelopes and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, REPORT_SCHEMA};
use crate::error::CliError;

/// Writes `bytes` to a temporary file next to `path`, then renames it over.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

/// `{schema, command, status, config, result}`.
pub fn envelope(cfg: &RunConfig, status: &str, result: Value) -> Value {
    json!({
        "schema": REPORT_SCHEMA,
        "command": cfg.command,
        "status": status,
        "config": cfg,
        "result": result,
    })
}

pub struct Outputs {
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new() -> Self {
        Self { written: Vec::new() }
    }

    pub fn json<T: Serialize>(&mut self, path: PathBuf, v: &T) -> Result<(), CliError> {
        write_atomic(&path, &json_bytes(v)?)?;
        self.written.push(path);
        Ok(())
    }

    pub fn text(&mut self, path: PathBuf, s: &str) -> Result<(), CliError> {
        write_atomic(&path, s.as_bytes())?;
        self.written.push(path);
        Ok(())
    }

    pub fn raw(&mut self, path: PathBuf, b: &[u8]) -> Result<(), CliError> {
        write_atomic(&path, b)?;
        self.written.push(path);
        Ok(())
    }

    pub fn announce(&self) {
        for p in &self.written {
            println!("wrote {}", p.display());
        }
    }
}
