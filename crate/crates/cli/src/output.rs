//! Run directories and the manifest that makes each run reproducible.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub struct RunDir {
    pub path: PathBuf,
    /// File names written so far, relative to `path`.
    pub outputs: Vec<String>,
}

impl RunDir {
    /// Creates `<out>/<subcommand>/<label>`; an existing directory is never
    /// reused, so one run cannot overwrite another.
    pub fn create(out: &Path, subcommand: &str, label: &str) -> io::Result<Self> {
        let parent = out.join(subcommand);
        fs::create_dir_all(&parent)?;
        let path = parent.join(label);
        fs::create_dir(&path).map_err(|e| {
            if e.kind() == io::ErrorKind::AlreadyExists {
                io::Error::new(e.kind(), format!("run directory {} already exists", path.display()))
            } else {
                e
            }
        })?;
        Ok(RunDir {
            path,
            outputs: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> io::Result<()> {
        fs::write(self.path.join(name), contents)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Records files that a library routine wrote directly into the run.
    pub fn record(&mut self, names: impl IntoIterator<Item = String>) {
        self.outputs.extend(names);
    }
}

/// Timestamp label, e.g. `20261016T101500.123Z`.
pub fn timestamp_label() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string()
}

pub fn sha256_hex(chunks: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for c in chunks {
        h.update((c.len() as u64).to_le_bytes());
        h.update(c);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub slm: &'static str,
    pub spatial_logistic: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub status: String,
    pub exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// SHA-256 of the resolved config and of any input files it refers to.
    pub inputs_sha256: String,
    pub seed: u64,
    pub versions: Versions,
    pub started_utc: String,
    pub wall_time_s: f64,
    pub command_line: Vec<String>,
    pub outputs: Vec<String>,
}

pub fn versions() -> Versions {
    Versions {
        slm: env!("CARGO_PKG_VERSION"),
        spatial_logistic: spatial_logistic::VERSION,
    }
}

/// Writes a CSV with the given header from rows of numbers.
pub fn csv(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
