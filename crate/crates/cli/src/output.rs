use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use lfpdecode_core::dataset::file_checksum;
use lfpdecode_core::ExperimentConfig;
use serde::{Deserialize, Serialize};

/// Error surfaced to the shell: exit code plus a one-line JSON record.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, kind: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            code,
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::new(2, "usage", message)
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::new(1, "io", format!("{}: {e}", path.display()))
    }

    pub fn line(&self) -> String {
        serde_json::json!({ "error": self.kind, "code": self.code, "message": self.message })
            .to_string()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new(2, "json", e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::new(1, "csv", e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

/// Provenance record written next to every set of results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub dataset_path: PathBuf,
    pub dataset_checksum: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Result files (excluding this manifest) with their hashes.
    pub outputs: Vec<OutputFile>,
    /// Extra run data that is not part of the reproducible outputs.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

pub const RUN_MANIFEST: &str = "run_manifest.json";

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::new(2, "json", format!("{}: {e}", path.display())))
}

/// Creates `dir`, refusing a non-empty one unless `force`.
pub fn prepare_out_dir(dir: &Path, force: bool) -> CliResult {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
        if entries.next().is_some() && !force {
            return Err(CliError::new(
                2,
                "directory_not_empty",
                format!(
                    "refusing to write into non-empty directory {} (use --force)",
                    dir.display()
                ),
            ));
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Collects written files for the run manifest.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutputSet {
    pub fn new(dir: &Path) -> Self {
        OutputSet {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> CliResult {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::new(1, "csv", e.to_string()))?;
        self.write(name, bytes)
    }

    pub fn finish(self) -> CliResult<Vec<OutputFile>> {
        self.files
            .iter()
            .map(|f| {
                Ok(OutputFile {
                    file: f.clone(),
                    sha256: file_checksum(&self.dir.join(f))?,
                })
            })
            .collect()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// Number formatting shared by every CSV: shortest round-trip form.
pub fn num(v: f64) -> String {
    v.to_string()
}
