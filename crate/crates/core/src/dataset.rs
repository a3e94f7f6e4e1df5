//! On-disk dataset layout.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/trials/<trial_id>.f64   little-endian f64, row-major channels x T
//! <dir>/trials/<trial_id>.csv   one row per channel (text mode)
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::{EdcEntry, EdcTable};
use crate::rng;
use crate::synth::{DatasetParams, EdcInfo, SyntheticDataset, TrialRecord};

pub const FORMAT_ID: &str = "lfpdecode-dataset/1";
pub const MANIFEST_FILE: &str = "manifest.json";
const TRIAL_DIR: &str = "trials";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleEncoding {
    F64Le,
    Csv,
}

impl SampleEncoding {
    fn extension(self) -> &'static str {
        match self {
            SampleEncoding::F64Le => "f64",
            SampleEncoding::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub trial_id: String,
    pub edc_id: String,
    pub session_id: String,
    pub label: usize,
    /// Relative to the dataset directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub num_classes: usize,
    pub num_channels: usize,
    pub trial_len: usize,
    pub sample_rate_hz: f64,
    pub encoding: SampleEncoding,
    pub rng_algorithm: String,
    pub seed: Option<u64>,
    /// Generator parameters, verbatim, for synthetic datasets.
    pub generator: Option<DatasetParams>,
    pub edcs: Vec<EdcInfo>,
    pub trials: Vec<TrialEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub trials: Vec<TrialRecord>,
}

impl Dataset {
    pub fn from_synthetic(
        data: SyntheticDataset,
        params: &DatasetParams,
        seed: u64,
        encoding: SampleEncoding,
    ) -> Self {
        let trials = data
            .trials
            .iter()
            .zip(&data.trial_edc)
            .map(|(t, &e)| TrialEntry {
                trial_id: t.trial_id().to_string(),
                edc_id: data.edcs[e].edc_id.clone(),
                session_id: t.session_id().to_string(),
                label: t.label(),
                path: format!("{TRIAL_DIR}/{}.{}", t.trial_id(), encoding.extension()),
            })
            .collect();
        Dataset {
            manifest: DatasetManifest {
                format: FORMAT_ID.to_string(),
                num_classes: params.bank.num_classes,
                num_channels: params.bank.num_channels,
                trial_len: params.trial_len,
                sample_rate_hz: 1000.0,
                encoding,
                rng_algorithm: rng::ALGORITHM_ID.to_string(),
                seed: Some(seed),
                generator: Some(params.clone()),
                edcs: data.edcs,
                trials,
            },
            trials: data.trials,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.num_classes
    }

    pub fn edc_table(&self) -> Result<EdcTable> {
        let entries = self
            .manifest
            .edcs
            .iter()
            .map(|e| EdcEntry {
                edc_id: e.edc_id.clone(),
                depth: e.depth.clone(),
                trial_ids: self
                    .manifest
                    .trials
                    .iter()
                    .filter(|t| t.edc_id == e.edc_id)
                    .map(|t| t.trial_id.clone())
                    .collect(),
            })
            .collect();
        let table = EdcTable::new(entries)?;
        if table.total_trials() != self.trials.len() {
            return Err(Error::Format("some trials reference unknown EDCs".into()));
        }
        Ok(table)
    }

    pub fn trial(&self, trial_id: &str) -> Option<&TrialRecord> {
        self.trials.iter().find(|t| t.trial_id() == trial_id)
    }

    /// Looks up trials by id, preserving the order of `ids`.
    pub fn select(&self, ids: &[String]) -> Result<Vec<&TrialRecord>> {
        let index: std::collections::HashMap<&str, &TrialRecord> =
            self.trials.iter().map(|t| (t.trial_id(), t)).collect();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Lookup(format!("unknown trial {id:?}")))
            })
            .collect()
    }

    /// Writes the manifest and one sample file per trial.
    pub fn write(&self, dir: &Path, force: bool) -> Result<()> {
        if dir.exists() {
            let non_empty = fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .next()
                .is_some();
            if non_empty && !force {
                return Err(Error::DirectoryNotEmpty(dir.to_path_buf()));
            }
            let trial_dir = dir.join(TRIAL_DIR);
            if trial_dir.exists() {
                fs::remove_dir_all(&trial_dir).map_err(|e| Error::io(&trial_dir, e))?;
            }
        }
        let trial_dir = dir.join(TRIAL_DIR);
        fs::create_dir_all(&trial_dir).map_err(|e| Error::io(&trial_dir, e))?;
        for (trial, entry) in self.trials.iter().zip(&self.manifest.trials) {
            let path = dir.join(&entry.path);
            let bytes = encode_samples(trial, self.manifest.encoding);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Dataset> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.format != FORMAT_ID {
            return Err(Error::Format(format!(
                "unsupported dataset format {:?}",
                manifest.format
            )));
        }
        let depth_of = |edc: &str| {
            manifest
                .edcs
                .iter()
                .find(|e| e.edc_id == edc)
                .map(|e| e.depth.clone())
                .ok_or_else(|| Error::Format(format!("unknown EDC {edc:?}")))
        };
        let mut trials = Vec::with_capacity(manifest.trials.len());
        for entry in &manifest.trials {
            let path = dir.join(&entry.path);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let samples = decode_samples(&bytes, manifest.encoding, &path)?;
            if samples.len() != manifest.num_channels * manifest.trial_len {
                return Err(Error::Format(format!(
                    "{}: {} samples, expected {} x {}",
                    path.display(),
                    samples.len(),
                    manifest.num_channels,
                    manifest.trial_len
                )));
            }
            if entry.label == 0 || entry.label > manifest.num_classes {
                return Err(Error::Format(format!(
                    "trial {}: label {} out of range",
                    entry.trial_id, entry.label
                )));
            }
            trials.push(TrialRecord::new(
                entry.trial_id.clone(),
                entry.session_id.clone(),
                entry.label,
                depth_of(&entry.edc_id)?,
                manifest.num_channels,
                samples,
            )?);
        }
        Ok(Dataset { manifest, trials })
    }
}

fn encode_samples(trial: &TrialRecord, encoding: SampleEncoding) -> Vec<u8> {
    match encoding {
        SampleEncoding::F64Le => trial
            .samples()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect(),
        SampleEncoding::Csv => {
            let mut out = Vec::new();
            for row in trial.channels() {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", line.join(",")).expect("writing to a Vec cannot fail");
            }
            out
        }
    }
}

fn decode_samples(bytes: &[u8], encoding: SampleEncoding, path: &Path) -> Result<Vec<f64>> {
    match encoding {
        SampleEncoding::F64Le => {
            if !bytes.len().is_multiple_of(8) {
                return Err(Error::Format(format!(
                    "{}: length not a multiple of 8",
                    path.display()
                )));
            }
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect())
        }
        SampleEncoding::Csv => {
            let text = std::str::from_utf8(bytes)
                .map_err(|_| Error::Format(format!("{}: not UTF-8", path.display())))?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .flat_map(|l| l.split(','))
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Format(format!("{}: bad number {v:?}", path.display())))
                })
                .collect()
        }
    }
}

/// SHA-256 over the manifest and every trial file it lists, in manifest order.
pub fn checksum(dir: &Path) -> Result<String> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest_bytes = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_slice(&manifest_bytes)?;
    let mut hasher = Sha256::new();
    hash_chunk(&mut hasher, MANIFEST_FILE.as_bytes(), &manifest_bytes);
    for entry in &manifest.trials {
        let path: PathBuf = dir.join(&entry.path);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        hash_chunk(&mut hasher, entry.path.as_bytes(), &bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn hash_chunk(hasher: &mut Sha256, name: &[u8], bytes: &[u8]) {
    hasher.update((name.len() as u64).to_le_bytes());
    hasher.update(name);
    hasher.update((bytes.len() as u64).to_le_bytes());
    hasher.update(bytes);
}

/// SHA-256 of a single file.
pub fn file_checksum(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Fails unless `dir` hashes to `expected`.
pub fn verify_checksum(dir: &Path, expected: &str) -> Result<()> {
    let found = checksum(dir)?;
    if found != expected {
        return Err(Error::Checksum {
            path: dir.to_path_buf(),
            expected: expected.to_string(),
            found,
        });
    }
    Ok(())
}
