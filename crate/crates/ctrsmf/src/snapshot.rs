//! On-disk formats for ingested datasets and trained models.
//!
//! A dataset snapshot is one JSON document. A model snapshot is a JSON
//! header line followed by the factor matrices as raw little-endian `f64`
//! in column-major order: users, items, social factors, topic proportions
//! and, when present, the topic-word matrix. Both carry a format name and
//! version that are checked on load.

use std::fs;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use ctrsmf_core::corpus::Subsample;
use ctrsmf_core::{Dataset, Fingerprint, Model, ModelState, TrainConfig, TrainTrace};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const DATASET_FORMAT: &str = "ctrsmf-dataset";
const MODEL_FORMAT: &str = "ctrsmf-model";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: expected a {expected} file (version {VERSION}), found {found}", path.display())]
    Format { path: PathBuf, expected: &'static str, found: String },
    #[error("{}: {message}", path.display())]
    Payload { path: PathBuf, message: String },
    #[error("the model was trained on dataset {model}, not on {dataset}; check the dataset file and subsampling flags")]
    Fingerprint { model: Fingerprint, dataset: Fingerprint },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io { path: path.to_path_buf(), source }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Json { path: path.to_path_buf(), source }
}

/// Writes next to `path` and renames, so readers never see half a file.
fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), SnapshotError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    version: u32,
    fingerprint: Fingerprint,
    dataset: Dataset,
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<(), SnapshotError> {
    let file = DatasetFile {
        format: DATASET_FORMAT.into(),
        version: VERSION,
        fingerprint: dataset.fingerprint(),
        dataset: dataset.clone(),
    };
    let bytes = serde_json::to_vec(&file).map_err(json_err(path))?;
    write_atomically(path, &bytes)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, SnapshotError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let head: serde_json::Value = serde_json::from_slice(&bytes).map_err(json_err(path))?;
    check_format(path, DATASET_FORMAT, &head)?;
    let file: DatasetFile = serde_json::from_value(head).map_err(json_err(path))?;
    Ok(file.dataset)
}

fn check_format(path: &Path, expected: &'static str, head: &serde_json::Value) -> Result<(), SnapshotError> {
    let format = head.get("format").and_then(|v| v.as_str());
    let version = head.get("version").and_then(|v| v.as_u64());
    if format == Some(expected) && version == Some(VERSION as u64) {
        Ok(())
    } else {
        Err(SnapshotError::Format {
            path: path.to_path_buf(),
            expected,
            found: format!("{} version {}", format.unwrap_or("unknown format"), version.unwrap_or(0)),
        })
    }
}

/// How the ratings were split for training; evaluation rebuilds the same
/// split from it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub test_fraction: f64,
}

/// A model with its training history and the data selection it used.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSnapshot {
    pub model: Model,
    pub trace: TrainTrace,
    pub split: SplitSpec,
    pub subsample: Option<Subsample>,
}

impl ModelSnapshot {
    /// Refuses a dataset other than the one the model was trained on.
    pub fn check_dataset(&self, dataset: &Dataset) -> Result<(), SnapshotError> {
        let found = dataset.fingerprint();
        if found == self.model.fingerprint {
            Ok(())
        } else {
            Err(SnapshotError::Fingerprint { model: self.model.fingerprint, dataset: found })
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    version: u32,
    config: TrainConfig,
    fingerprint: Fingerprint,
    split: SplitSpec,
    subsample: Option<Subsample>,
    k: usize,
    users: usize,
    items: usize,
    vocabulary: Option<usize>,
    trace: TrainTrace,
}

pub fn save_model(path: &Path, snap: &ModelSnapshot) -> Result<(), SnapshotError> {
    let s = &snap.model.state;
    let header = ModelHeader {
        format: MODEL_FORMAT.into(),
        version: VERSION,
        config: snap.model.config,
        fingerprint: snap.model.fingerprint,
        split: snap.split,
        subsample: snap.subsample,
        k: s.k(),
        users: s.n_users(),
        items: s.n_items(),
        vocabulary: s.beta.as_ref().map(|b| b.ncols()),
        trace: snap.trace.clone(),
    };
    let mut bytes = serde_json::to_vec(&header).map_err(json_err(path))?;
    bytes.push(b'\n');
    for m in [&s.users, &s.items, &s.social, &s.theta].into_iter().chain(s.beta.as_ref()) {
        for x in m.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    write_atomically(path, &bytes)
}

pub fn load_model(path: &Path) -> Result<ModelSnapshot, SnapshotError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line).map_err(io_err(path))?;
    let head: serde_json::Value = serde_json::from_slice(&line).map_err(json_err(path))?;
    check_format(path, MODEL_FORMAT, &head)?;
    let h: ModelHeader = serde_json::from_value(head).map_err(json_err(path))?;

    let mut payload = Vec::new();
    reader.read_to_end(&mut payload).map_err(io_err(path))?;
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of eight bytes")));
    let mut matrix = |rows: usize, cols: usize| DMatrix::from_iterator(rows, cols, values.by_ref().take(rows * cols));

    let expected = 8 * h.k * (2 * h.users + 2 * h.items) + 8 * h.vocabulary.map_or(0, |w| w * h.k);
    if payload.len() != expected {
        return Err(SnapshotError::Payload {
            path: path.to_path_buf(),
            message: format!("expected {expected} bytes of factors, found {}", payload.len()),
        });
    }
    let state = ModelState {
        users: matrix(h.k, h.users),
        items: matrix(h.k, h.items),
        social: matrix(h.k, h.users),
        theta: matrix(h.k, h.items),
        beta: h.vocabulary.map(|w| matrix(h.k, w)),
    };
    Ok(ModelSnapshot {
        model: Model { config: h.config, fingerprint: h.fingerprint, state },
        trace: h.trace,
        split: h.split,
        subsample: h.subsample,
    })
}
