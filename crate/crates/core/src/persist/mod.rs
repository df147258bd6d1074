//! On-disk formats: NVTF tensors, encoder checkpoints, datasets, synthetic
//! subjects, atlases, and trajectory directories.
//!
//! Binary data is always NVTF (see [`tensor`]). Metadata and manifests are
//! TOML: line-oriented `key = value` pairs under `[section]` headers. Every
//! file is written to a temporary sibling and renamed into place.

mod checkpoint;
mod dataset;
mod subject;
pub mod tensor;
mod trajectory;

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::embedding::EmbeddingError;
use crate::encoder::EncoderError;
use crate::objective::{AtlasError, RoiAtlas};
use crate::synthetic::SyntheticError;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_META};
pub use dataset::{load_dataset, save_dataset};
pub use subject::{load_subject, save_subject};
pub use tensor::{
    read_embedding, read_embeddings, read_tensor, write_embedding, write_embeddings, write_tensor, DType,
    Tensor, TensorData,
};
pub use trajectory::{export_trajectory, import_trajectory, step_file, TRAJECTORY_MANIFEST};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PersistError {
    #[error("{path}: {message}")]
    Io {
        path: PathBuf,
        kind: std::io::ErrorKind,
        message: String,
    },
    #[error("bad magic {:?}, expected \"NVTF\"", String::from_utf8_lossy(.0))]
    BadMagic([u8; 4]),
    #[error("unsupported NVTF version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("truncated file: need {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("unexpected trailing data: payload ends at byte {expected}, file has {actual}")]
    TrailingBytes { expected: usize, actual: usize },
    #[error("expected {expected} tensor, found {found:?}")]
    DtypeMismatch { expected: &'static str, found: DType },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("malformed metadata: {0}")]
    Metadata(String),
    #[error("checkpoint is missing tensor {0:?}")]
    MissingTensor(String),
    #[error("checkpoint tensor {name:?} has dims {found:?}, metadata says {expected:?}")]
    ArchMismatch {
        name: String,
        expected: Vec<u64>,
        found: Vec<u64>,
    },
    #[error("manifest references missing file {0}")]
    DanglingReference(PathBuf),
    #[error("manifest steps must start at 0 and strictly increase ({found} after {previous})")]
    NonMonotoneSteps { previous: usize, found: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        source: Box<PersistError>,
    },
}

impl PersistError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            kind: e.kind(),
            message: e.to_string(),
        }
    }

    /// Attaches the offending file path.
    pub(crate) fn at(self, path: &Path) -> Self {
        match self {
            e @ (Self::Io { .. } | Self::InFile { .. }) => e,
            e => Self::InFile {
                path: path.to_path_buf(),
                source: Box::new(e),
            },
        }
    }

    /// The error without file context.
    pub fn root(&self) -> &PersistError {
        match self {
            Self::InFile { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PersistError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| PersistError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| PersistError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| PersistError::io(path, e))?;
    tmp.persist(path).map_err(|e| PersistError::io(path, e.error))?;
    Ok(())
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), PersistError> {
    std::fs::create_dir_all(dir).map_err(|e| PersistError::io(dir, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String, PersistError> {
    std::fs::read_to_string(path).map_err(|e| PersistError::io(path, e))
}

pub(crate) fn to_toml<T: serde::Serialize>(value: &T) -> Result<String, PersistError> {
    toml::to_string(value).map_err(|e| PersistError::Metadata(e.to_string()))
}

pub(crate) fn from_toml<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, PersistError> {
    toml::from_str(text).map_err(|e| PersistError::Metadata(e.to_string()).at(path))
}

pub fn write_atlas(path: &Path, atlas: &RoiAtlas) -> Result<(), PersistError> {
    write_atomic(path, atlas.to_text().as_bytes())
}

pub fn read_atlas(path: &Path) -> Result<RoiAtlas, PersistError> {
    RoiAtlas::from_text(&read_text(path)?).map_err(|e| PersistError::from(e).at(path))
}
