//! Encoder checkpoints are directories:
//!
//! ```text
//! checkpoint.toml          format, architecture, embedding shape, training info
//! layer{l}.weight.nvtf     [out, in] f64
//! layer{l}.bias.nvtf       [out] f64
//! train_log.csv            optional per-epoch log
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::{read_tensor, write_tensor, Tensor};
use super::{create_dir, from_toml, read_text, to_toml, write_atomic, PersistError};
use crate::embedding::EmbeddingShape;
use crate::encoder::{Dense, EncoderArchitecture, EncoderModel, TrainConfig, TrainLog};

pub const CHECKPOINT_META: &str = "checkpoint.toml";
const FORMAT: &str = "nvolve-encoder";
const FORMAT_VERSION: u32 = 1;
const LOG_FILE: &str = "train_log.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub shape: EmbeddingShape,
    pub arch: EncoderArchitecture,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_mean_r: Option<f64>,
}

impl CheckpointMeta {
    pub fn new(shape: EmbeddingShape, arch: EncoderArchitecture) -> Self {
        Self {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            shape,
            arch,
            train: None,
            best_epoch: None,
            val_mean_r: None,
        }
    }

    /// Fills in the training fields from a finished run.
    pub fn with_training(mut self, cfg: &TrainConfig, log: &TrainLog) -> Self {
        self.train = Some(*cfg);
        if let Some(best) = log.best() {
            self.best_epoch = Some(best.epoch);
            self.val_mean_r = Some(best.val_mean_r);
        }
        self
    }
}

fn tensor_names(layer: usize) -> (String, String) {
    (format!("layer{layer}.weight.nvtf"), format!("layer{layer}.bias.nvtf"))
}

pub fn save_checkpoint(
    dir: &Path,
    model: &EncoderModel,
    meta: &CheckpointMeta,
    log: Option<&TrainLog>,
) -> Result<(), PersistError> {
    if &meta.arch != model.arch() {
        return Err(PersistError::Metadata(
            "checkpoint metadata architecture differs from the model".into(),
        ));
    }
    if meta.shape.len() != meta.arch.input_len {
        return Err(PersistError::Metadata(format!(
            "embedding shape {} does not flatten to input length {}",
            meta.shape, meta.arch.input_len
        )));
    }
    create_dir(dir)?;
    for (l, layer) in model.layers().iter().enumerate() {
        let (w, b) = tensor_names(l);
        write_tensor(
            &dir.join(w),
            &Tensor::f64(&[layer.out_dim, layer.in_dim], layer.weight.clone())?,
        )?;
        write_tensor(&dir.join(b), &Tensor::f64(&[layer.out_dim], layer.bias.clone())?)?;
    }
    if let Some(log) = log {
        write_atomic(&dir.join(LOG_FILE), log.to_csv_string().as_bytes())?;
    }
    // Metadata goes last so a partial write is never mistaken for a checkpoint.
    write_atomic(&dir.join(CHECKPOINT_META), to_toml(meta)?.as_bytes())
}

pub fn load_checkpoint(dir: &Path) -> Result<(EncoderModel, CheckpointMeta), PersistError> {
    let meta_path = dir.join(CHECKPOINT_META);
    let meta: CheckpointMeta = from_toml(&meta_path, &read_text(&meta_path)?)?;
    if meta.format != FORMAT || meta.version != FORMAT_VERSION {
        return Err(PersistError::Metadata(format!(
            "unsupported checkpoint format {} v{}",
            meta.format, meta.version
        ))
        .at(&meta_path));
    }
    meta.arch.validate()?;
    if meta.shape.len() != meta.arch.input_len {
        return Err(PersistError::Metadata(format!(
            "embedding shape {} does not flatten to input length {}",
            meta.shape, meta.arch.input_len
        ))
        .at(&meta_path));
    }
    let mut layers = Vec::new();
    for (l, (in_dim, out_dim)) in meta.arch.layer_dims().into_iter().enumerate() {
        let (wn, bn) = tensor_names(l);
        let weight = load_named(dir, &wn, &[out_dim as u64, in_dim as u64])?;
        let bias = load_named(dir, &bn, &[out_dim as u64])?;
        layers.push(Dense {
            in_dim,
            out_dim,
            weight,
            bias,
        });
    }
    let model = EncoderModel::from_layers(meta.arch.clone(), layers)?;
    Ok((model, meta))
}

fn load_named(dir: &Path, name: &str, expected: &[u64]) -> Result<Vec<f64>, PersistError> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(PersistError::MissingTensor(name.to_string()));
    }
    let t = read_tensor(&path)?;
    if t.dims() != expected {
        return Err(PersistError::ArchMismatch {
            name: name.to_string(),
            expected: expected.to_vec(),
            found: t.dims().to_vec(),
        });
    }
    t.into_f64().map_err(|e| e.at(&path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> (EncoderModel, CheckpointMeta) {
        let shape = EmbeddingShape::new(2, 3).unwrap();
        let arch = EncoderArchitecture::new(6, vec![5, 4], 3).unwrap();
        let m = EncoderModel::init(arch.clone(), 9).unwrap();
        (m, CheckpointMeta::new(shape, arch))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (m, meta) = model();
        save_checkpoint(dir.path(), &m, &meta, None).unwrap();
        let (back, meta2) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(meta2, meta);
        assert_eq!(back, m);
    }

    #[test]
    fn missing_tensor_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let (m, meta) = model();
        save_checkpoint(dir.path(), &m, &meta, None).unwrap();
        std::fs::remove_file(dir.path().join("layer1.bias.nvtf")).unwrap();
        assert_eq!(
            load_checkpoint(dir.path()).unwrap_err(),
            PersistError::MissingTensor("layer1.bias.nvtf".into())
        );
    }

    #[test]
    fn dims_checked_against_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let (m, meta) = model();
        save_checkpoint(dir.path(), &m, &meta, None).unwrap();
        write_tensor(
            &dir.path().join("layer0.weight.nvtf"),
            &Tensor::f64(&[6, 5], vec![0.0; 30]).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()).unwrap_err(),
            PersistError::ArchMismatch { ref name, .. } if name == "layer0.weight.nvtf"
        ));
    }

    #[test]
    fn metadata_is_readable_toml() {
        let dir = tempfile::tempdir().unwrap();
        let (m, meta) = model();
        save_checkpoint(dir.path(), &m, &meta, None).unwrap();
        let text = std::fs::read_to_string(dir.path().join(CHECKPOINT_META)).unwrap();
        assert!(text.contains("format = \"nvolve-encoder\""));
        assert!(text.contains("hidden = [5, 4]"));
    }
}
