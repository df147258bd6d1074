//! Datasets are stored as three tensors in one directory: `embeddings.nvtf`
//! `[n, tokens, dim]`, `responses.nvtf` `[n, voxels]` and `sessions.nvtf` `[n]` (i64).

use std::path::Path;

use super::tensor::{read_embeddings, read_tensor, write_embeddings, write_tensor, Tensor};
use super::{create_dir, PersistError};
use crate::encoder::ResponseDataset;
use crate::matrix::Matrix;

const EMBEDDINGS: &str = "embeddings.nvtf";
const RESPONSES: &str = "responses.nvtf";
const SESSIONS: &str = "sessions.nvtf";

pub fn save_dataset(dir: &Path, ds: &ResponseDataset) -> Result<(), PersistError> {
    create_dir(dir)?;
    write_embeddings(&dir.join(EMBEDDINGS), ds.embeddings())?;
    let r = ds.responses();
    write_tensor(
        &dir.join(RESPONSES),
        &Tensor::f64(&[r.rows(), r.cols()], r.as_slice().to_vec())?,
    )?;
    let sessions = ds.session_ids().iter().map(|&s| i64::from(s)).collect::<Vec<_>>();
    write_tensor(&dir.join(SESSIONS), &Tensor::i64(&[sessions.len()], sessions)?)
}

/// Loads a dataset saved by [`save_dataset`]. Responses are taken as already normalized.
pub fn load_dataset(dir: &Path) -> Result<ResponseDataset, PersistError> {
    let embeddings = read_embeddings(&dir.join(EMBEDDINGS))?;
    let rpath = dir.join(RESPONSES);
    let rt = read_tensor(&rpath)?;
    let &[rows, cols] = rt.dims_usize().as_slice() else {
        return Err(PersistError::InvalidTensor(format!("responses must be 2-D, got dims {:?}", rt.dims())).at(&rpath));
    };
    let responses = Matrix::new(rows, cols, rt.into_f64()?)
        .map_err(|e| PersistError::InvalidTensor(e.to_string()).at(&rpath))?;
    let spath = dir.join(SESSIONS);
    let sessions = read_tensor(&spath)?
        .into_i64()
        .map_err(|e| e.at(&spath))?
        .into_iter()
        .map(u32::try_from)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| PersistError::InvalidTensor("session ids must fit in u32".into()).at(&spath))?;
    Ok(ResponseDataset::new(embeddings, responses, sessions)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Embedding, EmbeddingShape};

    #[test]
    fn round_trip() {
        let shape = EmbeddingShape::new(2, 2).unwrap();
        let es: Vec<_> = (0..4).map(|i| Embedding::random(shape, i)).collect();
        let r = Matrix::new(4, 3, (0..12).map(|x| x as f64 * 0.5).collect()).unwrap();
        let ds = ResponseDataset::new(es, r, vec![0, 0, 1, 1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &ds).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.embeddings(), ds.embeddings());
        assert_eq!(back.responses(), ds.responses());
        assert_eq!(back.session_ids(), ds.session_ids());
    }
}
