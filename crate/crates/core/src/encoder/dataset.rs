use crate::embedding::{Embedding, EmbeddingShape};
use crate::matrix::Matrix;

use super::stats::normalize_per_session;
use super::EncoderError;

/// Paired stimulus embeddings and (z-scored) voxel responses.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseDataset {
    shape: EmbeddingShape,
    embeddings: Vec<Embedding>,
    responses: Matrix,
    session_ids: Vec<u32>,
}

impl ResponseDataset {
    /// Wraps already-normalized responses. Row `i` of `responses` belongs to `embeddings[i]`.
    pub fn new(
        embeddings: Vec<Embedding>,
        responses: Matrix,
        session_ids: Vec<u32>,
    ) -> Result<Self, EncoderError> {
        let Some(first) = embeddings.first() else {
            return Err(EncoderError::EmptyDataset);
        };
        let shape = first.shape();
        if let Some(i) = embeddings.iter().position(|e| e.shape() != shape) {
            return Err(EncoderError::ShapeMismatch(format!(
                "embedding {i} has shape {}, expected {shape}",
                embeddings[i].shape()
            )));
        }
        if responses.rows() != embeddings.len() || session_ids.len() != embeddings.len() {
            return Err(EncoderError::ShapeMismatch(format!(
                "{} embeddings, {} response rows, {} session ids",
                embeddings.len(),
                responses.rows(),
                session_ids.len()
            )));
        }
        if responses.cols() == 0 {
            return Err(EncoderError::ShapeMismatch("responses have zero voxels".into()));
        }
        Ok(Self {
            shape,
            embeddings,
            responses,
            session_ids,
        })
    }

    /// Normalizes `raw` per session, then wraps it. Zero-variance blocks are
    /// returned alongside the dataset.
    pub fn from_raw(
        embeddings: Vec<Embedding>,
        raw: &Matrix,
        session_ids: Vec<u32>,
    ) -> Result<(Self, Vec<(u32, usize)>), EncoderError> {
        let norm = normalize_per_session(raw, &session_ids)?;
        let ds = Self::new(embeddings, norm.responses, session_ids)?;
        Ok((ds, norm.zero_variance))
    }

    pub fn shape(&self) -> EmbeddingShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn n_voxels(&self) -> usize {
        self.responses.cols()
    }

    pub fn embeddings(&self) -> &[Embedding] {
        &self.embeddings
    }

    pub fn responses(&self) -> &Matrix {
        &self.responses
    }

    pub fn session_ids(&self) -> &[u32] {
        &self.session_ids
    }

    /// `(flat embedding, response row)` for sample `i`.
    pub fn sample(&self, i: usize) -> (&[f64], &[f64]) {
        (self.embeddings[i].as_flat(), self.responses.row(i))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        (0..self.len()).map(move |i| self.sample(i))
    }

    /// First `n` samples and the rest. Both halves must be non-empty.
    pub fn split_at(&self, n: usize) -> Result<(Self, Self), EncoderError> {
        if n == 0 || n >= self.len() {
            return Err(EncoderError::EmptyDataset);
        }
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        Ok((self.select(&head), self.select(&tail)))
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            shape: self.shape,
            embeddings: idx.iter().map(|&i| self.embeddings[i].clone()).collect(),
            responses: self.responses.select_rows(idx),
            session_ids: idx.iter().map(|&i| self.session_ids[i]).collect(),
        }
    }
}
