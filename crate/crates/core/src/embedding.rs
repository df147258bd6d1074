//! Points in the token-grid semantic embedding space.
//!
//! An [`Embedding`] is a `tokens × dim` grid of `f64` values stored row-major,
//! so `flat[i * dim + j] == grid[i][j]`. Embeddings are the optimization
//! variable of the whole crate: the encoder consumes their flat view, the
//! optimizer updates them in place on owned copies, and persistence writes
//! them as `[tokens, dim]` tensors.

use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding shape must have tokens >= 1 and dim >= 1, got {tokens}x{dim}")]
    InvalidShape { tokens: usize, dim: usize },
    #[error("embedding of shape {shape} needs {expected} values, got {actual}")]
    LengthMismatch {
        shape: EmbeddingShape,
        expected: usize,
        actual: usize,
    },
    #[error("embedding value at index {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("token grid rows must all have length {dim}; row {row} has {actual}")]
    RaggedGrid { dim: usize, row: usize, actual: usize },
}

/// Token count and per-token width of an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ShapeRepr", into = "ShapeRepr")]
pub struct EmbeddingShape {
    tokens: usize,
    dim: usize,
}

impl EmbeddingShape {
    /// Shape of the Q-Former token embedding used by the reference pipeline.
    pub const QFORMER: EmbeddingShape = EmbeddingShape { tokens: 16, dim: 768 };

    pub fn new(tokens: usize, dim: usize) -> Result<Self, EmbeddingError> {
        if tokens == 0 || dim == 0 {
            return Err(EmbeddingError::InvalidShape { tokens, dim });
        }
        Ok(Self { tokens, dim })
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length of the flat view, `tokens * dim`.
    pub fn len(&self) -> usize {
        self.tokens * self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Serialize, Deserialize)]
struct ShapeRepr {
    tokens: usize,
    dim: usize,
}

impl TryFrom<ShapeRepr> for EmbeddingShape {
    type Error = EmbeddingError;
    fn try_from(r: ShapeRepr) -> Result<Self, Self::Error> {
        EmbeddingShape::new(r.tokens, r.dim)
    }
}

impl From<EmbeddingShape> for ShapeRepr {
    fn from(s: EmbeddingShape) -> Self {
        ShapeRepr {
            tokens: s.tokens,
            dim: s.dim,
        }
    }
}

impl fmt::Display for EmbeddingShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.tokens, self.dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    shape: EmbeddingShape,
    values: Vec<f64>,
}

impl Embedding {
    /// Builds an embedding from its flat row-major view.
    pub fn from_flat(shape: EmbeddingShape, values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.len() != shape.len() {
            return Err(EmbeddingError::LengthMismatch {
                shape,
                expected: shape.len(),
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { index, value });
        }
        Ok(Self { shape, values })
    }

    /// Builds an embedding from a token grid; every row must have the same width.
    pub fn from_grid<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, EmbeddingError> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let shape = EmbeddingShape::new(rows.len(), dim)?;
        let mut values = Vec::with_capacity(shape.len());
        for (row, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(EmbeddingError::RaggedGrid {
                    dim,
                    row,
                    actual: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::from_flat(shape, values)
    }

    pub fn zeros(shape: EmbeddingShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.len()],
        }
    }

    /// Draws every value i.i.d. from the standard normal distribution.
    ///
    /// The generator is ChaCha20 seeded with `seed` through
    /// `SeedableRng::seed_from_u64` (stream 0), so `(shape, seed)` fully
    /// determines the output on every platform.
    pub fn random(shape: EmbeddingShape, seed: u64) -> Self {
        let mut rng = crate::rng::seeded(seed, crate::rng::Stream::Embedding);
        Self::random_with(shape, &mut rng)
    }

    /// `n` standard-normal embeddings drawn in sequence from one generator
    /// (a stream separate from [`Embedding::random`]).
    pub fn random_pool(shape: EmbeddingShape, n: usize, seed: u64) -> Vec<Self> {
        let mut rng = crate::rng::seeded(seed, crate::rng::Stream::Pool);
        (0..n).map(|_| Self::random_with(shape, &mut rng)).collect()
    }

    /// Standard-normal draw from a caller-owned generator.
    pub fn random_with<R: rand::Rng + ?Sized>(shape: EmbeddingShape, rng: &mut R) -> Self {
        let values = (0..shape.len())
            .map(|_| StandardNormal.sample(&mut *rng))
            .collect();
        Self { shape, values }
    }

    pub fn shape(&self) -> EmbeddingShape {
        self.shape
    }

    /// Flat row-major view.
    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }

    /// Row `token` of the grid view.
    pub fn token(&self, token: usize) -> &[f64] {
        let d = self.shape.dim;
        &self.values[token * d..(token + 1) * d]
    }

    /// Iterator over grid rows.
    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.shape.dim)
    }

    /// Owned grid view.
    pub fn to_grid(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn get(&self, token: usize, j: usize) -> f64 {
        self.values[token * self.shape.dim + j]
    }

    /// Mutable flat view. Callers must keep the values finite.
    pub(crate) fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.values.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(&self.values).sqrt()
    }

    /// Cosine similarity between the flat view and `direction`; 0 when either is zero.
    pub fn cosine(&self, direction: &[f64]) -> f64 {
        let dn = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        let qn = self.norm();
        if dn == 0.0 || qn == 0.0 {
            return 0.0;
        }
        self.dot(direction) / (dn * qn)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}
