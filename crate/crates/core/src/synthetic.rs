//! Synthetic subjects with planted region structure.
//!
//! Each region `R` gets a unit "planted direction" `u_R` in the flattened
//! embedding space. Voxel `v ∈ R` is tuned to `w_v = u_R + δ_v` with
//! `‖δ_v‖ ≤ 0.1`, and responds with `r_v = g(w_v · q + b_v) + ε`. Planted
//! directions are orthonormal by default; a non-zero `direction_overlap ρ`
//! mixes in a shared component so that `u_R · u_S = ρ` for distinct regions.
//! Voxels are laid out region by region in declaration order, followed by
//! any background voxels with random unit tuning.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{Embedding, EmbeddingShape};
use crate::encoder::{EncoderError, ResponseDataset};
use crate::matrix::Matrix;
use crate::objective::{AtlasError, RoiAtlas};
use crate::rng::{seeded, Stream};

/// Embedding shape used for desk-scale experiments.
pub const DESK_SHAPE: (usize, usize) = (4, 16);

/// Upper bound on `‖δ_v‖ / ‖u_R‖`.
pub const PERTURBATION_BOUND: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyntheticError {
    #[error("{needed} orthogonal directions needed but the embedding has only {available} dimensions")]
    TooManyRegions { needed: usize, available: usize },
    #[error("region {0:?} must have at least one voxel")]
    EmptyRegion(String),
    #[error("subject needs at least one region")]
    NoRegions,
    #[error("invalid subject parameter: {0}")]
    InvalidParameter(String),
    #[error("embedding shape {actual} does not match subject shape {expected}")]
    ShapeMismatch {
        expected: EmbeddingShape,
        actual: EmbeddingShape,
    },
    #[error("{samples} samples cannot fill {sessions} sessions of at least 2")]
    DegenerateSessions { samples: usize, sessions: usize },
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Linear,
    Relu,
}

impl Nonlinearity {
    fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Linear => x,
            Nonlinearity::Relu => x.max(0.0),
        }
    }
}

impl std::str::FromStr for Nonlinearity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Self::Linear),
            "relu" => Ok(Self::Relu),
            _ => Err(format!("unknown nonlinearity {s:?} (expected linear or relu)")),
        }
    }
}

/// Everything needed to build a subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub shape: EmbeddingShape,
    pub regions: Vec<(String, usize)>,
    pub background_voxels: usize,
    pub noise_sigma: f64,
    pub nonlinearity: Nonlinearity,
    /// Inner product between planted directions of distinct regions, in `[0, 1)`.
    pub direction_overlap: f64,
    /// Standard deviation of the per-voxel biases (0 gives zero biases).
    pub bias_sigma: f64,
    pub seed: u64,
}

impl SubjectSpec {
    /// Linear, noise-free, orthogonal-direction subject.
    pub fn new(shape: EmbeddingShape, regions: &[(&str, usize)], seed: u64) -> Self {
        Self {
            shape,
            regions: regions.iter().map(|(n, s)| (n.to_string(), *s)).collect(),
            background_voxels: 0,
            noise_sigma: 0.0,
            nonlinearity: Nonlinearity::Linear,
            direction_overlap: 0.0,
            bias_sigma: 0.0,
            seed,
        }
    }

    pub fn n_voxels(&self) -> usize {
        self.regions.iter().map(|(_, s)| s).sum::<usize>() + self.background_voxels
    }
}

/// Ground-truth response model with planted region structure.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubject {
    spec: SubjectSpec,
    atlas: RoiAtlas,
    /// One unit direction per region, in region order.
    directions: Vec<Vec<f64>>,
    /// `n_voxels × (tokens·dim)` tuning matrix.
    tuning: Matrix,
    biases: Vec<f64>,
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
    n
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal vectors by modified Gram–Schmidt on Gaussian draws, with a
/// second re-orthogonalisation pass.
fn orthonormal_set<R: Rng>(count: usize, len: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let p = dot(&v, b);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= p * y;
                }
            }
        }
        // A draw (numerically) inside the span is discarded and redrawn.
        if normalize(&mut v) > 1e-6 {
            basis.push(v);
        }
    }
    basis
}

impl SyntheticSubject {
    pub fn generate(spec: SubjectSpec) -> Result<Self, SyntheticError> {
        if spec.regions.is_empty() {
            return Err(SyntheticError::NoRegions);
        }
        if let Some((n, _)) = spec.regions.iter().find(|(_, s)| *s == 0) {
            return Err(SyntheticError::EmptyRegion(n.clone()));
        }
        if !(spec.noise_sigma >= 0.0) || !spec.noise_sigma.is_finite() {
            return Err(SyntheticError::InvalidParameter(format!(
                "noise_sigma must be >= 0, got {}",
                spec.noise_sigma
            )));
        }
        if !(spec.bias_sigma >= 0.0) || !spec.bias_sigma.is_finite() {
            return Err(SyntheticError::InvalidParameter(format!(
                "bias_sigma must be >= 0, got {}",
                spec.bias_sigma
            )));
        }
        if !(0.0..1.0).contains(&spec.direction_overlap) {
            return Err(SyntheticError::InvalidParameter(format!(
                "direction_overlap must be in [0, 1), got {}",
                spec.direction_overlap
            )));
        }
        let len = spec.shape.len();
        let n_regions = spec.regions.len();
        let shared = spec.direction_overlap > 0.0;
        let needed = n_regions + usize::from(shared);
        if needed > len {
            return Err(SyntheticError::TooManyRegions {
                needed,
                available: len,
            });
        }

        let mut rng = seeded(spec.seed, Stream::Subject);
        let basis = orthonormal_set(needed, len, &mut rng);
        let rho = spec.direction_overlap;
        let directions: Vec<Vec<f64>> = if shared {
            let common = &basis[n_regions];
            basis[..n_regions]
                .iter()
                .map(|e| {
                    e.iter()
                        .zip(common)
                        .map(|(a, c)| (1.0 - rho).sqrt() * a + rho.sqrt() * c)
                        .collect()
                })
                .collect()
        } else {
            basis
        };

        let n_voxels = spec.n_voxels();
        let mut tuning = Matrix::zeros(n_voxels, len);
        let mut regions = Vec::with_capacity(n_regions);
        let mut v = 0;
        for ((name, size), u) in spec.regions.iter().zip(&directions) {
            regions.push((name.clone(), (v..v + size).collect::<Vec<_>>()));
            for _ in 0..*size {
                let mut delta: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
                normalize(&mut delta);
                let scale = PERTURBATION_BOUND * rng.random_range(0.0..=1.0);
                for ((w, d), ui) in tuning.row_mut(v).iter_mut().zip(&delta).zip(u) {
                    *w = ui + scale * d;
                }
                v += 1;
            }
        }
        for _ in 0..spec.background_voxels {
            let mut w: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
            normalize(&mut w);
            tuning.row_mut(v).copy_from_slice(&w);
            v += 1;
        }
        let biases = if spec.bias_sigma > 0.0 {
            let dist = Normal::new(0.0, spec.bias_sigma).expect("finite sigma");
            (0..n_voxels).map(|_| dist.sample(&mut rng)).collect()
        } else {
            vec![0.0; n_voxels]
        };
        let atlas = RoiAtlas::new(regions)?;
        Ok(Self {
            spec,
            atlas,
            directions,
            tuning,
            biases,
        })
    }

    /// Rebuilds a subject from stored parts, checking shapes.
    pub fn from_parts(
        spec: SubjectSpec,
        directions: Vec<Vec<f64>>,
        tuning: Matrix,
        biases: Vec<f64>,
    ) -> Result<Self, SyntheticError> {
        let len = spec.shape.len();
        let n = spec.n_voxels();
        if directions.len() != spec.regions.len()
            || directions.iter().any(|d| d.len() != len)
            || tuning.rows() != n
            || tuning.cols() != len
            || biases.len() != n
        {
            return Err(SyntheticError::InvalidParameter(
                "stored subject parts do not match its spec".into(),
            ));
        }
        let mut v = 0;
        let mut regions = Vec::new();
        for (name, size) in &spec.regions {
            regions.push((name.clone(), (v..v + size).collect::<Vec<_>>()));
            v += size;
        }
        let atlas = RoiAtlas::new(regions)?;
        Ok(Self {
            spec,
            atlas,
            directions,
            tuning,
            biases,
        })
    }

    pub fn spec(&self) -> &SubjectSpec {
        &self.spec
    }

    pub fn shape(&self) -> EmbeddingShape {
        self.spec.shape
    }

    pub fn n_voxels(&self) -> usize {
        self.tuning.rows()
    }

    pub fn atlas(&self) -> &RoiAtlas {
        &self.atlas
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn tuning(&self) -> &Matrix {
        &self.tuning
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// Planted direction of a region by name.
    pub fn direction(&self, region: &str) -> Option<&[f64]> {
        self.spec
            .regions
            .iter()
            .position(|(n, _)| n == region)
            .map(|i| self.directions[i].as_slice())
    }

    /// Noise-free response.
    pub fn clean_response(&self, e: &Embedding) -> Result<Vec<f64>, SyntheticError> {
        if e.shape() != self.spec.shape {
            return Err(SyntheticError::ShapeMismatch {
                expected: self.spec.shape,
                actual: e.shape(),
            });
        }
        let g = self.spec.nonlinearity;
        Ok((0..self.n_voxels())
            .map(|v| g.apply(dot(self.tuning.row(v), e.as_flat()) + self.biases[v]))
            .collect())
    }

    /// `r_v = g(w_v·q + b_v) + ε_v`, with noise drawn from the noise stream of `noise_seed`.
    pub fn oracle_response(&self, e: &Embedding, noise_seed: u64) -> Result<Vec<f64>, SyntheticError> {
        let mut rng = seeded(noise_seed, Stream::Noise);
        self.response_with(e, &mut rng)
    }

    fn response_with<R: Rng>(&self, e: &Embedding, rng: &mut R) -> Result<Vec<f64>, SyntheticError> {
        let mut r = self.clean_response(e)?;
        if self.spec.noise_sigma > 0.0 {
            let dist = Normal::new(0.0, self.spec.noise_sigma).expect("finite sigma");
            for x in &mut r {
                *x += dist.sample(rng);
            }
        }
        Ok(r)
    }

    /// Random standard-normal stimuli with oracle responses, split into
    /// `sessions` contiguous blocks and z-scored per session.
    pub fn make_dataset(
        &self,
        n_samples: usize,
        sessions: usize,
        seed: u64,
    ) -> Result<ResponseDataset, SyntheticError> {
        if sessions == 0 || n_samples < 2 * sessions {
            return Err(SyntheticError::DegenerateSessions {
                samples: n_samples,
                sessions,
            });
        }
        let mut stim_rng = seeded(seed, Stream::Stimuli);
        let mut noise_rng = seeded(seed, Stream::Noise);
        let mut embeddings = Vec::with_capacity(n_samples);
        let mut raw = Vec::with_capacity(n_samples * self.n_voxels());
        for _ in 0..n_samples {
            let e = Embedding::random_with(self.spec.shape, &mut stim_rng);
            raw.extend(self.response_with(&e, &mut noise_rng)?);
            embeddings.push(e);
        }
        let raw = Matrix::new(n_samples, self.n_voxels(), raw).expect("row count matches");
        let session_ids: Vec<u32> = (0..n_samples)
            .map(|i| u32::try_from(i * sessions / n_samples).expect("session count fits u32"))
            .collect();
        let (ds, _zero_var) = ResponseDataset::from_raw(embeddings, &raw, session_ids)?;
        Ok(ds)
    }
}
