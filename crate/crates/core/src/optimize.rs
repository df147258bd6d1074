//! Gradient-based optimization of an embedding against a neural objective.
//!
//! Each step evaluates `L(Φ(q))`, backpropagates the objective cotangent
//! through the encoder to get `∇_q L`, and applies a bias-corrected Adam
//! update to `q`. The encoder is never modified. The run is recorded as a
//! [`Trajectory`] whose best-so-far losses define a monotone progress
//! coordinate used to pick intermediate embeddings.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adam::{AdamConfig, AdamState};
use crate::embedding::{Embedding, EmbeddingShape};
use crate::encoder::{EncoderError, EncoderModel};
use crate::objective::{NeuralObjective, ObjectiveError, RoiAtlas};

/// Fractions of total improvement at which intermediate embeddings are sampled by default.
pub const DEFAULT_FRACTIONS: [f64; 4] = [0.2, 0.5, 0.8, 1.0];

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("gradient has length {actual}, embedding has {expected} values")]
    GradientLength { expected: usize, actual: usize },
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: u64 },
    #[error("non-finite loss at step {step}; partial trajectory has {} points", partial.points.len())]
    NonFiniteLoss { step: usize, partial: Box<Trajectory> },
    #[error("embedding shape {actual} does not match the model input length {expected}")]
    ShapeMismatch { expected: usize, actual: EmbeddingShape },
    #[error("objective covers {objective} voxels but the model predicts {model}")]
    VoxelMismatch { objective: usize, model: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory has no points")]
    Empty,
    #[error("fraction {0} is outside (0, 1]")]
    BadFraction(f64),
    #[error("no embedding recorded at step {step}; rerun with --record-every 1")]
    NotRecorded { step: usize },
    #[error("trajectory steps must start at 0 and strictly increase (found {found} after {previous})")]
    NonMonotoneSteps { previous: usize, found: usize },
    #[error("non-finite loss recorded at step {0}")]
    NonFiniteLoss(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Embeddings are stored every `record_every` steps, plus steps 0 and T.
    pub record_every: usize,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            record_every: 1,
            seed: 0,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: String| Err(OptimizeError::InvalidConfig(m));
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if !(self.eps >= 0.0) {
            return bad(format!("eps must be >= 0, got {}", self.eps));
        }
        if self.record_every == 0 {
            return bad("record_every must be >= 1".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: 0.0,
        }
    }

    fn records_embedding(&self, step: usize) -> bool {
        step == 0 || step == self.steps || step % self.record_every == 0
    }
}

/// One Adam update of `q` in place. Rejects non-finite gradients.
pub fn adam_step(
    state: &mut AdamState,
    q: &mut Embedding,
    grad: &[f64],
    cfg: &OptimizeConfig,
) -> Result<(), OptimizeError> {
    if grad.len() != q.as_flat().len() || state.len() != grad.len() {
        return Err(OptimizeError::GradientLength {
            expected: q.as_flat().len(),
            actual: grad.len(),
        });
    }
    let step = state.step_count() + 1;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(OptimizeError::NonFiniteGradient { step });
    }
    state.step(q.as_flat_mut(), grad, &cfg.adam());
    if q.as_flat().iter().any(|v| !v.is_finite()) {
        return Err(OptimizeError::NonFiniteGradient { step });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub embedding: Option<Embedding>,
    pub loss: f64,
    pub region_means: BTreeMap<String, f64>,
}

/// Ordered record of an optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    config: OptimizeConfig,
    objective: String,
    points: Vec<TrajectoryPoint>,
    best_so_far: Vec<f64>,
}

/// An embedding picked at a progress fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub fraction: f64,
    pub step: usize,
    pub embedding: Embedding,
}

impl Trajectory {
    /// Assembles a trajectory, checking step order and finite losses and
    /// deriving the best-so-far curve.
    pub fn from_points(
        config: OptimizeConfig,
        objective: impl Into<String>,
        points: Vec<TrajectoryPoint>,
    ) -> Result<Self, TrajectoryError> {
        if points.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if points[0].step != 0 {
            return Err(TrajectoryError::NonMonotoneSteps {
                previous: 0,
                found: points[0].step,
            });
        }
        for w in points.windows(2) {
            if w[1].step <= w[0].step {
                return Err(TrajectoryError::NonMonotoneSteps {
                    previous: w[0].step,
                    found: w[1].step,
                });
            }
        }
        if let Some(p) = points.iter().find(|p| !p.loss.is_finite()) {
            return Err(TrajectoryError::NonFiniteLoss(p.step));
        }
        let best_so_far = best_so_far(points.iter().map(|p| p.loss));
        Ok(Self {
            config,
            objective: objective.into(),
            points,
            best_so_far,
        })
    }

    fn push(&mut self, point: TrajectoryPoint) {
        let best = self
            .best_so_far
            .last()
            .map_or(point.loss, |&b| b.min(point.loss));
        self.best_so_far.push(best);
        self.points.push(point);
    }

    pub fn config(&self) -> &OptimizeConfig {
        &self.config
    }

    pub fn objective(&self) -> &str {
        &self.objective
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn best_loss_so_far(&self) -> &[f64] {
        &self.best_so_far
    }

    pub fn losses(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.loss).collect()
    }

    pub fn initial(&self) -> &TrajectoryPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("non-empty")
    }

    /// Earliest point attaining the minimum loss.
    pub fn best(&self) -> &TrajectoryPoint {
        let target = *self.best_so_far.last().expect("non-empty");
        self.points
            .iter()
            .find(|p| p.loss == target)
            .expect("minimum is attained")
    }

    pub fn point_at(&self, step: usize) -> Option<&TrajectoryPoint> {
        self.points
            .binary_search_by_key(&step, |p| p.step)
            .ok()
            .map(|i| &self.points[i])
    }

    /// Progress `p(t) = (L0 - B_t) / (L0 - B_T)` for every recorded point,
    /// with `B_t` the best loss up to `t`. Without improvement `p ≡ 1`.
    pub fn progress(&self) -> Vec<f64> {
        progress_from_best(&self.best_so_far)
    }

    /// For each fraction `f`, the earliest step whose progress reaches `f`,
    /// with the embedding recorded there.
    pub fn sample_at_fractions(&self, fractions: &[f64]) -> Result<Vec<Sample>, TrajectoryError> {
        let idx = select_indices(&self.progress(), fractions)?;
        idx.into_iter()
            .zip(fractions)
            .map(|(i, &fraction)| {
                let p = &self.points[i];
                let embedding = p
                    .embedding
                    .clone()
                    .ok_or(TrajectoryError::NotRecorded { step: p.step })?;
                Ok(Sample {
                    fraction,
                    step: p.step,
                    embedding,
                })
            })
            .collect()
    }

    /// Copy keeping recorded embeddings only at steps where `keep` holds.
    /// Steps 0 and T keep theirs regardless.
    pub fn keep_embeddings<F: Fn(usize) -> bool>(&self, keep: F) -> Self {
        let last = self.last().step;
        let mut t = self.clone();
        for p in &mut t.points {
            if p.step != 0 && p.step != last && !keep(p.step) {
                p.embedding = None;
            }
        }
        t
    }

    /// Steps selected for `fractions` without requiring recorded embeddings.
    pub fn steps_at_fractions(&self, fractions: &[f64]) -> Result<Vec<usize>, TrajectoryError> {
        Ok(select_indices(&self.progress(), fractions)?
            .into_iter()
            .map(|i| self.points[i].step)
            .collect())
    }
}

/// Running minimum of a loss sequence.
pub fn best_so_far<I: IntoIterator<Item = f64>>(losses: I) -> Vec<f64> {
    let mut best = f64::INFINITY;
    losses
        .into_iter()
        .map(|l| {
            best = best.min(l);
            best
        })
        .collect()
}

/// Progress fractions from a best-so-far curve.
pub fn progress_from_best(best: &[f64]) -> Vec<f64> {
    let (Some(&l0), Some(&bt)) = (best.first(), best.last()) else {
        return Vec::new();
    };
    let total = l0 - bt;
    if total == 0.0 {
        return vec![1.0; best.len()];
    }
    best.iter().map(|&b| (l0 - b) / total).collect()
}

/// Index of the earliest progress value `>= f` for each fraction.
pub fn select_indices(progress: &[f64], fractions: &[f64]) -> Result<Vec<usize>, TrajectoryError> {
    if progress.is_empty() {
        return Err(TrajectoryError::Empty);
    }
    fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f <= 1.0) {
                return Err(TrajectoryError::BadFraction(f));
            }
            // progress is non-decreasing and ends at 1, so a match exists.
            Ok(progress.partition_point(|&p| p < f).min(progress.len() - 1))
        })
        .collect()
}

fn check_compat(model: &EncoderModel, obj: &NeuralObjective, q: &Embedding) -> Result<(), OptimizeError> {
    if q.as_flat().len() != model.arch().input_len {
        return Err(OptimizeError::ShapeMismatch {
            expected: model.arch().input_len,
            actual: q.shape(),
        });
    }
    if obj.n_voxels() != model.n_voxels() {
        return Err(OptimizeError::VoxelMismatch {
            objective: obj.n_voxels(),
            model: model.n_voxels(),
        });
    }
    Ok(())
}

/// Region sets whose means are logged at every step.
enum Tracked<'a> {
    Objective(&'a NeuralObjective),
    Atlas(&'a RoiAtlas),
}

impl Tracked<'_> {
    fn means(&self, response: &[f64]) -> Result<BTreeMap<String, f64>, ObjectiveError> {
        match self {
            Tracked::Atlas(a) => crate::objective::region_means(a, response),
            Tracked::Objective(o) => Ok(o
                .terms()
                .iter()
                .map(|t| {
                    let m = t.voxels.iter().map(|&v| response[v]).sum::<f64>() / t.voxels.len() as f64;
                    (t.term.region.clone(), m)
                })
                .collect()),
        }
    }
}

/// Optimizes `q0` under `obj`, logging the means of the objective's regions.
pub fn optimize(
    model: &EncoderModel,
    obj: &NeuralObjective,
    q0: &Embedding,
    cfg: &OptimizeConfig,
) -> Result<Trajectory, OptimizeError> {
    run(model, obj, Tracked::Objective(obj), q0, cfg)
}

/// As [`optimize`], logging the means of every region in `atlas`.
pub fn optimize_tracking(
    model: &EncoderModel,
    obj: &NeuralObjective,
    atlas: &RoiAtlas,
    q0: &Embedding,
    cfg: &OptimizeConfig,
) -> Result<Trajectory, OptimizeError> {
    atlas.validate(model.n_voxels()).map_err(ObjectiveError::from)?;
    run(model, obj, Tracked::Atlas(atlas), q0, cfg)
}

fn run(
    model: &EncoderModel,
    obj: &NeuralObjective,
    tracked: Tracked<'_>,
    q0: &Embedding,
    cfg: &OptimizeConfig,
) -> Result<Trajectory, OptimizeError> {
    cfg.validate()?;
    check_compat(model, obj, q0)?;
    let mut traj = Trajectory {
        config: *cfg,
        objective: obj.text(),
        points: Vec::with_capacity(cfg.steps + 1),
        best_so_far: Vec::with_capacity(cfg.steps + 1),
    };
    let mut q = q0.clone();
    let mut state = AdamState::new(q.as_flat().len());
    let (mut response, mut grad) = model
        .value_and_input_gradient(q.as_flat(), |r| obj.loss_cotangent(r).map_err(OptimizeError::from))?;
    for step in 0..=cfg.steps {
        if step > 0 {
            adam_step(&mut state, &mut q, &grad, cfg)?;
            (response, grad) = model.value_and_input_gradient(q.as_flat(), |r| {
                obj.loss_cotangent(r).map_err(OptimizeError::from)
            })?;
        }
        let loss = obj.loss(&response)?;
        let region_means = tracked.means(&response)?;
        if !loss.is_finite() {
            return Err(OptimizeError::NonFiniteLoss {
                step,
                partial: Box::new(traj),
            });
        }
        traj.push(TrajectoryPoint {
            step,
            embedding: cfg.records_embedding(step).then(|| q.clone()),
            loss,
            region_means,
        });
    }
    Ok(traj)
}

/// Runs one optimization per start embedding in parallel. Results keep the
/// input order and each run is independent of the thread count.
pub fn optimize_many(
    model: &EncoderModel,
    obj: &NeuralObjective,
    atlas: Option<&RoiAtlas>,
    starts: &[Embedding],
    cfg: &OptimizeConfig,
) -> Vec<Result<Trajectory, OptimizeError>> {
    starts
        .par_iter()
        .map(|q0| match atlas {
            Some(a) => optimize_tracking(model, obj, a, q0, cfg),
            None => optimize(model, obj, q0, cfg),
        })
        .collect()
}
