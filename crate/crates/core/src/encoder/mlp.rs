//! The voxel-wise encoding head: a ReLU MLP from a flattened embedding to
//! `n_voxels` predicted responses, with hand-written backpropagation.
//!
//! Weights are stored row-major with shape `(out, in)`, so layer `l` computes
//! `y = W x + b` and every hidden layer is followed by a ReLU. The readout is
//! affine. ReLU uses the subgradient 0 at exactly 0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EncoderError;
use crate::embedding::Embedding;

/// Layer widths of the encoding head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderArchitecture {
    pub input_len: usize,
    pub hidden: Vec<usize>,
    pub n_voxels: usize,
}

impl EncoderArchitecture {
    /// Hidden widths used on full 16×768 Q-Former embeddings.
    pub const REFERENCE_HIDDEN: [usize; 3] = [2048, 1024, 512];

    pub fn new(input_len: usize, hidden: Vec<usize>, n_voxels: usize) -> Result<Self, EncoderError> {
        let arch = Self {
            input_len,
            hidden,
            n_voxels,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.input_len == 0 || self.n_voxels == 0 || self.hidden.contains(&0) {
            return Err(EncoderError::InvalidArchitecture(format!(
                "all widths must be >= 1 (input {}, hidden {:?}, voxels {})",
                self.input_len, self.hidden, self.n_voxels
            )));
        }
        Ok(())
    }

    /// `(in, out)` per affine layer, readout last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input_len);
        widths.extend_from_slice(&self.hidden);
        widths.push(self.n_voxels);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// One affine layer. `weight` is `(out, in)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for ((o, row), b) in out
            .iter_mut()
            .zip(self.weight.chunks_exact(self.in_dim))
            .zip(&self.bias)
        {
            *o = dot(row, x) + b;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators keep the dependency chain short; the summation
    // order is fixed so results are reproducible.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(arch: &EncoderArchitecture) -> Self {
        Self {
            layers: arch
                .layer_dims()
                .into_iter()
                .map(|(i, o)| Dense::zeros(i, o))
                .collect(),
        }
    }

    fn clear(&mut self) {
        for l in &mut self.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    /// Largest absolute entry over all tensors.
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Voxel-wise encoding model.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    arch: EncoderArchitecture,
    layers: Vec<Dense>,
}

impl EncoderModel {
    /// Fan-in uniform initialisation: weights i.i.d. on `[-1/sqrt(in), 1/sqrt(in)]`,
    /// biases zero, drawn layer by layer from the seeded model-init stream.
    pub fn init(arch: EncoderArchitecture, seed: u64) -> Result<Self, EncoderError> {
        arch.validate()?;
        let mut rng = crate::rng::seeded(seed, crate::rng::Stream::ModelInit);
        let layers = arch
            .layer_dims()
            .into_iter()
            .map(|(i, o)| {
                let bound = 1.0 / (i as f64).sqrt();
                let mut d = Dense::zeros(i, o);
                for w in &mut d.weight {
                    *w = rng.random_range(-bound..=bound);
                }
                d
            })
            .collect();
        Ok(Self { arch, layers })
    }

    pub fn zeros(arch: EncoderArchitecture) -> Result<Self, EncoderError> {
        arch.validate()?;
        let layers = arch
            .layer_dims()
            .into_iter()
            .map(|(i, o)| Dense::zeros(i, o))
            .collect();
        Ok(Self { arch, layers })
    }

    /// Assembles a model from explicit layers, checking shapes and finiteness.
    pub fn from_layers(arch: EncoderArchitecture, layers: Vec<Dense>) -> Result<Self, EncoderError> {
        arch.validate()?;
        let dims = arch.layer_dims();
        if dims.len() != layers.len() {
            return Err(EncoderError::ParameterShape(format!(
                "architecture has {} layers, got {}",
                dims.len(),
                layers.len()
            )));
        }
        for (l, ((i, o), d)) in dims.iter().zip(&layers).enumerate() {
            if d.in_dim != *i || d.out_dim != *o || d.weight.len() != i * o || d.bias.len() != *o {
                return Err(EncoderError::ParameterShape(format!(
                    "layer {l}: expected {o}x{i} weight and {o} bias, got {}x{} weight ({} values) and {} bias",
                    d.out_dim,
                    d.in_dim,
                    d.weight.len(),
                    d.bias.len()
                )));
            }
            if d.weight.iter().chain(&d.bias).any(|v| !v.is_finite()) {
                return Err(EncoderError::ParameterShape(format!(
                    "layer {l} has non-finite parameters"
                )));
            }
        }
        Ok(Self { arch, layers })
    }

    pub fn arch(&self) -> &EncoderArchitecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn n_voxels(&self) -> usize {
        self.arch.n_voxels
    }

    fn check_input(&self, len: usize) -> Result<(), EncoderError> {
        if len != self.arch.input_len {
            return Err(EncoderError::InputLength {
                expected: self.arch.input_len,
                actual: len,
            });
        }
        Ok(())
    }

    /// Predicted responses for a flat input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, EncoderError> {
        self.check_input(input.len())?;
        let mut trace = Trace::new(&self.arch);
        self.run(input, &mut trace);
        Ok(trace.output().to_vec())
    }

    pub fn predict(&self, e: &Embedding) -> Result<Vec<f64>, EncoderError> {
        self.forward(e.as_flat())
    }

    /// Predictions for many embeddings, one row each. Rows are computed in
    /// parallel; each row is independent so the output does not depend on
    /// the thread count.
    pub fn predict_many(&self, embeddings: &[Embedding]) -> Result<crate::matrix::Matrix, EncoderError> {
        use rayon::prelude::*;
        let rows: Vec<Vec<f64>> = embeddings
            .par_iter()
            .map(|e| self.predict(e))
            .collect::<Result<_, _>>()?;
        Ok(crate::matrix::Matrix::from_rows(self.arch.n_voxels, rows)
            .expect("forward returns n_voxels values"))
    }

    fn run(&self, input: &[f64], trace: &mut Trace) {
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = trace.acts.split_at_mut(l);
            let x = if l == 0 { input } else { &before[l - 1] };
            let out = &mut after[0];
            layer.apply(x, out);
            if l != last {
                for v in out.iter_mut() {
                    if *v <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// Backpropagates `cotangent` (dL/d output) through a recorded forward
    /// pass. Accumulates parameter gradients into `grads` when given and
    /// writes dL/d input into `d_input` when given.
    fn backward(
        &self,
        input: &[f64],
        trace: &Trace,
        cotangent: &[f64],
        mut grads: Option<&mut Gradients>,
        d_input: Option<&mut [f64]>,
        scratch: &mut Scratch,
    ) {
        let n = self.layers.len();
        scratch.delta.clear();
        scratch.delta.extend_from_slice(cotangent);
        let mut d_input = d_input;
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let x = if l == 0 { input } else { &trace.acts[l - 1][..] };
            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g.layers[l];
                for ((row, gb), &d) in gl
                    .weight
                    .chunks_exact_mut(layer.in_dim)
                    .zip(gl.bias.iter_mut())
                    .zip(&scratch.delta)
                {
                    *gb += d;
                    if d != 0.0 {
                        for (w, &xi) in row.iter_mut().zip(x) {
                            *w += d * xi;
                        }
                    }
                }
            }
            if l == 0 && d_input.is_none() {
                break;
            }
            // d_prev = W^T delta
            scratch.prev.clear();
            scratch.prev.resize(layer.in_dim, 0.0);
            for (row, &d) in layer.weight.chunks_exact(layer.in_dim).zip(&scratch.delta) {
                if d != 0.0 {
                    for (p, &w) in scratch.prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
            }
            if l == 0 {
                if let Some(out) = d_input.take() {
                    out.copy_from_slice(&scratch.prev);
                }
                break;
            }
            // ReLU mask: post-activation > 0 exactly when pre-activation > 0.
            for (p, &h) in scratch.prev.iter_mut().zip(&trace.acts[l - 1]) {
                if h <= 0.0 {
                    *p = 0.0;
                }
            }
            std::mem::swap(&mut scratch.delta, &mut scratch.prev);
        }
    }

    /// `J^T · cotangent`, the gradient of `<cotangent, Φ(q)>` with respect to the input.
    pub fn input_gradient(&self, input: &[f64], cotangent: &[f64]) -> Result<Vec<f64>, EncoderError> {
        self.check_input(input.len())?;
        if cotangent.len() != self.arch.n_voxels {
            return Err(EncoderError::CotangentLength {
                expected: self.arch.n_voxels,
                actual: cotangent.len(),
            });
        }
        let mut trace = Trace::new(&self.arch);
        self.run(input, &mut trace);
        let mut out = vec![0.0; input.len()];
        let mut scratch = Scratch::default();
        self.backward(input, &trace, cotangent, None, Some(&mut out), &mut scratch);
        Ok(out)
    }

    /// Forward pass plus input gradient in one go; returns `(Φ(q), J^T c)`
    /// where the cotangent is computed from the prediction by `cotangent_fn`.
    pub fn value_and_input_gradient<F, E>(
        &self,
        input: &[f64],
        cotangent_fn: F,
    ) -> Result<(Vec<f64>, Vec<f64>), E>
    where
        F: FnOnce(&[f64]) -> Result<Vec<f64>, E>,
        E: From<EncoderError>,
    {
        self.check_input(input.len())?;
        let mut trace = Trace::new(&self.arch);
        self.run(input, &mut trace);
        let cot = cotangent_fn(trace.output())?;
        if cot.len() != self.arch.n_voxels {
            return Err(EncoderError::CotangentLength {
                expected: self.arch.n_voxels,
                actual: cot.len(),
            }
            .into());
        }
        let mut grad = vec![0.0; input.len()];
        let mut scratch = Scratch::default();
        self.backward(input, &trace, &cot, None, Some(&mut grad), &mut scratch);
        Ok((trace.output().to_vec(), grad))
    }

    /// Mean-squared-error loss over a batch and its parameter gradients.
    ///
    /// `L = 1/(B N) Σ_b Σ_v (Φ(x_b)_v - r_bv)^2`.
    pub fn parameter_gradients(&self, batch: &[(&[f64], &[f64])]) -> Result<(f64, Gradients), EncoderError> {
        let mut grads = Gradients::zeros_like(&self.arch);
        let mut ws = BatchWorkspace::new(&self.arch);
        let loss = self.accumulate_mse_gradients(batch.iter().copied(), batch.len(), &mut grads, &mut ws)?;
        Ok((loss, grads))
    }

    pub(crate) fn accumulate_mse_gradients<'a, I>(
        &self,
        batch: I,
        batch_len: usize,
        grads: &mut Gradients,
        ws: &mut BatchWorkspace,
    ) -> Result<f64, EncoderError>
    where
        I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
    {
        if batch_len == 0 {
            return Err(EncoderError::EmptyBatch);
        }
        grads.clear();
        let n = self.arch.n_voxels;
        let scale = 2.0 / (batch_len * n) as f64;
        let mut sse = 0.0;
        let mut seen = 0;
        for (x, r) in batch {
            self.check_input(x.len())?;
            if r.len() != n {
                return Err(EncoderError::TargetLength {
                    expected: n,
                    actual: r.len(),
                });
            }
            self.run(x, &mut ws.trace);
            ws.cot.clear();
            for (&y, &t) in ws.trace.output().iter().zip(r) {
                let e = y - t;
                sse += e * e;
                ws.cot.push(scale * e);
            }
            self.backward(x, &ws.trace, &ws.cot, Some(grads), None, &mut ws.scratch);
            seen += 1;
        }
        debug_assert_eq!(seen, batch_len);
        Ok(sse / (batch_len * n) as f64)
    }

    /// Mean squared error of the model over paired inputs and targets.
    pub fn mse<'a, I>(&self, pairs: I) -> Result<f64, EncoderError>
    where
        I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
    {
        let mut trace = Trace::new(&self.arch);
        let mut sse = 0.0;
        let mut count = 0usize;
        for (x, r) in pairs {
            self.check_input(x.len())?;
            self.run(x, &mut trace);
            sse += trace
                .output()
                .iter()
                .zip(r)
                .map(|(y, t)| (y - t) * (y - t))
                .sum::<f64>();
            count += r.len();
        }
        if count == 0 {
            return Err(EncoderError::EmptyBatch);
        }
        Ok(sse / count as f64)
    }

    /// Flattened copy of all parameters, layer by layer (weight then bias).
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
            .collect()
    }
}

/// Post-activation outputs of every layer for one forward pass.
struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    fn new(arch: &EncoderArchitecture) -> Self {
        Self {
            acts: arch
                .layer_dims()
                .into_iter()
                .map(|(_, o)| vec![0.0; o])
                .collect(),
        }
    }

    fn output(&self) -> &[f64] {
        self.acts.last().expect("at least one layer")
    }
}

#[derive(Default)]
struct Scratch {
    delta: Vec<f64>,
    prev: Vec<f64>,
}

/// Reusable buffers for mini-batch gradient accumulation.
pub(crate) struct BatchWorkspace {
    trace: Trace,
    scratch: Scratch,
    cot: Vec<f64>,
}

impl BatchWorkspace {
    pub(crate) fn new(arch: &EncoderArchitecture) -> Self {
        Self {
            trace: Trace::new(arch),
            scratch: Scratch::default(),
            cot: Vec::with_capacity(arch.n_voxels),
        }
    }
}
