//! Oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use nvolve::embedding::{Embedding, EmbeddingShape};
use nvolve::encoder::{train, Dense, EncoderArchitecture, EncoderModel, TrainConfig};
use nvolve::synthetic::{SubjectSpec, SyntheticSubject};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Plain nested-loop forward pass. Returns the output and every hidden
/// pre-activation.
pub fn naive_forward(layers: &[Dense], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut a = x.to_vec();
    let mut pre = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        let mut z = vec![0.0; layer.out_dim];
        for o in 0..layer.out_dim {
            let mut s = layer.bias[o];
            for i in 0..layer.in_dim {
                s += layer.weight[o * layer.in_dim + i] * a[i];
            }
            z[o] = s;
        }
        if l + 1 < layers.len() {
            pre.extend_from_slice(&z);
            a = z.into_iter().map(|v| v.max(0.0)).collect();
        } else {
            a = z;
        }
    }
    (a, pre)
}

/// Smallest |pre-activation| over the hidden layers.
pub fn kink_distance(layers: &[Dense], x: &[f64]) -> f64 {
    naive_forward(layers, x).1.iter().fold(f64::INFINITY, |m, z| m.min(z.abs()))
}

/// Random tiny architecture with every layer at most 32 wide.
pub fn random_arch(r: &mut impl Rng) -> EncoderArchitecture {
    let input = r.random_range(2..=12);
    let depth = r.random_range(0..=3);
    let hidden = (0..depth).map(|_| r.random_range(2..=32)).collect();
    let out = r.random_range(1..=8);
    EncoderArchitecture::new(input, hidden, out).unwrap()
}

/// Model with non-zero biases so ReLU patterns are mixed.
pub fn random_model(arch: &EncoderArchitecture, r: &mut impl Rng) -> EncoderModel {
    let layers = arch
        .layer_dims()
        .into_iter()
        .map(|(i, o)| Dense {
            in_dim: i,
            out_dim: o,
            weight: (0..i * o).map(|_| r.random_range(-1.0..1.0) / (i as f64).sqrt()).collect(),
            bias: (0..o).map(|_| r.random_range(-0.3..0.3)).collect(),
        })
        .collect();
    EncoderModel::from_layers(arch.clone(), layers).unwrap()
}

/// Draws an input whose pre-activations are all at least `margin` from 0.
pub fn input_away_from_kinks(model: &EncoderModel, r: &mut impl Rng, margin: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..model.arch().input_len).map(|_| r.random_range(-2.0..2.0)).collect();
        if kink_distance(model.layers(), &x) >= margin {
            return x;
        }
    }
}

/// `‖a - n‖∞ / max(‖a‖∞, ‖n‖∞)`, 0 when both vanish.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let num = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    let den = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Flattened parameters in layer order, weight then bias.
pub fn flatten(layers: &[Dense]) -> Vec<f64> {
    layers.iter().flat_map(|l| l.weight.iter().chain(&l.bias).copied()).collect()
}

pub fn unflatten(template: &[Dense], flat: &[f64]) -> Vec<Dense> {
    let mut off = 0;
    template
        .iter()
        .map(|l| {
            let (nw, nb) = (l.weight.len(), l.bias.len());
            let d = Dense {
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                weight: flat[off..off + nw].to_vec(),
                bias: flat[off + nw..off + nw + nb].to_vec(),
            };
            off += nw + nb;
            d
        })
        .collect()
}

/// Naive batch MSE `1/(B N) Σ (Φ(x) - y)^2`.
pub fn naive_mse(layers: &[Dense], batch: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let n = layers.last().unwrap().out_dim;
    let sse: f64 = batch
        .iter()
        .map(|(x, y)| {
            naive_forward(layers, x)
                .0
                .iter()
                .zip(y)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
        })
        .sum();
    sse / (batch.len() * n) as f64
}

pub const DESK_REGIONS: [(&str, usize); 3] = [("FFA", 7), ("PPA", 7), ("EBA", 6)];

pub fn desk_shape() -> EmbeddingShape {
    EmbeddingShape::new(4, 16).unwrap()
}

pub struct Fixture {
    pub subject: SyntheticSubject,
    pub model: EncoderModel,
    pub val_r: f64,
}

/// Linear zero-noise subject, 900/100 split, default recipe, desk-scale widths.
pub fn trained_fixture(subject_seed: u64) -> Fixture {
    let shape = desk_shape();
    let subject = SyntheticSubject::generate(SubjectSpec::new(shape, &DESK_REGIONS, subject_seed)).unwrap();
    let (tr, va) = subject.make_dataset(1000, 4, subject_seed + 1).unwrap().split_at(900).unwrap();
    let arch = EncoderArchitecture::new(shape.len(), vec![256, 128, 64], subject.n_voxels()).unwrap();
    let (model, log) = train(&tr, &va, &arch, &TrainConfig::default()).unwrap();
    Fixture {
        subject,
        model,
        val_r: log.best().unwrap().val_mean_r,
    }
}

/// Independent progress/selection oracle: recompute the running minimum and
/// progress by hand and scan forward for each fraction.
pub fn scan_oracle(losses: &[f64], fractions: &[f64]) -> Vec<usize> {
    let l0 = losses[0];
    let mut best = Vec::with_capacity(losses.len());
    let mut b = f64::INFINITY;
    for &l in losses {
        if l < b {
            b = l;
        }
        best.push(b);
    }
    let total = l0 - best[best.len() - 1];
    fractions
        .iter()
        .map(|&f| {
            if total <= 0.0 {
                return 0;
            }
            let mut i = 0;
            while (l0 - best[i]) / total < f {
                i += 1;
            }
            i
        })
        .collect()
}

/// Every file under `dir` (recursively) keyed by relative path.
pub fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn random_embeddings(shape: EmbeddingShape, n: usize, seed: u64) -> Vec<Embedding> {
    Embedding::random_pool(shape, n, seed)
}
