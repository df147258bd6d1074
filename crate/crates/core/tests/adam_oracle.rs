//! Adam against a transcription of the textbook update, bit for bit.

use nvolve::adam::{AdamConfig, AdamState};
use nvolve::embedding::{Embedding, EmbeddingShape};
use nvolve::optimize::{adam_step, OptimizeConfig};

/// m ← β1 m + (1−β1) g;  v ← β2 v + (1−β2) g²;  θ ← θ − α m̂ / (√v̂ + ε).
fn oracle(theta0: &[f64], steps: usize, grad: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Vec<f64>> {
    let (alpha, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
    let mut theta = theta0.to_vec();
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut out = Vec::new();
    for t in 1..=steps {
        let g = grad(&theta);
        for i in 0..theta.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - f64::powi(b1, t as i32));
            let vh = v[i] / (1.0 - f64::powi(b2, t as i32));
            theta[i] -= alpha * mh / (vh.sqrt() + eps);
        }
        out.push(theta.clone());
    }
    out
}

#[test]
fn five_steps_on_squared_norm_bit_exact() {
    let q0 = vec![1.0, -0.5, 2.0, 0.0, -3.25, 1e-3];
    let want = oracle(&q0, 5, |q| q.iter().map(|x| 2.0 * x).collect());

    let mut q = Embedding::from_flat(EmbeddingShape::new(2, 3).unwrap(), q0).unwrap();
    let mut state = AdamState::new(6);
    let cfg = OptimizeConfig::default();
    for w in want {
        let g: Vec<f64> = q.as_flat().iter().map(|x| 2.0 * x).collect();
        adam_step(&mut state, &mut q, &g, &cfg).unwrap();
        assert_eq!(q.as_flat(), w.as_slice());
    }
}

#[test]
fn first_step_moves_by_learning_rate() {
    // With bias correction the first step is α·g/(|g| + ε) per coordinate.
    let mut s = AdamState::new(3);
    let mut p = vec![1.0, -1.0, 0.0];
    s.step(&mut p, &[2.0, -4.0, 0.0], &AdamConfig::adam(0.01));
    assert!((p[0] - (1.0 - 0.01 * 2.0 / (2.0 + 1e-8))).abs() < 1e-15);
    assert!((p[1] - (-1.0 + 0.01 * 4.0 / (4.0 + 1e-8))).abs() < 1e-15);
    assert_eq!(p[2], 0.0);
}

#[test]
fn decoupled_decay_precedes_adam() {
    let cfg = AdamConfig::adamw(0.1, 0.5);
    let mut s = AdamState::new(1);
    let mut p = vec![2.0];
    s.step(&mut p, &[0.0], &cfg);
    assert_eq!(p, vec![2.0 - 0.1 * 0.5 * 2.0]);
}

#[test]
fn non_finite_gradient_rejected() {
    let mut q = Embedding::zeros(EmbeddingShape::new(1, 2).unwrap());
    let mut s = AdamState::new(2);
    assert!(adam_step(&mut s, &mut q, &[f64::NAN, 0.0], &OptimizeConfig::default()).is_err());
    assert!(adam_step(&mut s, &mut q, &[0.0], &OptimizeConfig::default()).is_err());
}
