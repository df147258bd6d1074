//! Hand-written backprop against central differences and a naive forward pass.

mod common;

use common::*;
use nvolve::encoder::{EncoderArchitecture, EncoderModel};
use proptest::prelude::*;
use rand::Rng;

const H: f64 = 1e-6;
const MARGIN: f64 = 1e-3;

#[test]
fn forward_matches_naive_loops() {
    let mut r = rng(11);
    for _ in 0..50 {
        let arch = random_arch(&mut r);
        let m = random_model(&arch, &mut r);
        let x: Vec<f64> = (0..arch.input_len).map(|_| r.random_range(-3.0..3.0)).collect();
        let ours = m.forward(&x).unwrap();
        let naive = naive_forward(m.layers(), &x).0;
        for (a, b) in ours.iter().zip(&naive) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn input_gradient_matches_central_differences() {
    let mut r = rng(12);
    for _ in 0..40 {
        let arch = random_arch(&mut r);
        let m = random_model(&arch, &mut r);
        let x = input_away_from_kinks(&m, &mut r, MARGIN);
        let c: Vec<f64> = (0..arch.n_voxels).map(|_| r.random_range(-1.0..1.0)).collect();
        let analytic = m.input_gradient(&x, &c).unwrap();
        let numeric = central_diff(&x, H, |xp| {
            naive_forward(m.layers(), xp).0.iter().zip(&c).map(|(y, c)| y * c).sum()
        });
        let e = rel_err(&analytic, &numeric);
        assert!(e < 1e-5, "arch {:?}: rel err {e}", arch.layer_dims());
    }
}

#[test]
fn value_and_gradient_agree_with_separate_calls() {
    let mut r = rng(13);
    let arch = EncoderArchitecture::new(6, vec![9, 5], 4).unwrap();
    let m = random_model(&arch, &mut r);
    let x = input_away_from_kinks(&m, &mut r, MARGIN);
    let (y, g) = m
        .value_and_input_gradient(&x, |y| Ok::<_, nvolve::encoder::EncoderError>(y.to_vec()))
        .unwrap();
    assert_eq!(y, m.forward(&x).unwrap());
    assert_eq!(g, m.input_gradient(&x, &y).unwrap());
}

#[test]
fn parameter_gradients_match_central_differences() {
    let mut r = rng(14);
    for _ in 0..20 {
        let arch = random_arch(&mut r);
        let m = random_model(&arch, &mut r);
        let batch: Vec<(Vec<f64>, Vec<f64>)> = (0..4)
            .map(|_| {
                let x = input_away_from_kinks(&m, &mut r, MARGIN);
                let y = (0..arch.n_voxels).map(|_| r.random_range(-1.0..1.0)).collect();
                (x, y)
            })
            .collect();
        let refs: Vec<(&[f64], &[f64])> = batch.iter().map(|(x, y)| (x.as_slice(), y.as_slice())).collect();
        let (mse, grads) = m.parameter_gradients(&refs).unwrap();
        assert!((mse - naive_mse(m.layers(), &batch)).abs() < 1e-12);
        let theta = flatten(m.layers());
        let numeric = central_diff(&theta, H, |tp| naive_mse(&unflatten(m.layers(), tp), &batch));
        let e = rel_err(&flatten(&grads.layers), &numeric);
        assert!(e < 1e-5, "arch {:?}: rel err {e}", arch.layer_dims());
    }
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    // One hidden unit sitting exactly on its kink.
    let arch = EncoderArchitecture::new(1, vec![1], 1).unwrap();
    let layers = vec![
        nvolve::encoder::Dense { in_dim: 1, out_dim: 1, weight: vec![1.0], bias: vec![0.0] },
        nvolve::encoder::Dense { in_dim: 1, out_dim: 1, weight: vec![3.0], bias: vec![0.0] },
    ];
    let m = EncoderModel::from_layers(arch, layers).unwrap();
    assert_eq!(m.input_gradient(&[0.0], &[1.0]).unwrap(), vec![0.0]);
    assert_eq!(m.input_gradient(&[0.5], &[1.0]).unwrap(), vec![3.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn input_gradient_is_linear_in_cotangent(seed in any::<u64>(), a in -3.0f64..3.0) {
        let mut r = rng(seed);
        let arch = random_arch(&mut r);
        let m = random_model(&arch, &mut r);
        let x: Vec<f64> = (0..arch.input_len).map(|_| r.random_range(-2.0..2.0)).collect();
        let c1: Vec<f64> = (0..arch.n_voxels).map(|_| r.random_range(-1.0..1.0)).collect();
        let c2: Vec<f64> = (0..arch.n_voxels).map(|_| r.random_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = c1.iter().zip(&c2).map(|(p, q)| a * p + q).collect();
        let g1 = m.input_gradient(&x, &c1).unwrap();
        let g2 = m.input_gradient(&x, &c2).unwrap();
        let gm = m.input_gradient(&x, &mix).unwrap();
        for i in 0..x.len() {
            let want = a * g1[i] + g2[i];
            prop_assert!((gm[i] - want).abs() <= 1e-10 * (1.0 + want.abs()));
        }
    }
}
