//! Algebraic laws of the region-mean objective.

mod common;

use common::rng;
use nvolve::objective::{format_terms, parse_objective, Direction, NeuralObjective, ObjectiveTerm, RoiAtlas};
use proptest::prelude::*;
use rand::Rng;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

/// Random overlapping atlas over `n` voxels with region names R0, R1, ...
fn random_atlas(r: &mut impl Rng, n: usize) -> RoiAtlas {
    let k = r.random_range(1..=5);
    RoiAtlas::new((0..k).map(|i| {
        let size = r.random_range(1..=n);
        let vox: Vec<usize> = (0..size).map(|_| r.random_range(0..n)).collect();
        (format!("R{i}"), vox)
    }))
    .unwrap()
}

#[test]
fn mean_definition_by_hand() {
    let atlas = RoiAtlas::new([("A", vec![0, 2]), ("B", vec![1, 2, 3])]).unwrap();
    let r = [1.0, 4.0, 3.0, -1.0];
    let obj = NeuralObjective::from_text("+A:2 -B:0.5", &atlas, 4).unwrap();
    // -2 * (1 + 3)/2 + 0.5 * (4 + 3 - 1)/3
    assert!(close(obj.loss(&r).unwrap(), -4.0 + 1.0));
    let cot = obj.loss_cotangent(&r).unwrap();
    assert_eq!(cot, vec![-1.0, 0.5 / 3.0, -1.0 + 0.5 / 3.0, 0.5 / 3.0]);
}

#[test]
fn laws_on_random_cases() {
    let mut r = rng(2024);
    for _ in 0..1000 {
        let n = r.random_range(1..=40);
        let atlas = random_atlas(&mut r, n);
        let names: Vec<String> = atlas.names().map(str::to_string).collect();
        let terms: Vec<ObjectiveTerm> = (0..r.random_range(1..=4))
            .map(|_| {
                let name = names[r.random_range(0..names.len())].clone();
                let w = r.random_range(0.05..5.0);
                if r.random_bool(0.5) {
                    ObjectiveTerm::activate(name, w)
                } else {
                    ObjectiveTerm::suppress(name, w)
                }
            })
            .collect();
        let resp: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
        let obj = NeuralObjective::compile(&terms, &atlas, n).unwrap();
        let l = obj.loss(&resp).unwrap();

        let lambda = r.random_range(0.1..10.0);
        let scaled: Vec<_> = terms.iter().map(|t| ObjectiveTerm { weight: t.weight * lambda, ..t.clone() }).collect();
        assert!(close(NeuralObjective::compile(&scaled, &atlas, n).unwrap().loss(&resp).unwrap(), lambda * l));

        let flipped: Vec<_> = terms
            .iter()
            .map(|t| ObjectiveTerm {
                direction: match t.direction {
                    Direction::Activate => Direction::Suppress,
                    Direction::Suppress => Direction::Activate,
                },
                ..t.clone()
            })
            .collect();
        assert!(close(NeuralObjective::compile(&flipped, &atlas, n).unwrap().loss(&resp).unwrap(), -l));

        let parts: f64 = terms
            .iter()
            .map(|t| NeuralObjective::compile(std::slice::from_ref(t), &atlas, n).unwrap().loss(&resp).unwrap())
            .sum();
        assert!(close(parts, l));

        // The loss is linear in the response, so L(r + a·d) - L(r) = a·<cot, d>.
        let cot = obj.loss_cotangent(&resp).unwrap();
        let d: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let a = r.random_range(-3.0..3.0);
        let moved: Vec<f64> = resp.iter().zip(&d).map(|(x, y)| x + a * y).collect();
        let dl: f64 = cot.iter().zip(&d).map(|(c, y)| c * y).sum::<f64>() * a;
        assert!((obj.loss(&moved).unwrap() - l - dl).abs() <= 1e-12 * (1.0 + l.abs() + 10.0 * dl.abs()));
        assert_eq!(obj.loss_cotangent(&moved).unwrap(), cot);
    }
}

proptest! {
    #[test]
    fn canonical_text_reparses(weights in prop::collection::vec((0.01f64..100.0, any::<bool>()), 1..6)) {
        let terms: Vec<ObjectiveTerm> = weights
            .iter()
            .enumerate()
            .map(|(i, &(w, up))| if up { ObjectiveTerm::activate(format!("R{i}"), w) } else { ObjectiveTerm::suppress(format!("R{i}"), w) })
            .collect();
        prop_assert_eq!(parse_objective(&format_terms(&terms)).unwrap(), terms);
    }

    #[test]
    fn garbage_never_panics(s in "\\PC{0,24}") {
        let _ = parse_objective(&s);
    }
}
