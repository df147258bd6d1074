//! Column-wise Pearson correlation and per-session z-scoring.

use std::collections::BTreeMap;

use super::EncoderError;
use crate::matrix::Matrix;

/// Per-voxel correlations plus the voxels whose correlation was undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelCorrelations {
    pub r: Vec<f64>,
    /// Columns where either input had zero variance; their `r` is 0.
    pub degenerate: Vec<usize>,
}

impl VoxelCorrelations {
    pub fn mean(&self) -> f64 {
        if self.r.is_empty() {
            return 0.0;
        }
        self.r.iter().sum::<f64>() / self.r.len() as f64
    }

    pub fn has_warnings(&self) -> bool {
        !self.degenerate.is_empty()
    }
}

/// Pearson correlation of each column of `pred` with the same column of `truth`.
pub fn pearson_per_voxel(pred: &Matrix, truth: &Matrix) -> Result<VoxelCorrelations, EncoderError> {
    if pred.rows() != truth.rows() || pred.cols() != truth.cols() {
        return Err(EncoderError::ShapeMismatch(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.rows(),
            pred.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    let n = pred.rows();
    if n < 2 {
        return Err(EncoderError::TooFewSamples { needed: 2, actual: n });
    }
    let cols = pred.cols();
    let mut mean_p = vec![0.0; cols];
    let mut mean_t = vec![0.0; cols];
    for i in 0..n {
        for (m, v) in mean_p.iter_mut().zip(pred.row(i)) {
            *m += v;
        }
        for (m, v) in mean_t.iter_mut().zip(truth.row(i)) {
            *m += v;
        }
    }
    for m in mean_p.iter_mut().chain(mean_t.iter_mut()) {
        *m /= n as f64;
    }
    let mut sxy = vec![0.0; cols];
    let mut sxx = vec![0.0; cols];
    let mut syy = vec![0.0; cols];
    for i in 0..n {
        for (j, (p, t)) in pred.row(i).iter().zip(truth.row(i)).enumerate() {
            let dp = p - mean_p[j];
            let dt = t - mean_t[j];
            sxy[j] += dp * dt;
            sxx[j] += dp * dp;
            syy[j] += dt * dt;
        }
    }
    let mut r = Vec::with_capacity(cols);
    let mut degenerate = Vec::new();
    for j in 0..cols {
        if sxx[j] == 0.0 || syy[j] == 0.0 {
            degenerate.push(j);
            r.push(0.0);
        } else {
            r.push((sxy[j] / (sxx[j].sqrt() * syy[j].sqrt())).clamp(-1.0, 1.0));
        }
    }
    Ok(VoxelCorrelations { r, degenerate })
}

/// Result of per-session normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub responses: Matrix,
    /// `(session, voxel)` blocks with zero variance, set to zero.
    pub zero_variance: Vec<(u32, usize)>,
}

/// Z-scores every `(session, voxel)` block with the population standard deviation.
pub fn normalize_per_session(raw: &Matrix, session_ids: &[u32]) -> Result<Normalized, EncoderError> {
    if session_ids.len() != raw.rows() {
        return Err(EncoderError::ShapeMismatch(format!(
            "{} session ids for {} response rows",
            session_ids.len(),
            raw.rows()
        )));
    }
    let mut sessions: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &s) in session_ids.iter().enumerate() {
        sessions.entry(s).or_default().push(i);
    }
    if let Some((&s, rows)) = sessions.iter().find(|(_, rows)| rows.len() < 2) {
        return Err(EncoderError::SessionTooSmall {
            session: s,
            samples: rows.len(),
        });
    }
    let cols = raw.cols();
    let mut out = raw.clone();
    let mut zero_variance = Vec::new();
    for (&s, rows) in &sessions {
        let n = rows.len() as f64;
        for v in 0..cols {
            let mean = rows.iter().map(|&i| raw.get(i, v)).sum::<f64>() / n;
            let var = rows.iter().map(|&i| (raw.get(i, v) - mean).powi(2)).sum::<f64>() / n;
            if var == 0.0 {
                zero_variance.push((s, v));
                for &i in rows {
                    out.set(i, v, 0.0);
                }
                continue;
            }
            let sd = var.sqrt();
            for &i in rows {
                out.set(i, v, (raw.get(i, v) - mean) / sd);
            }
        }
    }
    Ok(Normalized {
        responses: out,
        zero_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    /// Single-pass textbook formula, independent of the centred two-pass code.
    fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn perfect_correlations() {
        let r = pearson_per_voxel(&col(&[1.0, 2.0, 3.0]), &col(&[2.0, 4.0, 6.0])).unwrap();
        assert!((r.r[0] - 1.0).abs() < 1e-15);
        let r = pearson_per_voxel(&col(&[1.0, 2.0, 3.0]), &col(&[6.0, 4.0, 2.0])).unwrap();
        assert!((r.r[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_textbook_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let p: Vec<f64> = (0..250).map(|_| rng.random_range(-2.0..2.0)).collect();
        let t: Vec<f64> = (0..250).map(|_| rng.random_range(-2.0..2.0)).collect();
        let pm = Matrix::new(50, 5, p).unwrap();
        let tm = Matrix::new(50, 5, t).unwrap();
        let r = pearson_per_voxel(&pm, &tm).unwrap();
        for j in 0..5 {
            let x: Vec<f64> = pm.column(j).collect();
            let y: Vec<f64> = tm.column(j).collect();
            assert!((r.r[j] - textbook_pearson(&x, &y)).abs() < 1e-12);
        }
        assert!(!r.has_warnings());
    }

    #[test]
    fn constant_column_flagged() {
        let r = pearson_per_voxel(&col(&[1.0, 1.0, 1.0]), &col(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(r.r, vec![0.0]);
        assert_eq!(r.degenerate, vec![0]);
    }

    #[test]
    fn needs_two_samples() {
        assert_eq!(
            pearson_per_voxel(&col(&[1.0]), &col(&[1.0])).unwrap_err(),
            EncoderError::TooFewSamples { needed: 2, actual: 1 }
        );
        assert!(pearson_per_voxel(&col(&[1.0, 2.0]), &col(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn two_point_block() {
        let n = normalize_per_session(&col(&[1.0, 3.0]), &[0, 0]).unwrap();
        assert_eq!(n.responses.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn normalization_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw = Matrix::new(12, 3, (0..36).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        let ids: Vec<u32> = (0..12).map(|i| i / 6).collect();
        let once = normalize_per_session(&raw, &ids).unwrap().responses;
        let twice = normalize_per_session(&once, &ids).unwrap().responses;
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sessions_with_different_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut data = Vec::new();
        let mut ids = Vec::new();
        for i in 0..40 {
            let (scale, offset) = if i < 20 { (1.0, 0.0) } else { (100.0, -30.0) };
            data.push(offset + scale * rng.random_range(-1.0..1.0));
            data.push(offset + scale * rng.random_range(0.0..3.0));
            ids.push(if i < 20 { 7 } else { 9 });
        }
        let raw = Matrix::new(40, 2, data).unwrap();
        let n = normalize_per_session(&raw, &ids).unwrap();
        for block in [0..20, 20..40] {
            for v in 0..2 {
                let xs: Vec<f64> = block.clone().map(|i| n.responses.get(i, v)).collect();
                let m = xs.iter().sum::<f64>() / 20.0;
                let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 20.0;
                assert!(m.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_sample_session_rejected() {
        let err = normalize_per_session(&col(&[1.0, 2.0, 3.0]), &[0, 0, 1]).unwrap_err();
        assert_eq!(err, EncoderError::SessionTooSmall { session: 1, samples: 1 });
    }

    #[test]
    fn zero_variance_block_zeroed() {
        let n = normalize_per_session(&col(&[4.0, 4.0, 1.0, 2.0]), &[0, 0, 1, 1]).unwrap();
        assert_eq!(n.responses.as_slice(), &[0.0, 0.0, -1.0, 1.0]);
        assert_eq!(n.zero_variance, vec![(0, 0)]);
    }

    proptest! {
        #[test]
        fn pearson_affine_invariance(
            xs in proptest::collection::vec(-10.0f64..10.0, 3..40),
            a in 0.1f64..10.0,
            b in -10.0f64..10.0,
            seed in any::<u64>(),
        ) {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
            prop_assume!(sd > 0.1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ys: Vec<f64> = xs.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let base = pearson_per_voxel(&col(&xs), &col(&ys)).unwrap();
            prop_assume!(base.degenerate.is_empty());
            let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let moved = pearson_per_voxel(&col(&scaled), &col(&ys)).unwrap();
            prop_assert!((base.r[0] - moved.r[0]).abs() < 1e-12, "{} vs {}", base.r[0], moved.r[0]);
        }
    }
}
