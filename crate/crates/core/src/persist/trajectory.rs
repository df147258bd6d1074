//! Trajectory directories: `trajectory.toml` plus one `step_NNNNNN.nvtf` per
//! recorded embedding.
//!
//! ```toml
//! objective = "+FFA:1 -PPA:0.5"
//!
//! [config]
//! steps = 300
//! learning_rate = 0.01
//! ...
//!
//! [[points]]
//! step = 0
//! loss = -0.12
//! best_loss = -0.12
//! embedding = "step_000000.nvtf"
//!
//! [points.region_means]
//! FFA = 0.12
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor::{read_embedding, write_embedding};
use super::{create_dir, from_toml, read_text, to_toml, write_atomic, PersistError};
use crate::optimize::{OptimizeConfig, Trajectory, TrajectoryError, TrajectoryPoint};

pub const TRAJECTORY_MANIFEST: &str = "trajectory.toml";

#[derive(Serialize, Deserialize)]
struct Manifest {
    objective: String,
    config: OptimizeConfig,
    points: Vec<PointRecord>,
}

#[derive(Serialize, Deserialize)]
struct PointRecord {
    step: usize,
    loss: f64,
    best_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<String>,
    #[serde(default)]
    region_means: BTreeMap<String, f64>,
}

/// File name of the embedding recorded at `step`.
pub fn step_file(step: usize) -> String {
    format!("step_{step:06}.nvtf")
}

/// Writes the manifest and one tensor per recorded embedding into `dir`.
pub fn export_trajectory(traj: &Trajectory, dir: &Path) -> Result<PathBuf, PersistError> {
    create_dir(dir)?;
    let mut points = Vec::with_capacity(traj.points().len());
    for (p, &best) in traj.points().iter().zip(traj.best_loss_so_far()) {
        let embedding = match &p.embedding {
            Some(e) => {
                let name = step_file(p.step);
                write_embedding(&dir.join(&name), e)?;
                Some(name)
            }
            None => None,
        };
        points.push(PointRecord {
            step: p.step,
            loss: p.loss,
            best_loss: best,
            embedding,
            region_means: p.region_means.clone(),
        });
    }
    let manifest = Manifest {
        objective: traj.objective().to_string(),
        config: *traj.config(),
        points,
    };
    let path = dir.join(TRAJECTORY_MANIFEST);
    write_atomic(&path, to_toml(&manifest)?.as_bytes())?;
    Ok(path)
}

pub fn import_trajectory(dir: &Path) -> Result<Trajectory, PersistError> {
    let path = dir.join(TRAJECTORY_MANIFEST);
    let manifest: Manifest = from_toml(&path, &read_text(&path)?)?;
    let mut points = Vec::with_capacity(manifest.points.len());
    for rec in manifest.points {
        let embedding = match rec.embedding {
            Some(name) => {
                let file = dir.join(&name);
                if Path::new(&name).is_absolute() || !file.is_file() {
                    return Err(PersistError::DanglingReference(file).at(&path));
                }
                Some(read_embedding(&file)?)
            }
            None => None,
        };
        points.push(TrajectoryPoint {
            step: rec.step,
            embedding,
            loss: rec.loss,
            region_means: rec.region_means,
        });
    }
    Trajectory::from_points(manifest.config, manifest.objective, points).map_err(|e| {
        match e {
            TrajectoryError::NonMonotoneSteps { previous, found } => {
                PersistError::NonMonotoneSteps { previous, found }
            }
            other => PersistError::Metadata(other.to_string()),
        }
        .at(&path)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Embedding, EmbeddingShape};

    fn traj(steps: &[usize]) -> Trajectory {
        let shape = EmbeddingShape::new(2, 3).unwrap();
        let points = steps
            .iter()
            .enumerate()
            .map(|(i, &step)| TrajectoryPoint {
                step,
                embedding: Some(Embedding::random(shape, step as u64)),
                loss: -(i as f64) * 0.37,
                region_means: BTreeMap::from([("FFA".to_string(), i as f64 * 0.37)]),
            })
            .collect();
        Trajectory::from_points(OptimizeConfig::default(), "+FFA:1", points).unwrap()
    }

    #[test]
    fn four_points_four_files() {
        let dir = tempfile::tempdir().unwrap();
        let t = traj(&[0, 1, 2, 3]);
        export_trajectory(&t, dir.path()).unwrap();
        let n = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(n, 5);
        assert_eq!(import_trajectory(dir.path()).unwrap(), t);
    }

    #[test]
    fn unrecorded_points_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = traj(&[0, 5, 10]);
        let mut pts = t.points().to_vec();
        pts[1].embedding = None;
        t = Trajectory::from_points(*t.config(), t.objective(), pts).unwrap();
        export_trajectory(&t, dir.path()).unwrap();
        assert!(!dir.path().join("step_000005.nvtf").exists());
        assert_eq!(import_trajectory(dir.path()).unwrap(), t);
    }

    #[test]
    fn deleted_file_is_dangling() {
        let dir = tempfile::tempdir().unwrap();
        export_trajectory(&traj(&[0, 1]), dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("step_000001.nvtf")).unwrap();
        let e = import_trajectory(dir.path()).unwrap_err();
        assert_eq!(e.root(), &PersistError::DanglingReference(dir.path().join("step_000001.nvtf")));
    }

    #[test]
    fn non_monotone_manifest_rejected() {
        let dir = tempfile::tempdir().unwrap();
        export_trajectory(&traj(&[0, 1, 2]), dir.path()).unwrap();
        let p = dir.path().join(TRAJECTORY_MANIFEST);
        let text = std::fs::read_to_string(&p).unwrap().replace("step = 2", "step = 1");
        std::fs::write(&p, text).unwrap();
        let e = import_trajectory(dir.path()).unwrap_err();
        assert_eq!(e.root(), &PersistError::NonMonotoneSteps { previous: 1, found: 1 });
    }
}
