//! Combined objectives: raise two regions together, or raise one while
//! pushing another down.
//!
//! `cargo run --release --example curated_objectives`

use nvolve::embedding::{Embedding, EmbeddingShape};
use nvolve::encoder::{train, EncoderArchitecture, TrainConfig};
use nvolve::objective::NeuralObjective;
use nvolve::optimize::{optimize_tracking, OptimizeConfig};
use nvolve::synthetic::{SubjectSpec, SyntheticSubject};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let shape = EmbeddingShape::new(4, 16)?;
    let subject = SyntheticSubject::generate(SubjectSpec::new(shape, &[("FFA", 7), ("PPA", 7), ("EBA", 6)], 3))?;
    let (train_set, val_set) = subject.make_dataset(1000, 4, 4)?.split_at(900)?;
    let arch = EncoderArchitecture::new(shape.len(), vec![256, 128, 64], subject.n_voxels())?;
    let (model, _) = train(&train_set, &val_set, &arch, &TrainConfig::default())?;

    for text in ["+FFA +PPA", "+FFA -PPA", "+PPA -EBA:0.5"] {
        let obj = NeuralObjective::from_text(text, subject.atlas(), subject.n_voxels())?;
        println!("{text}");
        for seed in 0..3 {
            let q0 = Embedding::random(shape, seed);
            let traj = optimize_tracking(&model, &obj, subject.atlas(), &q0, &OptimizeConfig { seed, ..Default::default() })?;
            let (a, b) = (&traj.initial().region_means, &traj.last().region_means);
            let fmt = |r: &str| format!("{r} {:+.2} -> {:+.2}", a[r], b[r]);
            println!("  seed {seed}: {} | {} | {}", fmt("FFA"), fmt("PPA"), fmt("EBA"));
        }
    }
    Ok(())
}
