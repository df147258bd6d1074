//! Drive one region's predicted response up from a random start and pick
//! intermediate embeddings at fixed fractions of the total improvement.
//!
//! `cargo run --release --example maximize_region`

use nvolve::embedding::{Embedding, EmbeddingShape};
use nvolve::encoder::{train, EncoderArchitecture, TrainConfig};
use nvolve::objective::NeuralObjective;
use nvolve::optimize::{optimize_tracking, OptimizeConfig, DEFAULT_FRACTIONS};
use nvolve::synthetic::{SubjectSpec, SyntheticSubject};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let shape = EmbeddingShape::new(4, 16)?;
    let subject = SyntheticSubject::generate(SubjectSpec::new(shape, &[("FFA", 7), ("PPA", 7), ("EBA", 6)], 1))?;
    let (train_set, val_set) = subject.make_dataset(1000, 4, 2)?.split_at(900)?;
    let arch = EncoderArchitecture::new(shape.len(), vec![256, 128, 64], subject.n_voxels())?;
    let (model, _) = train(&train_set, &val_set, &arch, &TrainConfig::default())?;

    let obj = NeuralObjective::from_text("+FFA", subject.atlas(), subject.n_voxels())?;
    let q0 = Embedding::random(shape, 0);
    let traj = optimize_tracking(&model, &obj, subject.atlas(), &q0, &OptimizeConfig::default())?;

    let u = subject.direction("FFA").expect("planted direction");
    println!("objective {}: {} recorded points", traj.objective(), traj.points().len());
    println!("  initial loss {:.4}, best {:.4} at step {}", traj.initial().loss, traj.best().loss, traj.best().step);
    println!("  cosine to planted FFA direction: start {:.3}", q0.cosine(u));
    for s in traj.sample_at_fractions(&DEFAULT_FRACTIONS)? {
        let p = traj.point_at(s.step).expect("sampled step is recorded");
        println!(
            "  {:>4.0}% progress -> step {:3}: FFA {:7.3}  PPA {:6.3}  EBA {:6.3}  cosine {:.3}",
            s.fraction * 100.0,
            s.step,
            p.region_means["FFA"],
            p.region_means["PPA"],
            p.region_means["EBA"],
            s.embedding.cosine(u)
        );
    }
    Ok(())
}
