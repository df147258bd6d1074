//! Synthesize a subject with planted region structure, train the encoding
//! head on it, and report held-out correlation.
//!
//! `cargo run --release --example train_encoder`

use nvolve::embedding::EmbeddingShape;
use nvolve::encoder::{mean_pearson, train_with_observer, EncoderArchitecture, TrainConfig};
use nvolve::synthetic::{SubjectSpec, SyntheticSubject};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let shape = EmbeddingShape::new(4, 16)?;
    let subject = SyntheticSubject::generate(SubjectSpec::new(shape, &[("FFA", 7), ("PPA", 7), ("EBA", 6)], 1))?;
    println!("subject: {} voxels, atlas:\n{}", subject.n_voxels(), subject.atlas().to_text());

    // Four sessions, each z-scored on its own, then a 900/100 split.
    let data = subject.make_dataset(1000, 4, 2)?;
    let (train_set, val_set) = data.split_at(900)?;

    let arch = EncoderArchitecture::new(shape.len(), vec![256, 128, 64], subject.n_voxels())?;
    println!("architecture {:?}: {} parameters", arch.layer_dims(), arch.parameter_count());
    let cfg = TrainConfig::default();
    let (model, log) = train_with_observer(&train_set, &val_set, &arch, &cfg, |e| {
        if e.epoch % 10 == 0 {
            println!("  epoch {:2}: train mse {:.4}, val mean R {:.4}", e.epoch, e.train_mse, e.val_mean_r);
        }
    })?;
    println!(
        "best epoch {} of {}, val mean R {:.4}",
        log.best_epoch,
        log.epochs.len(),
        mean_pearson(&model, &val_set)?
    );
    Ok(())
}
