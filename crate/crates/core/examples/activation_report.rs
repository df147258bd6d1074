//! Compare predicted activations of a random pool, its top k, and the top k
//! optimized embeddings; write the CSV and SVG reports. A second encoder
//! trained with another seed rescores the same embeddings.
//!
//! `cargo run --release --example activation_report -- [OUT_DIR]`

use std::path::PathBuf;

use nvolve::embedding::{Embedding, EmbeddingShape};
use nvolve::encoder::{train, EncoderArchitecture, TrainConfig};
use nvolve::eval::{activation_report, emit_report, ReportFormat};
use nvolve::objective::NeuralObjective;
use nvolve::optimize::{optimize_many, OptimizeConfig};
use nvolve::synthetic::{SubjectSpec, SyntheticSubject};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("nvolve-report"), PathBuf::from);
    let shape = EmbeddingShape::new(4, 16)?;
    let subject = SyntheticSubject::generate(SubjectSpec::new(shape, &[("FFA", 7), ("PPA", 7), ("EBA", 6)], 1))?;
    let (train_set, val_set) = subject.make_dataset(1000, 4, 2)?.split_at(900)?;
    let arch = EncoderArchitecture::new(shape.len(), vec![256, 128, 64], subject.n_voxels())?;
    let (model, _) = train(&train_set, &val_set, &arch, &TrainConfig::default())?;
    let (held_out, _) = train(&train_set, &val_set, &arch, &TrainConfig { seed: 1, ..Default::default() })?;

    let pool = Embedding::random_pool(shape, 1000, 99);
    let starts: Vec<Embedding> = (0..20).map(|s| Embedding::random(shape, s)).collect();
    let mut reports = Vec::new();
    for region in ["FFA", "PPA", "EBA"] {
        let obj = NeuralObjective::from_text(&format!("+{region}"), subject.atlas(), subject.n_voxels())?;
        let generated = optimize_many(&model, &obj, None, &starts, &OptimizeConfig::default())
            .into_iter()
            .map(|t| t.map(|t| t.best().embedding.clone().expect("best step is recorded")))
            .collect::<Result<Vec<_>, _>>()?;
        let r = activation_report(&model, subject.atlas(), region, &pool, &generated, 20)?;
        println!(
            "{region}: pool median {:.3}, top-20 pool [{:.3}, {:.3}], generated [{:.3}, {:.3}]",
            r.pool.median, r.top_pool.min, r.top_pool.max, r.generated.min, r.generated.max
        );
        let h = activation_report(&held_out, subject.atlas(), region, &pool, &generated, 20)?;
        println!(
            "{region} (held-out encoder): top-20 pool max {:.3}, generated min {:.3}",
            h.top_pool.max, h.generated.min
        );
        reports.push(r);
    }
    std::fs::create_dir_all(&out)?;
    emit_report(&reports, &out.join("report.csv"), ReportFormat::Csv)?;
    emit_report(&reports, &out.join("report.svg"), ReportFormat::Svg)?;
    println!("wrote {}/report.{{csv,svg}}", out.display());
    Ok(())
}
