//! NVTF tensors, encoder checkpoints and trajectory directories.

use nvolve::embedding::{Embedding, EmbeddingShape};
use nvolve::encoder::{EncoderArchitecture, EncoderModel};
use nvolve::objective::{NeuralObjective, RoiAtlas};
use nvolve::optimize::{optimize, OptimizeConfig};
use nvolve::persist::{
    export_trajectory, import_trajectory, load_checkpoint, read_tensor, save_checkpoint, write_tensor, CheckpointMeta,
    PersistError, Tensor,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;

    let t = Tensor::f64(&[2], vec![1.5, -2.0])?;
    let p = dir.path().join("pair.nvtf");
    write_tensor(&p, &t)?;
    println!("{} bytes on disk: {:02x?}", std::fs::metadata(&p)?.len(), std::fs::read(&p)?);
    assert_eq!(read_tensor(&p)?, t);

    std::fs::write(&p, b"XXXX\x01\0\0\0")?;
    if let Err(e) = read_tensor(&p) {
        assert!(matches!(e.root(), PersistError::BadMagic(_)));
        println!("corrupted file: {e}");
    }

    let shape = EmbeddingShape::new(2, 4)?;
    let arch = EncoderArchitecture::new(shape.len(), vec![16], 3)?;
    let model = EncoderModel::init(arch.clone(), 5)?;
    let ckpt = dir.path().join("encoder");
    save_checkpoint(&ckpt, &model, &CheckpointMeta::new(shape, arch), None)?;
    let (back, _) = load_checkpoint(&ckpt)?;
    let q = Embedding::random(shape, 1);
    assert_eq!(back.predict(&q)?, model.predict(&q)?);
    println!("checkpoint: {}", std::fs::read_to_string(ckpt.join("checkpoint.toml"))?);

    let atlas = RoiAtlas::new([("A", vec![0, 1]), ("B", vec![2])])?;
    let obj = NeuralObjective::from_text("+A -B:0.5", &atlas, 3)?;
    let traj = optimize(&model, &obj, &q, &OptimizeConfig { steps: 3, ..Default::default() })?;
    let tdir = dir.path().join("trajectory");
    export_trajectory(&traj, &tdir)?;
    assert_eq!(import_trajectory(&tdir)?, traj);
    let mut files: Vec<_> = std::fs::read_dir(&tdir)?.map(|e| e.map(|e| e.file_name())).collect::<Result<_, _>>()?;
    files.sort();
    println!("trajectory directory: {files:?}");
    Ok(())
}
