//! Grid and flat views of an embedding, plus the geometry helpers used by
//! the optimizer and the evaluation code.

use nvolve::embedding::{Embedding, EmbeddingShape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
    let e = Embedding::from_grid(&grid)?;
    println!("shape {} -> flat {:?}", e.shape(), e.as_flat());
    for (t, row) in e.rows().enumerate() {
        println!("  token {t}: {row:?}");
    }
    assert_eq!(e.to_grid(), grid.map(|r| r.to_vec()).to_vec());

    // Wrong lengths are rejected rather than reshaped.
    let shape = EmbeddingShape::new(2, 3)?;
    match Embedding::from_flat(shape, vec![0.0; 5]) {
        Err(err) => println!("from_flat with 5 values: {err}"),
        Ok(_) => unreachable!(),
    }

    // Start points are seeded standard-normal draws.
    let q0 = Embedding::random(EmbeddingShape::QFORMER, 7);
    let u: Vec<f64> = (0..q0.as_flat().len()).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
    println!(
        "random {}: mean {:.4}, norm {:.2}, cosine with e_0 {:.4}",
        q0.shape(),
        q0.mean(),
        q0.norm(),
        q0.cosine(&u)
    );
    Ok(())
}
