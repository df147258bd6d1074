//! The objective language: parse, compile against an atlas, evaluate the loss
//! and its cotangent on a response vector.

use nvolve::objective::{parse_objective, region_means, NeuralObjective, RoiAtlas};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let atlas = RoiAtlas::from_text("# toy atlas\nFFA: 0,1\nPPA: 2,3\nEBA: 1,4\n")?;
    let response = [2.0, 1.0, 0.5, -0.5, 3.0];
    println!("region means {:?}", region_means(&atlas, &response)?);

    for text in ["+FFA", "+FFA -PPA:0.5", "+FFA:2 +EBA", "-PPA"] {
        let obj = NeuralObjective::from_text(text, &atlas, response.len())?;
        println!(
            "{:<14} canonical {:<18} loss {:>7.3}  cotangent {:?}",
            text,
            obj.text(),
            obj.loss(&response)?,
            obj.loss_cotangent(&response)?
        );
    }

    // Errors point at the offending byte.
    for bad in ["FFA", "+FFA:0", "+FFA -", "+FFA:1.2.3"] {
        match parse_objective(bad) {
            Err(e) => println!("{bad:<12} -> {e}"),
            Ok(t) => println!("{bad:<12} -> parsed {t:?}"),
        }
    }
    if let Err(e) = NeuralObjective::from_text("+V1", &atlas, response.len()) {
        println!("+V1          -> {e}");
    }
    Ok(())
}
