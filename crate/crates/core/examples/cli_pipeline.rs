//! The full command-line pipeline run in-process: synth, train, optimize,
//! sample, eval, export. The same arguments work with the `nvolve` binary.
//!
//! `cargo run --release --example cli_pipeline -- [WORK_DIR]`

use std::path::PathBuf;

fn nvolve(args: &[&str]) {
    println!("$ nvolve {}", args.join(" "));
    let code = nvolve::cli::run(std::iter::once("nvolve").chain(args.iter().copied()));
    assert_eq!(code, 0, "command failed");
}

fn main() {
    let work: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("nvolve-pipeline"), PathBuf::from);
    let w = |p: &str| work.join(p).display().to_string();
    let (data, model, opt, eval, export) = (w("data"), w("model"), w("opt"), w("eval"), w("export"));
    let atlas = w("data/atlas.txt");

    nvolve(&["synth", "--regions", "FFA:7,PPA:7,EBA:6", "--samples", "1000", "--seed", "1", "--out", &data]);
    nvolve(&["train", "--data", &data, "--out", &model]);
    nvolve(&["optimize", "--model", &model, "--atlas", &atlas, "--objective", "+FFA -PPA:0.5", "--runs", "20", "--out", &opt]);
    nvolve(&["sample", "--trajectory", &w("opt/seed_0")]);
    let generated: Vec<String> = (0..20).map(|s| w(&format!("opt/seed_{s}"))).collect();
    let mut eval_args = vec!["eval", "--model", &model, "--atlas", &atlas, "--region", "FFA,PPA", "--k", "20", "--plot", "--out", &eval, "--generated"];
    eval_args.extend(generated.iter().map(String::as_str));
    nvolve(&eval_args);
    nvolve(&["export", "--trajectory", &w("opt/seed_0"), "--out", &export]);
}
