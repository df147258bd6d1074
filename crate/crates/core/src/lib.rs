pub mod adam;
pub mod cli;
pub mod embedding;
pub mod encoder;
pub mod eval;
pub mod matrix;
pub mod objective;
pub mod optimize;
pub mod persist;
mod rng;
pub mod synthetic;
