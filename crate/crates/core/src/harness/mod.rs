//! Synthetic benchmark, file formats, configuration and the drivers behind the CLI.

pub mod ablate;
pub mod bench;
pub mod config;
pub mod gradcheck;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use config::RunConfig;
pub use synth::{gen_synth, SynthConfig, SynthData};
