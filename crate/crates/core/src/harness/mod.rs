//! Experiment orchestration behind the `fedq` command line.

pub mod manifest;
pub mod maps;
pub mod output;
pub mod qstar;
pub mod runner;

pub use manifest::{MapSource, RunManifest, SweepAxes, OUTPUT_ROOT_ENV};
pub use qstar::{compute_qstar, QStar};
pub use runner::{export_qstar, run_experiment, slug, theory_overlay, RunReport};
