//! Dataset loading, run configuration and output files.

mod config;
mod data;
mod run;

pub use config::{grid_centers, RunConfig};
pub use data::{load_csv, load_idx, parse_csv, parse_idx, standardize};
pub use run::{
    run, trajectory_csv, Command, QuantizerFile, RunOutcome, CONFIG_FILE, METRICS_FILE, QUANTIZER_FILE, TRAJECTORY_FILE,
};
