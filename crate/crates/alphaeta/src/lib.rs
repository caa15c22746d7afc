//! Parallel ensembles, result files and configuration loading on top of
//! [`alphaeta_core`]. The `alphaeta` binary is a thin driver over this crate.

pub mod config;
pub mod ensemble;
mod error;
pub mod results;

pub use alphaeta_core as core;

pub use config::load_config;
pub use ensemble::{run_ensemble, EnsembleOptions, EnsembleOutput};
pub use error::{Error, Result};
pub use results::{read_results, sidecar_path, write_results, RunMetadata, CSV_HEADER};
