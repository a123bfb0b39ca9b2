//! Instance generation, experiment configs, grid runs and result files.

pub mod config;
pub mod generate;
pub mod output;
pub mod runner;
pub mod stats;
pub mod validate;

pub use config::{parse_config, ConfigError, ExperimentConfig};
pub use generate::{generate_degenerate_instance, generate_instance, ScaleSpec};
pub use output::{emit_csv, emit_manifest, parse_manifest, read_csv, Manifest};
pub use runner::{run_grid, AggregateCell};
pub use stats::fit_scaling_exponent;
