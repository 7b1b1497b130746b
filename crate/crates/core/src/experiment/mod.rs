//! Configured sweeps over models, sizes and inverse temperatures.

pub mod config;
pub mod fit;
pub mod records;
pub mod run;

pub use config::{BetaSpec, BetaValue, ExperimentConfig, MethodChoice, ModelEntry, ModelFamily, OutputFormat, PRESETS};
pub use fit::{fit_scaling, ScalingFit};
pub use records::{emit_records, read_records, write_rows, BrotocRecord};
pub use run::{run_experiment, ExperimentOutput, FitRecord, RunOptions};
