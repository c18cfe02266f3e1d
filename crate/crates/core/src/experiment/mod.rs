//! Experiment harness: config, repeated cross-validation, report comparison.

mod compare;
mod config;
mod runner;

pub use compare::{compare, Comparison, MethodRow, PairRow};
pub use config::{
    DataConfig, EnsembleConfig, ExperimentConfig, Method, SelectionConfig, SplitConfig, SplitScheme, WindowingConfig,
};
pub use runner::{
    default_out_dir, generate, load_data, run, trace_file_name, RunManifest, MANIFEST_FILE, METRICS_FILE, REPORT_FILE,
};
