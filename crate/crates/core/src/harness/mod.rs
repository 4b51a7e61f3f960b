//! Datasets, configuration and experiment runs.

pub mod config;
pub mod data;
pub mod experiment;

pub use config::ExperimentConfig;
pub use data::{
    convert_labels, load_dataset, synthesize_dataset, synthesize_split, write_csv_dataset,
    DataFormat, LabelRule, LoadOptions, Scaling,
};
pub use experiment::{
    read_trace, run_experiment, summary_mean, write_summary, write_trace, Experiment, RunRecord,
    RunSummary,
};
