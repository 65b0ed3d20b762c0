//! Experiment configuration, Monte-Carlo execution and output files.

pub mod config;
mod output;
mod plot;
pub mod presets;
mod run;

pub use config::{
    load_config, AlgorithmKind, AlgorithmSpec, ExperimentConfig, InstanceSpec, OfflineDesign,
};
pub use output::{
    read_results_csv, summarize, write_outputs, write_results_csv, Summary, SummaryEntry,
};
pub use plot::{emit_plots, PlotKind};
pub use presets::{preset, PRESET_NAMES};
pub use run::{run_experiment, trial_seed, ResultRow, ResultsTable, TrialDetail};
