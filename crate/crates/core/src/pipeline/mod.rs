//! Configuration, synthetic data, the `cgad` subcommands and SVG reports.

mod commands;
mod config;
pub mod svg;
mod synth;

pub use commands::{
    cmd_build_graph, cmd_detect, cmd_evaluate, cmd_report, cmd_synth, cmd_train, DetectOutput, GraphOutput,
};
pub use config::{Calibration, DataConfig, PipelineConfig, ReportConfig, ScoringConfig, OUT_DIR_ENV};
pub use synth::{Anomaly, Coupling, SyntheticData, SyntheticSpec};
