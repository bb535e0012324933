//! Experiment orchestration for the masked diffusion lab: run configuration,
//! the training and evaluation phases, heatmap and ablation emitters and
//! cross-run reports.

pub mod config;
pub mod lab;
pub mod report;
pub mod table;

pub use config::{AblationAxis, AblationGrid, DataConfig, HeatmapConfig, Phase, RunConfig, CONFIG_VERSION};
pub use lab::{EvalReport, HeatmapStats, HeatmapVariant, Lab, RlSummary, SupervisedSummary};
pub use report::{compare_report, CompareReport, ReportError, RunSummary, Tally};
pub use table::Table;
