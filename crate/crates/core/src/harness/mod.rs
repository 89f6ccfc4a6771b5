//! Dataset plumbing, synthetic benchmarks, experiment orchestration and
//! report rendering.

mod data;
mod experiment;
mod report;
mod synthetic;

pub use data::{
    load_classification_tsv, read_classification_tsv, save_classification_tsv, stratified_split, tokenize,
    write_classification_tsv, ClassificationDataset, Split, SENTENCE_SEPARATOR,
};
pub use experiment::{
    build_variant, prepare_inputs, run_experiment, run_experiment_detailed, DataConfig, ExperimentConfig,
    ExperimentInputs, ExperimentOutcome, ExperimentSection, ModelConfig, OptimizerConfig, RunRecord, Variant,
};
pub use report::{emit_report, parse_report_tsv, save_report, MetricsReport, MetricsRow, Mode, ReportFormat};
pub use synthetic::{gen_synthetic, write_synthetic, SyntheticConfig, SyntheticData};

pub use crate::metrics::{macro_metrics, MacroMetrics};
