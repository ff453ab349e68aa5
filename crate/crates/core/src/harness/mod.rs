//! Experiment orchestration: data preparation, clean and adversarial
//! metrics, the defense experiments, and CSV/JSON reports.

mod config;
mod experiments;
mod metrics;
mod report;

pub use config::{
    AttackSpec, ClassifierMode, DatasetConfig, ExperimentConfig, Preset, ReportFormat, Scaling,
    ZkTarget,
};
pub use experiments::{
    load_dataset, run_default_experiment, run_experiment, run_fragmentation_experiment,
    run_fragmentation_report, run_no_inversion_experiment, run_perfect_knowledge_experiment,
    run_zero_knowledge_experiment, train_default, train_defended, Prepared,
};
pub use metrics::{eval_adversarial, eval_default_accuracy, AttackBlock, AttackPlan, SampleOutcome};
pub use report::{
    attack_label, csv_rows, emit_report, read_report_json, report_to_string, write_csv, write_json,
    ClassifierReport, ExperimentReport, CSV_COLUMNS,
};
