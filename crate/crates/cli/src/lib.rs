//! Experiment harness for modulo-sampling recovery: dataset generation,
//! network training, method comparison and the two-band case study.

pub mod config;
pub mod error;
pub mod harness;
pub mod metrics;

pub use config::{ExperimentConfig, Method, Mode, TrainingGrid};
pub use error::{HarnessError, Result};
pub use harness::{
    cells, classical_baseline, make_datasets, prepare, recover_samples, run_case_study, run_recovery_bench,
    train_all, train_cell, Baseline, Cell, Level, Recoverer, Split, TrainReport,
};
pub use metrics::{Band, MetricsRecord};
