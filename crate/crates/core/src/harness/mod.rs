//! Experiment orchestration: main-task training, AuxUE training, deep
//! ensembles, end-to-end runs and persistence.

mod config;
mod experiment;
mod persist;
mod train;

pub use config::{
    derive_seed, AuxInput, AuxueConfig, DataConfig, ExperimentConfig, ExperimentKind, MainConfig, TrainSpec,
    DEFAULT_SEEDS, WINE_PATH,
};
pub use train::{
    ensemble_seeds, extract_features, regression_metrics, train_auxue, train_ensemble, train_main, AuxUe,
    Ensemble, MainModel, RegressionMetrics, UncertaintyOutput,
};
pub use experiment::{
    evaluate_checks, ood_kinds, prepare_tabular, run_experiment, toy_data, PreparedTabular, Check, OodResult, RunReport, ScoreMethod, SeedReport, ToyCurves, REPORT_VERSION,
    TOY_GRID,
};
pub use persist::{
    curves_csv, headline_csv, load_report, load_versioned, write_atomic, write_report, Checkpoint, Payload,
    CHECKPOINT_VERSION,
};
