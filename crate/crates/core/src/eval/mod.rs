//! Objective reconstruction metrics and the randomized-split experiment
//! harness.
mod experiment;
mod metrics;

pub use experiment::{
    trial_seed, CellSummary, ExperimentCorpus, ExperimentReport, ExperimentSpec, TrialRecord,
};
pub use metrics::{
    kl_divergence, mse_db, normalize_or_uniform, normalize_spectrogram, relative_error_db,
    score, Scores, DB_FLOOR, KL_EPS,
};
