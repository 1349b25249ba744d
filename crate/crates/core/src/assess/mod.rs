//! Scoring of exceedance predictions.
//!
//! Standardized Brier scores, precision–recall curves and average
//! precision, a logistic-regression baseline, and two harnesses that
//! produce prediction records: leave-one-out on observed epidemics and
//! refit-and-predict on data simulated from a known model.

mod harness;
mod logistic;
mod scores;

pub use harness::{
    loo_assess, sim_assess, Assessment, FoldFailure, LevelSummary, LooConfig, QuartileRow, SimAssessConfig,
    SourceScore, DEFAULT_KAPPAS,
};
pub use logistic::{fit_logistic, predict_logistic, LogisticModel};
pub use scores::{
    average_precision, brier_standardized, confusion_at, pr_curve, Confusion, PrPoint, PredictionRecord,
    PredictionSource,
};
