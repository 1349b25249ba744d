//! Extreme-value models for weekly surveillance series.
//!
//! The crate covers the full chain from a weekly incidence series to
//! real-time statements about an ongoing epidemic:
//!
//! * [`ingest`] parses series and segments them into epidemics;
//! * [`unigp`] fits univariate generalized Pareto tails and return levels;
//! * [`mvgp`] fits three-dimensional GP models to (week 1, week 2, target)
//!   excess vectors;
//! * [`predict`] turns a fitted model into conditional exceedance
//!   probabilities;
//! * [`simulate`], [`anomaly`] and [`assess`] provide sampling,
//!   simulation-calibrated anomaly tests and prediction scoring.

// `!(x > 0.0)` guards deliberately reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anomaly;
pub mod assess;
pub mod error;
pub mod ingest;
pub mod mvgp;
pub mod optim;
pub mod predict;
pub mod quad;
pub mod simulate;
pub mod unigp;
pub mod stats;

pub use error::{Error, Result};
