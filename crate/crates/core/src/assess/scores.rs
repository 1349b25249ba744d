use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    Gp,
    Logistic,
    TrueModel,
}

impl fmt::Display for PredictionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictionSource::Gp => "gp",
            PredictionSource::Logistic => "logistic",
            PredictionSource::TrueModel => "true_model",
        })
    }
}

/// One probabilistic prediction and what happened.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    /// Held-out epidemic or simulated dataset the prediction belongs to.
    pub fold: usize,
    pub level: f64,
    pub p_hat: f64,
    pub outcome: u8,
    pub source: PredictionSource,
}

impl PredictionRecord {
    pub fn new(fold: usize, level: f64, p_hat: f64, outcome: bool, source: PredictionSource) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_hat) {
            return Err(Error::domain(format!("prediction {p_hat} outside [0, 1]")));
        }
        Ok(Self {
            fold,
            level,
            p_hat,
            outcome: outcome as u8,
            source,
        })
    }

    fn positive(&self) -> bool {
        self.outcome == 1
    }
}

/// `1 - mean((p̂ - o)²) / (p (1 - p))` with `p` the observed event rate.
///
/// 0 for a predictor that always outputs the base rate, 1 for a perfect
/// one; there is no lower bound.
pub fn brier_standardized(records: &[PredictionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedScore("no predictions".into()));
    }
    let n = records.len() as f64;
    let p = records.iter().filter(|r| r.positive()).count() as f64 / n;
    if p == 0.0 || p == 1.0 {
        return Err(Error::UndefinedScore(
            "standardized Brier score needs both outcomes".into(),
        ));
    }
    let mse = records
        .iter()
        .map(|r| (r.p_hat - r.outcome as f64).powi(2))
        .sum::<f64>()
        / n;
    Ok(1.0 - mse / (p * (1.0 - p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub cutoff: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

/// Counts with "predicted positive" meaning `p̂ ≥ cutoff`.
pub fn confusion_at(records: &[PredictionRecord], cutoff: f64) -> Confusion {
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
    };
    for r in records {
        match (r.p_hat >= cutoff, r.positive()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Precision and recall at every distinct predicted probability, from the
/// highest cutoff down.
pub fn pr_curve(records: &[PredictionRecord]) -> Result<Vec<PrPoint>> {
    let positives = records.iter().filter(|r| r.positive()).count();
    if positives == 0 {
        return Err(Error::UndefinedScore("precision-recall needs a positive outcome".into()));
    }
    let mut sorted: Vec<&PredictionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| b.p_hat.total_cmp(&a.p_hat));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let cutoff = sorted[i].p_hat;
        // Everything tied at this cutoff enters together.
        while i < sorted.len() && sorted[i].p_hat == cutoff {
            if sorted[i].positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push(PrPoint {
            cutoff,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    Ok(out)
}

/// `Σ (R_n - R_{n-1}) P_n` over the cutoff sweep of [`pr_curve`].
pub fn average_precision(records: &[PredictionRecord]) -> Result<f64> {
    let curve = pr_curve(records)?;
    let mut prev = 0.0;
    let mut ap = 0.0;
    for p in curve {
        ap += (p.recall - prev) * p.precision;
        prev = p.recall;
    }
    Ok(ap)
}
