//! Anomaly tests for new epidemics.
//!
//! A new excess vector is scored by its negative log-likelihood under a
//! fitted model. Cutoffs come from simulation: datasets are drawn from the
//! fitted model, the model is refit on all but the last vector of each, and
//! the NLL of the held-out vector is recorded. The empirical `1 - s`
//! quantile of those NLLs is the cutoff at significance level `s`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mvgp::{fit_mvgp_with, ExcessVector, FitOptions, GeneratorFamily, GpDensity, Submodel};
use crate::simulate::{sample_datasets, SimulationConfig};
use crate::stats::empirical_quantile;

pub const DEFAULT_LEVELS: [f64; 4] = [0.10, 0.05, 0.01, 0.001];

/// `-log h(x)` under the standard-form model.
pub fn nll_at(family: &GeneratorFamily, x: &ExcessVector) -> Result<f64> {
    Ok(-GpDensity::new(*family)?.log_density(x)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyConfig {
    /// `n_vectors` is the training size plus the one held-out vector.
    pub simulation: SimulationConfig,
    pub levels: Vec<f64>,
    /// Calibration fails when more than this fraction of refits fail.
    pub max_failure_fraction: f64,
    pub fit: FitOptions,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        Self {
            simulation: SimulationConfig::default(),
            levels: DEFAULT_LEVELS.to_vec(),
            max_failure_fraction: 0.05,
            fit: FitOptions::anchored(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelCutoff {
    pub level: f64,
    pub cutoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyCalibration {
    /// Ordered by decreasing level, hence increasing cutoff.
    pub quantiles: Vec<LevelCutoff>,
    pub n_datasets: usize,
    pub n_failed: usize,
    pub seed: u64,
    /// Held-out NLLs of the successful refits, in dataset order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nlls: Vec<f64>,
}

impl AnomalyCalibration {
    pub fn cutoff(&self, level: f64) -> Option<f64> {
        self.quantiles.iter().find(|q| q.level == level).map(|q| q.cutoff)
    }

    pub fn from_nlls(nlls: Vec<f64>, levels: &[f64], n_datasets: usize, n_failed: usize, seed: u64) -> Result<Self> {
        let mut levels = levels.to_vec();
        if let Some(s) = levels.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
            return Err(Error::Config(format!("significance level {s} outside (0, 1)")));
        }
        levels.sort_by(|a, b| b.total_cmp(a));
        levels.dedup();
        let quantiles = levels
            .iter()
            .map(|&level| {
                Ok(LevelCutoff {
                    level,
                    cutoff: empirical_quantile(&nlls, 1.0 - level)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            quantiles,
            n_datasets,
            n_failed,
            seed,
            nlls,
        })
    }
}

/// Held-out NLL for one simulated dataset: refit on all but the last
/// vector, starting from the generating model.
fn held_out_nll(family: &GeneratorFamily, data: &[ExcessVector], opts: &FitOptions) -> Result<f64> {
    let (train, test) = data.split_at(data.len() - 1);
    let fit = fit_mvgp_with(train, family.kind(), Submodel::M1, opts, &[(family.alpha(), family.beta())])?;
    nll_at(&fit.model.family, &test[0])
}

/// Simulation-calibrated NLL cutoffs for `family`.
pub fn calibrate(family: &GeneratorFamily, config: &AnomalyConfig) -> Result<AnomalyCalibration> {
    if config.simulation.n_vectors < 11 {
        return Err(Error::Config(format!(
            "calibration needs at least 10 training vectors plus one held out, got {}",
            config.simulation.n_vectors
        )));
    }
    let datasets = sample_datasets(family, &config.simulation)?;
    let results: Vec<Result<f64>> = datasets
        .par_iter()
        .enumerate()
        .map(|(i, data)| {
            let mut opts = config.fit;
            opts.multi_start.seed = config.simulation.seed.wrapping_add(i as u64);
            held_out_nll(family, data, &opts)
        })
        .collect();
    let n = results.len();
    let mut nlls = Vec::with_capacity(n);
    let mut failed = 0;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => nlls.push(v),
            Err(e) => {
                log::warn!("calibration dataset {i} dropped: {e}");
                failed += 1;
            }
        }
    }
    if failed as f64 > config.max_failure_fraction * n as f64 {
        return Err(Error::Calibration(format!(
            "{failed} of {n} refits failed (limit {:.1}%)",
            100.0 * config.max_failure_fraction
        )));
    }
    AnomalyCalibration::from_nlls(nlls, &config.levels, n, failed, config.simulation.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyTest {
    pub nll: f64,
    pub flagged_levels: Vec<f64>,
}

/// Levels whose cutoff `nll` exceeds.
pub fn flagged_levels(calibration: &AnomalyCalibration, nll: f64) -> Vec<f64> {
    calibration
        .quantiles
        .iter()
        .filter(|q| nll > q.cutoff)
        .map(|q| q.level)
        .collect()
}

pub fn test_anomaly(family: &GeneratorFamily, calibration: &AnomalyCalibration, x: &ExcessVector) -> Result<AnomalyTest> {
    let nll = nll_at(family, x)?;
    Ok(AnomalyTest {
        nll,
        flagged_levels: flagged_levels(calibration, nll),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooNll {
    pub index: usize,
    pub nll: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// For each vector, the NLL at it of the model fitted to the others.
/// Per-index failures are reported in place.
pub fn leave_one_out_nll(
    vectors: &[ExcessVector],
    family: &GeneratorFamily,
    opts: &FitOptions,
) -> Result<Vec<LooNll>> {
    if vectors.len() < 11 {
        return Err(Error::domain(format!(
            "leave-one-out needs at least 11 vectors, got {}",
            vectors.len()
        )));
    }
    let anchor = [(family.alpha(), family.beta())];
    Ok((0..vectors.len())
        .into_par_iter()
        .map(|index| {
            let rest: Vec<ExcessVector> = vectors
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != index)
                .map(|(_, v)| *v)
                .collect();
            let r = fit_mvgp_with(&rest, family.kind(), Submodel::M1, opts, &anchor)
                .and_then(|fit| nll_at(&fit.model.family, &vectors[index]));
            match r {
                Ok(nll) => LooNll {
                    index,
                    nll: Some(nll),
                    error: None,
                },
                Err(e) => LooNll {
                    index,
                    nll: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}
