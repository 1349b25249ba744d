use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::fit_logistic;
use super::scores::{average_precision, brier_standardized, PredictionRecord, PredictionSource};
use crate::error::{Error, Result};
use crate::mvgp::{fit_mvgp_with, standardize, FamilyKind, FitOptions, MvGpModel, Submodel};
use crate::predict::{below_threshold_prob, predict_level, PredictionQuery};
use crate::simulate::{sample_datasets, unstandardize, SimulationConfig};
use crate::stats::empirical_quantile;
use crate::unigp::{fit_exponential, pot_excesses};

pub const DEFAULT_KAPPAS: [f64; 4] = [0.5, 0.75, 0.95, 1.0];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceScore {
    pub source: PredictionSource,
    pub n_predictions: usize,
    pub n_failed: usize,
    pub brier: Option<f64>,
    pub average_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSummary {
    pub kappa: f64,
    pub level: f64,
    /// Exceedances of the level among the evaluated outcomes.
    pub n_exceedances: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    pub scores: Vec<SourceScore>,
}

impl LevelSummary {
    pub fn score(&self, source: PredictionSource) -> Option<&SourceScore> {
        self.scores.iter().find(|s| s.source == source)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldFailure {
    pub fold: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<PredictionSource>,
    pub message: String,
}

/// Quartiles of predicted probabilities among records with one outcome.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuartileRow {
    pub level: f64,
    pub source: PredictionSource,
    pub outcome: u8,
    pub proportion: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assessment {
    pub levels: Vec<LevelSummary>,
    pub records: Vec<PredictionRecord>,
    pub failures: Vec<FoldFailure>,
    pub quartiles: Vec<QuartileRow>,
    /// Folds or datasets dropped entirely because the model fit failed.
    pub n_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooConfig {
    pub thresholds: [f64; 3],
    pub kappas: Vec<f64>,
    /// Base of the levels `κ × max`; defaults to the largest observed
    /// third component.
    pub historical_max: Option<f64>,
    pub family: FamilyKind,
    pub fit: FitOptions,
}

impl LooConfig {
    pub fn new(thresholds: [f64; 3]) -> Self {
        Self {
            thresholds,
            kappas: DEFAULT_KAPPAS.to_vec(),
            historical_max: None,
            family: FamilyKind::Gumbel,
            fit: FitOptions::quick(0),
        }
    }
}

/// Exponential scale of each component's excesses over its threshold.
fn exponential_scales(data: &[[f64; 3]], thresholds: &[f64; 3]) -> Result<[f64; 3]> {
    let mut scales = [0.0; 3];
    for j in 0..3 {
        let col: Vec<f64> = data.iter().map(|y| y[j]).collect();
        let pot = pot_excesses(&col, thresholds[j]);
        scales[j] = fit_exponential(&pot.excesses)?.sigma;
    }
    Ok(scales)
}

/// Margins, standardization, model fit and below-threshold probability
/// for one training set in original units.
fn fit_in_original_units(
    train: &[[f64; 3]],
    thresholds: &[f64; 3],
    family: FamilyKind,
    opts: &FitOptions,
    anchor: &[([f64; 3], [f64; 3])],
) -> Result<MvGpModel> {
    let scales = exponential_scales(train, thresholds)?;
    let vectors = standardize(train, thresholds, &scales)?;
    let fit = fit_mvgp_with(&vectors, family, Submodel::M1, opts, anchor)?;
    let mut model = fit.model.with_margins(*thresholds, scales);
    model.below_threshold_prob = below_threshold_prob(train, thresholds).ok();
    Ok(model)
}

fn exceedance_note(count: usize) -> Option<String> {
    match count {
        0 => Some("no exceedance of this level in the data".into()),
        1 => Some("only one exceedance of this level in the data".into()),
        _ => None,
    }
}

/// Leave-one-out assessment on observed `(y1, y2, y3)` triples.
///
/// Each fold refits the exponential scales, the GP model and the
/// below-threshold probability without the held-out epidemic (thresholds
/// stay fixed), predicts its third component from its first two, and
/// does the same with a logistic regression on `(y1, y2)`. Levels with
/// fewer than two exceedances in the data are skipped.
pub fn loo_assess(triples: &[[f64; 3]], config: &LooConfig) -> Result<Assessment> {
    if triples.len() < 12 {
        return Err(Error::domain(format!(
            "leave-one-out assessment needs at least 12 epidemics, got {}",
            triples.len()
        )));
    }
    let base = match config.historical_max {
        Some(m) => m,
        None => triples.iter().map(|y| y[2]).fold(f64::NEG_INFINITY, f64::max),
    };
    let levels: Vec<(f64, f64)> = config.kappas.iter().map(|&k| (k, k * base)).collect();
    let evaluable: Vec<(f64, f64)> = levels
        .iter()
        .copied()
        .filter(|&(_, l)| triples.iter().filter(|y| y[2] > l).count() >= 2)
        .collect();

    // Every fold starts from the all-data estimate as well as from moments.
    let all = fit_in_original_units(triples, &config.thresholds, config.family, &FitOptions::default(), &[])?;
    let anchor = [(all.family.alpha(), all.family.beta())];

    let folds: Vec<(Vec<PredictionRecord>, Vec<FoldFailure>, bool)> = (0..triples.len())
        .into_par_iter()
        .map(|i| {
            let mut records = Vec::new();
            let mut failures = Vec::new();
            let test = triples[i];
            let train: Vec<[f64; 3]> = triples
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, y)| *y)
                .collect();
            let mut opts = config.fit;
            opts.multi_start.seed = opts.multi_start.seed.wrapping_add(i as u64);
            let model = match fit_in_original_units(&train, &config.thresholds, config.family, &opts, &anchor) {
                Ok(m) => Some(m),
                Err(e) => {
                    failures.push(FoldFailure {
                        fold: i,
                        level: None,
                        source: Some(PredictionSource::Gp),
                        message: e.to_string(),
                    });
                    None
                }
            };
            let features: Vec<[f64; 2]> = train.iter().map(|y| [y[0], y[1]]).collect();
            for &(_, level) in &evaluable {
                let outcome = test[2] > level;
                if let Some(model) = &model {
                    let q = PredictionQuery {
                        y1: test[0],
                        y2: test[1],
                        level,
                        below_threshold_prob: None,
                    };
                    match predict_level(model, &q)
                        .and_then(|p| PredictionRecord::new(i, level, p, outcome, PredictionSource::Gp))
                    {
                        Ok(r) => records.push(r),
                        Err(e) => failures.push(FoldFailure {
                            fold: i,
                            level: Some(level),
                            source: Some(PredictionSource::Gp),
                            message: e.to_string(),
                        }),
                    }
                }
                let outcomes: Vec<bool> = train.iter().map(|y| y[2] > level).collect();
                match fit_logistic(&features, &outcomes) {
                    Ok(m) => records.push(
                        PredictionRecord::new(i, level, m.predict(test[0], test[1]), outcome, PredictionSource::Logistic)
                            .expect("logistic probability lies in [0, 1]"),
                    ),
                    Err(e) => failures.push(FoldFailure {
                        fold: i,
                        level: Some(level),
                        source: Some(PredictionSource::Logistic),
                        message: e.to_string(),
                    }),
                }
            }
            (records, failures, model.is_none())
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut n_dropped = 0;
    for (r, f, dropped) in folds {
        records.extend(r);
        failures.extend(f);
        n_dropped += dropped as usize;
    }
    let summaries = levels
        .iter()
        .map(|&(kappa, level)| {
            let n_exc = triples.iter().filter(|y| y[2] > level).count();
            match exceedance_note(n_exc) {
                Some(reason) => LevelSummary {
                    kappa,
                    level,
                    n_exceedances: n_exc,
                    skipped: Some(reason),
                    scores: vec![],
                },
                None => summarize_level(
                    kappa,
                    level,
                    &records,
                    &failures,
                    &[PredictionSource::Gp, PredictionSource::Logistic],
                    0,
                ),
            }
        })
        .collect();
    let quartiles = quartile_table(&records, &evaluable);
    Ok(Assessment {
        levels: summaries,
        records,
        failures,
        quartiles,
        n_dropped,
    })
}

/// Scores for each source at one level. A source whose successful
/// predictions cover fewer than `min_predictions` outcomes is reported
/// without scores.
fn summarize_level(
    kappa: f64,
    level: f64,
    records: &[PredictionRecord],
    failures: &[FoldFailure],
    sources: &[PredictionSource],
    min_predictions: usize,
) -> LevelSummary {
    let at_level: Vec<PredictionRecord> = records.iter().filter(|r| r.level == level).copied().collect();
    let n_exceedances = at_level
        .iter()
        .filter(|r| r.source == sources[0] && r.outcome == 1)
        .count();
    let scores = sources
        .iter()
        .map(|&source| {
            let rs: Vec<PredictionRecord> = at_level.iter().filter(|r| r.source == source).copied().collect();
            let n_failed = failures
                .iter()
                .filter(|f| f.source == Some(source) && f.level.is_none_or(|l| l == level))
                .count();
            if rs.len() < min_predictions.max(1) {
                return SourceScore {
                    source,
                    n_predictions: rs.len(),
                    n_failed,
                    brier: None,
                    average_precision: None,
                    note: Some("too few successful fits to estimate this predictor".into()),
                };
            }
            let brier = brier_standardized(&rs);
            let ap = average_precision(&rs);
            let note = brier.as_ref().err().or(ap.as_ref().err()).map(|e| e.to_string());
            SourceScore {
                source,
                n_predictions: rs.len(),
                n_failed,
                brier: brier.ok(),
                average_precision: ap.ok(),
                note,
            }
        })
        .collect();
    LevelSummary {
        kappa,
        level,
        n_exceedances,
        skipped: None,
        scores,
    }
}

fn quartile_table(records: &[PredictionRecord], levels: &[(f64, f64)]) -> Vec<QuartileRow> {
    let mut out = Vec::new();
    for &(_, level) in levels {
        for source in [PredictionSource::Gp, PredictionSource::Logistic, PredictionSource::TrueModel] {
            let rs: Vec<&PredictionRecord> = records.iter().filter(|r| r.level == level && r.source == source).collect();
            for outcome in [0u8, 1] {
                let p: Vec<f64> = rs.iter().filter(|r| r.outcome == outcome).map(|r| r.p_hat).collect();
                if p.is_empty() {
                    continue;
                }
                let q = |x| empirical_quantile(&p, x).expect("non-empty sample");
                out.push(QuartileRow {
                    level,
                    source,
                    outcome,
                    proportion: p.len() as f64 / rs.len() as f64,
                    q1: q(0.25),
                    median: q(0.5),
                    q3: q(0.75),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAssessConfig {
    pub simulation: SimulationConfig,
    pub kappas: Vec<f64>,
    pub historical_max: f64,
    pub fit: FitOptions,
    /// A logistic level is scored only when at least this fraction of the
    /// datasets gave a usable logistic fit.
    pub min_logistic_fraction: f64,
}

impl SimAssessConfig {
    pub fn new(historical_max: f64) -> Self {
        Self {
            simulation: SimulationConfig::default(),
            kappas: DEFAULT_KAPPAS.to_vec(),
            historical_max,
            fit: FitOptions::anchored(0),
            min_logistic_fraction: 0.5,
        }
    }
}

/// Probability under `model` when the simulated data are GP vectors, so the
/// third component is an exceedance whenever the first two are not.
fn simulated_prediction(model: &MvGpModel, y1: f64, y2: f64, level: f64) -> Result<f64> {
    let below = y1 <= model.thresholds[0] && y2 <= model.thresholds[1];
    if below && level <= model.thresholds[2] {
        return Ok(1.0);
    }
    predict_level(
        model,
        &PredictionQuery {
            y1,
            y2,
            level,
            below_threshold_prob: Some(1.0),
        },
    )
}

/// Simulation assessment: each dataset of `n_vectors` GP vectors is drawn
/// from `true_model`, the model is refit to all but the last vector, and
/// the last vector's third component is predicted from its first two by
/// the refit model, a logistic regression, and the true model.
pub fn sim_assess(true_model: &MvGpModel, config: &SimAssessConfig) -> Result<Assessment> {
    if config.simulation.n_vectors < 11 {
        return Err(Error::Config("simulation assessment needs at least 11 vectors per dataset".into()));
    }
    let datasets = sample_datasets(&true_model.family, &config.simulation)?;
    let levels: Vec<(f64, f64)> = config.kappas.iter().map(|&k| (k, k * config.historical_max)).collect();
    let anchor = [(true_model.family.alpha(), true_model.family.beta())];
    let mut truth = true_model.clone();
    truth.below_threshold_prob = Some(1.0);

    let per_dataset: Vec<(Vec<PredictionRecord>, Vec<FoldFailure>, bool)> = datasets
        .par_iter()
        .enumerate()
        .map(|(i, data)| {
            let mut records = Vec::new();
            let mut failures = Vec::new();
            let (train, test) = data.split_at(data.len() - 1);
            let mut opts = config.fit;
            opts.multi_start.seed = config.simulation.seed.wrapping_add(i as u64);
            let fitted = match fit_mvgp_with(train, truth.family.kind(), Submodel::M1, &opts, &anchor) {
                Ok(f) => {
                    let mut m = truth.clone();
                    m.family = f.model.family;
                    m
                }
                Err(e) => {
                    failures.push(FoldFailure {
                        fold: i,
                        level: None,
                        source: Some(PredictionSource::Gp),
                        message: e.to_string(),
                    });
                    return (records, failures, true);
                }
            };
            let y_train = unstandardize(train, &truth);
            let y = unstandardize(test, &truth)[0];
            let features: Vec<[f64; 2]> = y_train.iter().map(|v| [v[0], v[1]]).collect();
            for &(_, level) in &levels {
                let outcome = y[2] > level;
                for (source, model) in [(PredictionSource::Gp, &fitted), (PredictionSource::TrueModel, &truth)] {
                    match simulated_prediction(model, y[0], y[1], level)
                        .and_then(|p| PredictionRecord::new(i, level, p, outcome, source))
                    {
                        Ok(r) => records.push(r),
                        Err(e) => failures.push(FoldFailure {
                            fold: i,
                            level: Some(level),
                            source: Some(source),
                            message: e.to_string(),
                        }),
                    }
                }
                let outcomes: Vec<bool> = y_train.iter().map(|v| v[2] > level).collect();
                match fit_logistic(&features, &outcomes) {
                    Ok(m) => records.push(
                        PredictionRecord::new(i, level, m.predict(y[0], y[1]), outcome, PredictionSource::Logistic)
                            .expect("logistic probability lies in [0, 1]"),
                    ),
                    Err(e) => failures.push(FoldFailure {
                        fold: i,
                        level: Some(level),
                        source: Some(PredictionSource::Logistic),
                        message: e.to_string(),
                    }),
                }
            }
            (records, failures, false)
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut n_dropped = 0;
    for (r, f, dropped) in per_dataset {
        records.extend(r);
        failures.extend(f);
        n_dropped += dropped as usize;
    }
    let n_used = datasets.len() - n_dropped;
    let min_logistic = (config.min_logistic_fraction * n_used as f64).ceil() as usize;
    let summaries = levels
        .iter()
        .map(|&(kappa, level)| {
            let mut s = summarize_level(
                kappa,
                level,
                &records,
                &failures,
                &[PredictionSource::Gp, PredictionSource::TrueModel],
                1,
            );
            let logistic = summarize_level(kappa, level, &records, &failures, &[PredictionSource::Logistic], min_logistic);
            s.scores.insert(1, logistic.scores.into_iter().next().expect("one source"));
            s
        })
        .collect();
    let quartiles = quartile_table(&records, &levels);
    Ok(Assessment {
        levels: summaries,
        records,
        failures,
        quartiles,
        n_dropped,
    })
}
