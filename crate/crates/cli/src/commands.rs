use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use epitail_core::anomaly::{calibrate, leave_one_out_nll, test_anomaly, AnomalyConfig, AnomalyTest};
use epitail_core::assess::{
    loo_assess, pr_curve, sim_assess, Assessment, LooConfig, PredictionSource, SimAssessConfig,
};
use epitail_core::ingest::{
    empirical_quantile, epidemic_table, parse_series, target_triples, EpidemicTable, IsoWeek, ParseOptions,
    SerflingConfig,
};
use epitail_core::mvgp::{model_selection, simplify_ladder, standardize, FitOptions, MvGpModel};
use epitail_core::predict::{below_threshold_prob, predict_kappas, LevelPrediction};
use epitail_core::simulate::{sample_datasets, write_datasets_csv, RngStreams, SimulationConfig};
use epitail_core::unigp::{
    fit_exponential, fit_gp_excesses, lr_test_gamma_zero, pot_excesses, qq_plot_data, return_level, UnivariateGpFit,
};
use epitail_core::Error;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::report::Output;

/// Third component of the modelled vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Week-3 incidence rate.
    Week3,
    /// Epidemic size.
    Size,
}

impl Target {
    fn name(self) -> &'static str {
        match self {
            Target::Week3 => "week3",
            Target::Size => "size",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AssessMode {
    /// Leave-one-out on the observed epidemics.
    Loo,
    /// Refit-and-predict on datasets simulated from a model.
    Sim,
}

/// Seed of the sub-stream owned by one subcommand.
fn command_seed(config: &PipelineConfig, command: &str) -> u64 {
    RngStreams::new(config.seed(), command).derive_seed(0)
}

// ---------------------------------------------------------------------------
// shared data preparation

struct Observed {
    table: EpidemicTable,
    rate_threshold: f64,
    size_threshold: f64,
}

fn observe(config: &PipelineConfig) -> Result<Observed> {
    let path = config
        .input_path
        .as_ref()
        .ok_or_else(|| Error::Config("no input series: pass --input or set input_path".into()))?;
    let bytes = std::fs::read(path).map_err(Error::from).with_context(|| format!("reading {}", path.display()))?;
    let mut series = parse_series(&bytes, ParseOptions::default())?;
    if let Some([first, last]) = config.estimation_years {
        series = series.years(first, last);
    }
    let table = epidemic_table(&series, config.start_quantile, config.end_rule, &SerflingConfig::default())?;
    if table.features.is_empty() {
        return Err(Error::Domain("no epidemic found in the series".into()).into());
    }
    let rate_threshold = empirical_quantile(&series.rates(), config.rate_threshold_quantile)?;
    let sizes: Vec<f64> = table.features.iter().map(|f| f.size).collect();
    let size_threshold = empirical_quantile(&sizes, config.size_threshold_quantile)?;
    Ok(Observed {
        table,
        rate_threshold,
        size_threshold,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedFit {
    pub target: String,
    pub fit: UnivariateGpFit,
}

#[derive(Debug, Clone, Serialize)]
struct UnivariateResult {
    target: String,
    n_observations: usize,
    exponential: UnivariateGpFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    free_shape: Option<UnivariateGpFit>,
    /// Likelihood-ratio p-value of the exponential (zero shape) reduction.
    #[serde(skip_serializing_if = "Option::is_none")]
    lr_p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    free_shape_error: Option<String>,
    #[serde(skip)]
    excesses: Vec<f64>,
}

const UNI_TARGETS: [&str; 4] = ["week1", "week2", "week3", "size"];

fn univariate_fits(obs: &Observed) -> Result<Vec<UnivariateResult>> {
    let f = &obs.table.features;
    let columns: [Vec<f64>; 4] = [
        f.iter().map(|e| e.y1).collect(),
        f.iter().map(|e| e.y2).collect(),
        f.iter().filter_map(|e| e.y3).collect(),
        f.iter().map(|e| e.size).collect(),
    ];
    UNI_TARGETS
        .iter()
        .zip(columns)
        .map(|(name, values)| {
            let u = if *name == "size" { obs.size_threshold } else { obs.rate_threshold };
            let pot = pot_excesses(&values, u);
            let exponential = fit_exponential(&pot.excesses)
                .with_context(|| format!("exponential fit for {name}"))?
                .with_tail(u, pot.exceed_freq);
            let (free_shape, lr_p_value, free_shape_error) = match fit_gp_excesses(&pot.excesses) {
                Ok(g) => {
                    let g = g.with_tail(u, pot.exceed_freq);
                    (Some(g), lr_test_gamma_zero(&g, &exponential).ok(), None)
                }
                Err(e) => (None, None, Some(e.to_string())),
            };
            Ok(UnivariateResult {
                target: (*name).to_owned(),
                n_observations: values.len(),
                exponential,
                free_shape,
                lr_p_value,
                free_shape_error,
                excesses: pot.excesses,
            })
        })
        .collect()
}

/// Thresholds, scales and raw triples for one target.
struct TargetData {
    thresholds: [f64; 3],
    scales: [f64; 3],
    triples: Vec<[f64; 3]>,
    seasons: Vec<i32>,
}

fn target_data(obs: &Observed, target: Target) -> Result<TargetData> {
    let fits = univariate_fits(obs)?;
    let sigma = |name: &str| fits.iter().find(|f| f.target == name).map(|f| f.exponential.sigma).unwrap();
    let (thresholds, scales) = match target {
        Target::Week3 => ([obs.rate_threshold; 3], [sigma("week1"), sigma("week2"), sigma("week3")]),
        Target::Size => (
            [obs.rate_threshold, obs.rate_threshold, obs.size_threshold],
            [sigma("week1"), sigma("week2"), sigma("size")],
        ),
    };
    let size = target == Target::Size;
    let seasons = obs
        .table
        .features
        .iter()
        .filter(|f| f.triple(size).is_some())
        .map(|f| f.season)
        .collect();
    Ok(TargetData {
        thresholds,
        scales,
        triples: target_triples(&obs.table.features, size),
        seasons,
    })
}

fn load_model(path: &Path) -> Result<MvGpModel> {
    MvGpModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn historical_max(explicit: Option<f64>, model: &MvGpModel) -> Result<f64> {
    explicit
        .or(model.historical_max)
        .ok_or_else(|| Error::Config("no historical maximum: pass --historical-max or set it in the model".into()).into())
}

// ---------------------------------------------------------------------------
// segment

#[derive(Serialize)]
struct EpidemicRow {
    season: i32,
    start_week: String,
    duration: usize,
    y1: f64,
    y2: f64,
    y3: Option<f64>,
    size: f64,
}

fn week_label(w: IsoWeek) -> String {
    format!("{}W{:02}", w.year, w.week)
}

pub fn segment(config: &PipelineConfig, out: &Path) -> Result<PathBuf> {
    let obs = observe(config)?;
    let mut output = Output::new(out, "segment")?;
    let rows: Vec<EpidemicRow> = obs
        .table
        .epidemics
        .iter()
        .zip(&obs.table.features)
        .map(|(e, f)| EpidemicRow {
            season: e.season,
            start_week: week_label(e.start_week),
            duration: e.duration(),
            y1: f.y1,
            y2: f.y2,
            y3: f.y3,
            size: f.size,
        })
        .collect();
    output.csv("epidemics.csv", &rows)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        start_threshold: f64,
        n_epidemics: usize,
        epidemics: &'a [epitail_core::ingest::Epidemic],
    }
    output.finish(
        config,
        &Summary {
            start_threshold: obs.table.start_threshold,
            n_epidemics: obs.table.epidemics.len(),
            epidemics: &obs.table.epidemics,
        },
    )
}

// ---------------------------------------------------------------------------
// fit-uni

pub fn fit_uni(config: &PipelineConfig, out: &Path) -> Result<PathBuf> {
    let obs = observe(config)?;
    let fits = univariate_fits(&obs)?;
    let mut output = Output::new(out, "fit-uni")?;
    for f in &fits {
        #[derive(Serialize)]
        struct QqRow {
            theoretical: f64,
            empirical: f64,
        }
        let rows = qq_plot_data(&f.excesses, &f.exponential)
            .into_iter()
            .map(|(theoretical, empirical)| QqRow { theoretical, empirical });
        output.csv(&format!("qq_{}.csv", f.target), rows)?;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        rate_threshold: f64,
        size_threshold: f64,
        n_epidemics: usize,
        fits: &'a [UnivariateResult],
    }
    output.finish(
        config,
        &Summary {
            rate_threshold: obs.rate_threshold,
            size_threshold: obs.size_threshold,
            n_epidemics: obs.table.features.len(),
            fits: &fits,
        },
    )
}

// ---------------------------------------------------------------------------
// return-levels

pub struct ReturnLevelArgs {
    pub fits: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub sigma: Option<f64>,
    pub exceed_freq: Option<f64>,
    pub alphas: Vec<f64>,
    pub years: Vec<u32>,
}

/// Reads named exponential fits from a `fit-uni` report or a bare
/// `{"fits": [{"target", "fit"}]}` file.
fn read_fits(path: &Path) -> Result<Vec<NamedFit>> {
    let text = std::fs::read_to_string(path)
        .map_err(Error::from)
        .with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
    let fits = value
        .pointer("/result/fits")
        .or_else(|| value.get("fits"))
        .ok_or_else(|| Error::Config(format!("{}: no \"fits\" array", path.display())))?;
    #[derive(Deserialize)]
    struct Entry {
        target: String,
        #[serde(alias = "fit")]
        exponential: UnivariateGpFit,
    }
    let entries: Vec<Entry> = serde_json::from_value(fits.clone())
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(entries
        .into_iter()
        .map(|e| NamedFit {
            target: e.target,
            fit: e.exponential,
        })
        .collect())
}

pub fn return_levels(config: &PipelineConfig, args: &ReturnLevelArgs, out: &Path) -> Result<PathBuf> {
    let fits = match (&args.fits, args.threshold, args.sigma, args.exceed_freq) {
        (Some(path), None, None, None) => read_fits(path)?,
        (None, Some(u), Some(sigma), Some(p)) => {
            if !(sigma > 0.0) || !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("need sigma > 0 and exceedance frequency in [0, 1], got {sigma}, {p}")).into());
            }
            vec![NamedFit {
                target: "custom".into(),
                fit: UnivariateGpFit {
                    threshold: u,
                    exceed_freq: p,
                    sigma,
                    gamma: 0.0,
                    gamma_fixed: true,
                    log_lik: f64::NAN,
                    sigma_ci: (f64::NAN, f64::NAN),
                    n_excess: 0,
                },
            }]
        }
        (None, None, None, None) => {
            let obs = observe(config)?;
            univariate_fits(&obs)?
                .into_iter()
                .map(|f| NamedFit {
                    target: f.target,
                    fit: f.exponential,
                })
                .collect()
        }
        _ => {
            return Err(Error::Config(
                "give either --fits, or all of --threshold/--sigma/--exceed-freq, or an input series".into(),
            )
            .into())
        }
    };
    #[derive(Serialize)]
    struct Row {
        target: String,
        alpha: f64,
        years: u32,
        level: f64,
    }
    let mut rows = Vec::new();
    for f in &fits {
        for &alpha in &args.alphas {
            for &years in &args.years {
                rows.push(Row {
                    target: f.target.clone(),
                    alpha,
                    years,
                    level: return_level(&f.fit, alpha, years)?,
                });
            }
        }
    }
    let mut output = Output::new(out, "return-levels")?;
    output.csv("return_levels.csv", &rows)?;
    output.finish(config, &serde_json::json!({ "levels": rows }))
}

// ---------------------------------------------------------------------------
// fit-mvgp

pub fn fit_mvgp(config: &PipelineConfig, target: Target, out: &Path) -> Result<PathBuf> {
    let obs = observe(config)?;
    let data = target_data(&obs, target)?;
    let vectors = standardize(&data.triples, &data.thresholds, &data.scales)?;
    let mut opts = FitOptions::default();
    opts.multi_start.seed = command_seed(config, "fit-mvgp");
    let selection = model_selection(&vectors, &opts);
    let ladder = simplify_ladder(&vectors, config.family, &opts)?;
    let chosen = selection
        .iter()
        .find(|r| r.family == config.family)
        .and_then(|r| r.fit.as_ref())
        .ok_or_else(|| {
            let msg = selection
                .iter()
                .find(|r| r.family == config.family)
                .and_then(|r| r.error.clone())
                .unwrap_or_default();
            Error::Fitting(format!("{} fit failed: {msg}", config.family))
        })?;
    let mut model = chosen.model.clone().with_margins(data.thresholds, data.scales);
    model.historical_max = data.triples.iter().map(|y| y[2]).reduce(f64::max);
    model.below_threshold_prob = below_threshold_prob(&data.triples, &data.thresholds).ok();

    let mut output = Output::new(out, "fit-mvgp")?;
    let model_file = format!("model_{}.json", target.name());
    output.json(&model_file, &model)?;
    output.csv(&format!("selection_{}.csv", target.name()), &selection)?;
    output.csv(&format!("ladder_{}.csv", target.name()), &ladder)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        target: Target,
        n_epidemics: usize,
        n_vectors: usize,
        model_file: &'a str,
        model: &'a MvGpModel,
        converged: bool,
        at_boundary: bool,
        selection: &'a [epitail_core::mvgp::SelectionRow],
        ladder: &'a [epitail_core::mvgp::LadderRow],
    }
    output.finish(
        config,
        &Summary {
            target,
            n_epidemics: data.triples.len(),
            n_vectors: vectors.len(),
            model_file: &model_file,
            model: &model,
            converged: chosen.converged,
            at_boundary: chosen.at_boundary,
            selection: &selection,
            ladder: &ladder,
        },
    )
}

// ---------------------------------------------------------------------------
// predict

pub struct PredictArgs {
    pub model: PathBuf,
    pub y1: f64,
    pub y2: f64,
    pub historical_max: Option<f64>,
    pub below_threshold_prob: Option<f64>,
}

pub fn predict(config: &PipelineConfig, args: &PredictArgs, out: &Path) -> Result<PathBuf> {
    let model = load_model(&args.model)?;
    let base = historical_max(args.historical_max, &model)?;
    let predictions: Vec<LevelPrediction> =
        predict_kappas(&model, args.y1, args.y2, base, &config.kappas, args.below_threshold_prob)?;
    let mut output = Output::new(out, "predict")?;
    output.csv("predictions.csv", &predictions)?;
    output.finish(
        config,
        &serde_json::json!({
            "model": args.model,
            "y1": args.y1,
            "y2": args.y2,
            "historical_max": base,
            "predictions": predictions,
        }),
    )
}

// ---------------------------------------------------------------------------
// anomaly

pub struct AnomalyArgs {
    pub model: PathBuf,
    pub n_vectors: usize,
    pub points: Vec<[f64; 3]>,
    /// Target of the observed vectors scored when an input series is set.
    pub target: Target,
}

pub fn anomaly(config: &PipelineConfig, args: &AnomalyArgs, out: &Path) -> Result<PathBuf> {
    let model = load_model(&args.model)?;
    let family = model.family;
    let seed = command_seed(config, "anomaly");
    let mut anomaly_config = AnomalyConfig {
        simulation: SimulationConfig {
            seed,
            n_vectors: args.n_vectors,
            n_datasets: config.n_datasets,
        },
        ..AnomalyConfig::default()
    };
    anomaly_config.fit.multi_start.seed = seed;
    let calibration = calibrate(&family, &anomaly_config)?;

    #[derive(Serialize)]
    struct PointResult {
        point: [f64; 3],
        standardized: [f64; 3],
        #[serde(flatten)]
        test: AnomalyTest,
    }
    let points = args
        .points
        .iter()
        .map(|&point| {
            let x: [f64; 3] = std::array::from_fn(|j| (point[j] - model.thresholds[j]) / model.scales[j]);
            if x.iter().all(|&v| v <= 0.0) {
                return Err(Error::Domain(format!("point {point:?} exceeds no threshold")).into());
            }
            Ok(PointResult {
                point,
                standardized: x,
                test: test_anomaly(&family, &calibration, &x)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut output = Output::new(out, "anomaly")?;
    output.csv("anomaly_cutoffs.csv", &calibration.quantiles)?;

    #[derive(Serialize)]
    struct NllRow {
        index: usize,
        season: i32,
        nll: Option<f64>,
        flagged_levels: String,
    }
    let mut observed_rows = Vec::new();
    if config.input_path.is_some() {
        let obs = observe(config)?;
        let data = target_data(&obs, args.target)?;
        // Standardize with the model's margins so NLLs are comparable to
        // the calibration.
        let mut vectors = Vec::new();
        let mut seasons = Vec::new();
        for (y, season) in data.triples.iter().zip(&data.seasons) {
            if let Some(x) = standardize(&[*y], &model.thresholds, &model.scales)?.first() {
                vectors.push(*x);
                seasons.push(*season);
            }
        }
        let loo = leave_one_out_nll(&vectors, &family, &FitOptions::quick(seed))?;
        for (row, season) in loo.iter().zip(seasons) {
            let flagged = row
                .nll
                .map(|v| epitail_core::anomaly::flagged_levels(&calibration, v))
                .unwrap_or_default();
            observed_rows.push(NllRow {
                index: row.index,
                season,
                nll: row.nll,
                flagged_levels: flagged.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
            });
        }
        output.csv("anomaly_nll.csv", &observed_rows)?;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        model: &'a Path,
        calibration: &'a epitail_core::anomaly::AnomalyCalibration,
        points: &'a [PointResult],
        observed: &'a [NllRow],
    }
    let mut summary = calibration.clone();
    summary.nlls.clear();
    output.finish(
        config,
        &Summary {
            model: &args.model,
            calibration: &summary,
            points: &points,
            observed: &observed_rows,
        },
    )
}

// ---------------------------------------------------------------------------
// simulate

pub fn simulate(config: &PipelineConfig, model_path: &Path, n_vectors: usize, out: &Path) -> Result<PathBuf> {
    let model = load_model(model_path)?;
    let sim = SimulationConfig {
        seed: command_seed(config, "simulate"),
        n_vectors,
        n_datasets: config.n_datasets,
    };
    let datasets = sample_datasets(&model.family, &sim)?;
    let mut output = Output::new(out, "simulate")?;
    output.raw("simulated.csv", |w| write_datasets_csv(&datasets, w))?;
    output.finish(
        config,
        &serde_json::json!({
            "model": model_path,
            "simulation": sim,
            "units": "standardized",
        }),
    )
}

// ---------------------------------------------------------------------------
// assess

pub struct AssessArgs {
    pub mode: AssessMode,
    pub target: Target,
    pub model: Option<PathBuf>,
    pub n_vectors: usize,
    pub historical_max: Option<f64>,
}

#[derive(Serialize)]
struct PrRow {
    level: f64,
    source: PredictionSource,
    cutoff: f64,
    precision: f64,
    recall: f64,
}

fn pr_rows(a: &Assessment) -> Vec<PrRow> {
    let mut rows = Vec::new();
    for level in &a.levels {
        for score in &level.scores {
            let records: Vec<_> = a
                .records
                .iter()
                .filter(|r| r.level == level.level && r.source == score.source)
                .copied()
                .collect();
            if let Ok(curve) = pr_curve(&records) {
                rows.extend(curve.into_iter().map(|p| PrRow {
                    level: level.level,
                    source: score.source,
                    cutoff: p.cutoff,
                    precision: p.precision,
                    recall: p.recall,
                }));
            }
        }
    }
    rows
}

pub fn assess(config: &PipelineConfig, args: &AssessArgs, out: &Path) -> Result<PathBuf> {
    let seed = command_seed(config, "assess");
    let assessment = match args.mode {
        AssessMode::Loo => {
            let obs = observe(config)?;
            let data = target_data(&obs, args.target)?;
            let mut loo = LooConfig::new(data.thresholds);
            loo.kappas = config.kappas.clone();
            loo.historical_max = args.historical_max;
            loo.family = config.family;
            loo.fit = FitOptions::quick(seed);
            loo_assess(&data.triples, &loo)?
        }
        AssessMode::Sim => {
            let path = args
                .model
                .as_ref()
                .ok_or_else(|| Error::Config("--mode sim needs --model".into()))?;
            let model = load_model(path)?;
            let mut sim = SimAssessConfig::new(historical_max(args.historical_max, &model)?);
            sim.simulation = SimulationConfig {
                seed,
                n_vectors: args.n_vectors,
                n_datasets: config.n_datasets,
            };
            sim.kappas = config.kappas.clone();
            sim.fit.multi_start.seed = seed;
            sim_assess(&model, &sim)?
        }
    };
    let mut output = Output::new(out, "assess")?;
    output.csv("records.csv", &assessment.records)?;
    output.csv("pr_curves.csv", pr_rows(&assessment))?;
    output.finish(
        config,
        &serde_json::json!({
            "mode": args.mode,
            "target": args.target,
            "levels": assessment.levels,
            "quartiles": assessment.quartiles,
            "failures": assessment.failures,
            "n_dropped": assessment.n_dropped,
        }),
    )
}
