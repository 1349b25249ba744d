//! `epitail`: segment a weekly incidence series, fit tail models, predict
//! and score exceedances, and calibrate anomaly tests.
//!
//! Every subcommand writes `<command>.json` (schema version "1") plus CSV
//! artifacts into `--out`. Exit status: 0 on success, 2 for bad input or
//! configuration, 3 for numerical failures.

// `!(x > 0.0)` guards deliberately reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epitail_core::ingest::EndRule;
use epitail_core::mvgp::FamilyKind;

use commands::{AnomalyArgs, AssessArgs, AssessMode, PredictArgs, ReturnLevelArgs, Target};
use config::{Overrides, PipelineConfig};

#[derive(Parser)]
#[command(name = "epitail", version, about = "Extreme-value prediction and anomaly detection for epidemic series")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for reports and artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Weekly incidence CSV.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Quantile of weekly rates that opens an epidemic [default: 0.88].
    #[arg(long, global = true)]
    start_quantile: Option<f64>,
    /// Quantile of weekly rates used as the GP threshold [default: 0.9].
    #[arg(long, global = true)]
    rate_threshold_quantile: Option<f64>,
    /// Quantile of epidemic sizes used as the GP threshold [default: 0.6].
    #[arg(long, global = true)]
    size_threshold_quantile: Option<f64>,
    /// Comma-separated fractions of the historical maximum.
    #[arg(long, global = true, value_delimiter = ',')]
    kappas: Option<Vec<f64>>,
    /// Generator family: gumbel, reverse-gumbel or reverse-exponential.
    #[arg(long, global = true, value_parser = parse_family)]
    family: Option<FamilyKind>,
    /// Master seed; falls back to the config file, then EVT_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulated datasets for calibration and assessment [default: 1500].
    #[arg(long, global = true)]
    n_datasets: Option<usize>,
    /// How epidemics end: serfling or threshold-fallback.
    #[arg(long, global = true, value_parser = parse_end_rule)]
    end_rule: Option<EndRule>,
    /// Restrict the series to calendar years FIRST..=LAST.
    #[arg(long, global = true, num_args = 2, value_names = ["FIRST", "LAST"])]
    estimation_years: Option<Vec<i32>>,
}

#[derive(Subcommand)]
enum Command {
    /// Segment the series into epidemics.
    Segment,
    /// Exponential and GP fits to threshold excesses of weeks 1–3 and sizes.
    FitUni,
    /// Return levels from exponential tail fits.
    ReturnLevels {
        /// Fits from a `fit-uni` report (default: fit the input series).
        #[arg(long, conflicts_with_all = ["threshold", "sigma", "exceed_freq"])]
        fits: Option<PathBuf>,
        #[arg(long, requires_all = ["sigma", "exceed_freq"])]
        threshold: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        exceed_freq: Option<f64>,
        /// Non-exceedance probabilities over the horizon.
        #[arg(long, value_delimiter = ',', default_value = "0.9,0.99")]
        alpha: Vec<f64>,
        /// Horizons in years (one episode per year).
        #[arg(long, value_delimiter = ',', default_value = "1,10")]
        years: Vec<u32>,
    },
    /// Fit and compare three-dimensional GP models.
    FitMvgp {
        #[arg(long, value_enum, default_value = "week3")]
        target: Target,
    },
    /// Probability that the target exceeds κ × historical maximum.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        y1: f64,
        #[arg(long)]
        y2: f64,
        #[arg(long)]
        historical_max: Option<f64>,
        /// Overrides the model's below-threshold adjustment.
        #[arg(long)]
        below_threshold_prob: Option<f64>,
    },
    /// Calibrate the NLL anomaly test and score points or observed epidemics.
    Anomaly {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 33)]
        n_vectors: usize,
        /// Point in original units, `y1,y2,y3`; repeatable.
        #[arg(long = "point", value_parser = parse_triple)]
        points: Vec<[f64; 3]>,
        #[arg(long, value_enum, default_value = "week3")]
        target: Target,
    },
    /// Simulate datasets (standardized units) from a model.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 33)]
        n_vectors: usize,
    },
    /// Score GP and logistic predictions.
    Assess {
        #[arg(long, value_enum, default_value = "loo")]
        mode: AssessMode,
        #[arg(long, value_enum, default_value = "week3")]
        target: Target,
        /// Model to simulate from (`--mode sim`).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 33)]
        n_vectors: usize,
        #[arg(long)]
        historical_max: Option<f64>,
    },
}

fn parse_family(s: &str) -> Result<FamilyKind, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown family {s:?} (gumbel, reverse_gumbel, reverse_exponential)"))
}

fn parse_end_rule(s: &str) -> Result<EndRule, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown end rule {s:?} (serfling, threshold_fallback)"))
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 3 values, got {}", v.len()))
}

fn resolve_config(c: &Common) -> anyhow::Result<PipelineConfig> {
    let base = match &c.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    let overrides = Overrides {
        input_path: c.input.clone(),
        start_quantile: c.start_quantile,
        rate_threshold_quantile: c.rate_threshold_quantile,
        size_threshold_quantile: c.size_threshold_quantile,
        kappas: c.kappas.clone(),
        family: c.family,
        seed: c.seed,
        n_datasets: c.n_datasets,
        end_rule: c.end_rule,
        estimation_years: c.estimation_years.as_deref().map(|y| [y[0], y[1]]),
    };
    let env_seed = std::env::var("EVT_SEED").ok();
    Ok(base.resolve(overrides, env_seed.as_deref())?)
}

fn run(cli: Cli) -> anyhow::Result<PathBuf> {
    let config = resolve_config(&cli.common)?;
    let out = &cli.common.out;
    match cli.command {
        Command::Segment => commands::segment(&config, out),
        Command::FitUni => commands::fit_uni(&config, out),
        Command::ReturnLevels {
            fits,
            threshold,
            sigma,
            exceed_freq,
            alpha,
            years,
        } => commands::return_levels(
            &config,
            &ReturnLevelArgs {
                fits,
                threshold,
                sigma,
                exceed_freq,
                alphas: alpha,
                years,
            },
            out,
        ),
        Command::FitMvgp { target } => commands::fit_mvgp(&config, target, out),
        Command::Predict {
            model,
            y1,
            y2,
            historical_max,
            below_threshold_prob,
        } => commands::predict(
            &config,
            &PredictArgs {
                model,
                y1,
                y2,
                historical_max,
                below_threshold_prob,
            },
            out,
        ),
        Command::Anomaly {
            model,
            n_vectors,
            points,
            target,
        } => commands::anomaly(
            &config,
            &AnomalyArgs {
                model,
                n_vectors,
                points,
                target,
            },
            out,
        ),
        Command::Simulate { model, n_vectors } => commands::simulate(&config, &model, n_vectors, out),
        Command::Assess {
            mode,
            target,
            model,
            n_vectors,
            historical_max,
        } => commands::assess(
            &config,
            &AssessArgs {
                mode,
                target,
                model,
                n_vectors,
                historical_max,
            },
            out,
        ),
    }
}

/// 3 for numerical failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<epitail_core::Error>() {
        Some(e) if e.is_numeric() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(report) => {
            println!("{}", report.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
