//! Acceptance criteria, one test per criterion.
//!
//! Each test writes a single `ACn PASS|FAIL: ...` line to stderr (bypassing
//! the test harness capture) and then asserts. Criteria that need the
//! observed incidence series read it from `$EPITAIL_DATA` or
//! `data/sentinelles_ili.csv` at the workspace root and fail with
//! "dataset missing" when it is absent.
//!
//! `EPITAIL_FULL_SCALE=1` runs the simulation assessment on 1,500 datasets
//! instead of 300.

use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;

use epitail_core::anomaly::{calibrate, leave_one_out_nll, nll_at, AnomalyCalibration, AnomalyConfig};
use epitail_core::assess::{
    average_precision, brier_standardized, loo_assess, sim_assess, Assessment, LooConfig, PredictionRecord,
    PredictionSource, SimAssessConfig,
};
use epitail_core::ingest::{
    empirical_quantile, epidemic_features, parse_series, segment_epidemics, EndRule, EpidemicFeatures,
    IncidenceSeries, IsoWeek, ParseOptions, SegmentConfig, SerflingConfig, serfling_baseline,
};
use epitail_core::mvgp::{
    model_selection, simplify_ladder, standardize, ExcessVector, FamilyKind, FitOptions, GeneratorFamily, GpDensity,
    MvGpModel, Submodel,
};
use epitail_core::predict::{conditional_exceedance, predict_level, PredictionQuery};
use epitail_core::simulate::{sample_gp, RngStreams, SimulationConfig};
use epitail_core::unigp::{fit_exponential, pot_excesses, return_level, UnivariateGpFit};
use rand::Rng;

// ---------------------------------------------------------------------------
// reporting

fn report(id: &str, pass: bool, detail: impl AsRef<str>) {
    let status = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{id} {status}: {}", detail.as_ref());
}

fn conclude(id: &str, failures: &[String], summary: String) {
    if failures.is_empty() {
        report(id, true, summary);
    } else {
        report(id, false, format!("{summary}; {}", failures.join("; ")));
    }
    assert!(failures.is_empty(), "{id}: {}", failures.join("; "));
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got / want - 1.0).abs()
}

// ---------------------------------------------------------------------------
// published models and data

const THRESHOLD_RATE: f64 = 339.0;
const THRESHOLD_SIZE: f64 = 4144.0;
const SCALES_WEEK: [f64; 3] = [72.0, 256.0, 392.0];
const SCALE_SIZE: f64 = 1428.0;

fn week3_family() -> GeneratorFamily {
    GeneratorFamily::new(FamilyKind::Gumbel, [2.22, 10.37, 3.21], [0.0, 0.84, 0.59]).unwrap()
}

fn size_family() -> GeneratorFamily {
    GeneratorFamily::new(FamilyKind::Gumbel, [2.22, 38.77, 1.76], [0.0, 0.89, -0.70]).unwrap()
}

fn week3_model() -> MvGpModel {
    let mut m = MvGpModel::standard(week3_family()).with_margins([THRESHOLD_RATE; 3], SCALES_WEEK);
    m.submodel = Submodel::M1;
    m
}

fn size_model() -> MvGpModel {
    let mut m = MvGpModel::standard(size_family()).with_margins(
        [THRESHOLD_RATE, THRESHOLD_RATE, THRESHOLD_SIZE],
        [SCALES_WEEK[0], SCALES_WEEK[1], SCALE_SIZE],
    );
    m.submodel = Submodel::M1;
    m
}

fn full_scale() -> bool {
    std::env::var("EPITAIL_FULL_SCALE").is_ok_and(|v| !v.is_empty() && v != "0")
}

/// Observed epidemics: 1985–2018 for estimation, plus every epidemic up to
/// the end of the series for the anomaly check.
struct ObservedData {
    series_1985_2018: IncidenceSeries,
    start_threshold: f64,
    estimation: Vec<EpidemicFeatures>,
    /// Every epidemic of the full series with its first week.
    all: Vec<(IsoWeek, EpidemicFeatures)>,
}

fn data_path() -> PathBuf {
    match std::env::var_os("EPITAIL_DATA") {
        Some(p) => PathBuf::from(p),
        None => PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../..")).join("data/sentinelles_ili.csv"),
    }
}

fn load_observed() -> Result<ObservedData, String> {
    let path = data_path();
    let bytes = std::fs::read(&path).map_err(|e| format!("dataset missing ({}: {e})", path.display()))?;
    let series = parse_series(&bytes, ParseOptions::default()).map_err(|e| e.to_string())?;
    let series_1985_2018 = series.years(1985, 2018);
    let start_threshold = empirical_quantile(&series_1985_2018.rates(), 0.88).map_err(|e| e.to_string())?;
    let config = SegmentConfig {
        start_threshold,
        end_rule: EndRule::Serfling,
    };
    let segment = |s: &IncidenceSeries| -> Result<Vec<(IsoWeek, EpidemicFeatures)>, String> {
        let baseline = serfling_baseline(s, &SerflingConfig::default()).map_err(|e| e.to_string())?;
        let eps = segment_epidemics(s, &config, Some(&baseline)).map_err(|e| e.to_string())?;
        Ok(eps.iter().map(|e| (e.start_week, epidemic_features(e))).collect())
    };
    Ok(ObservedData {
        estimation: segment(&series_1985_2018)?.into_iter().map(|(_, f)| f).collect(),
        all: segment(&series)?,
        series_1985_2018,
        start_threshold,
    })
}

fn observed() -> Result<&'static ObservedData, String> {
    static DATA: OnceLock<Result<ObservedData, String>> = OnceLock::new();
    DATA.get_or_init(load_observed).as_ref().map_err(Clone::clone)
}

fn triples(features: &[EpidemicFeatures], size_target: bool) -> Vec<[f64; 3]> {
    features.iter().filter_map(|f| f.triple(size_target)).collect()
}

/// Thresholds and exponential scales estimated from the observed data.
struct ObservedMargins {
    rate_threshold: f64,
    size_threshold: f64,
    fits: [UnivariateGpFit; 4],
}

fn observed_margins(data: &ObservedData) -> Result<ObservedMargins, String> {
    let rate_threshold = empirical_quantile(&data.series_1985_2018.rates(), 0.9).map_err(|e| e.to_string())?;
    let sizes: Vec<f64> = data.estimation.iter().map(|f| f.size).collect();
    let size_threshold = empirical_quantile(&sizes, 0.6).map_err(|e| e.to_string())?;
    let columns: [Vec<f64>; 4] = [
        data.estimation.iter().map(|f| f.y1).collect(),
        data.estimation.iter().map(|f| f.y2).collect(),
        data.estimation.iter().filter_map(|f| f.y3).collect(),
        sizes,
    ];
    let mut fits = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let u = if j == 3 { size_threshold } else { rate_threshold };
        let pot = pot_excesses(col, u);
        let fit = fit_exponential(&pot.excesses).map_err(|e| e.to_string())?;
        fits.push(fit.with_tail(u, pot.exceed_freq));
    }
    Ok(ObservedMargins {
        rate_threshold,
        size_threshold,
        fits: fits.try_into().unwrap(),
    })
}

fn observed_vectors(data: &ObservedData, m: &ObservedMargins, size_target: bool) -> Result<Vec<ExcessVector>, String> {
    let (thresholds, scales) = if size_target {
        (
            [m.rate_threshold, m.rate_threshold, m.size_threshold],
            [m.fits[0].sigma, m.fits[1].sigma, m.fits[3].sigma],
        )
    } else {
        ([m.rate_threshold; 3], [m.fits[0].sigma, m.fits[1].sigma, m.fits[2].sigma])
    };
    standardize(&triples(&data.estimation, size_target), &thresholds, &scales).map_err(|e| e.to_string())
}

/// Anomaly calibration of the published Week-3 model, shared by the
/// calibration criterion and the flag-rate property.
fn week3_calibration(seed: u64) -> &'static AnomalyCalibration {
    static PRIMARY: OnceLock<AnomalyCalibration> = OnceLock::new();
    static SECONDARY: OnceLock<AnomalyCalibration> = OnceLock::new();
    let cell = if seed == 1 { &PRIMARY } else { &SECONDARY };
    cell.get_or_init(|| {
        let config = AnomalyConfig {
            simulation: SimulationConfig {
                seed,
                n_vectors: 33,
                n_datasets: 1500,
            },
            ..AnomalyConfig::default()
        };
        calibrate(&week3_family(), &config).expect("calibration")
    })
}

// ---------------------------------------------------------------------------
// AC1

#[test]
fn ac1_return_levels() {
    let week3 = fit_at(THRESHOLD_RATE, 392.0, 0.88);
    let size = fit_at(THRESHOLD_SIZE, 1428.0, 0.41);
    let cases: [(&str, &UnivariateGpFit, [f64; 4]); 2] = [
        ("week 3", &week3, [1192.0, 2094.0, 2076.0, 2994.0]),
        ("size", &size, [6165.0, 9452.0, 9385.0, 12733.0]),
    ];
    let mut failures = Vec::new();
    let mut got_all = Vec::new();
    for (name, fit, want) in cases {
        for (k, (alpha, years)) in [(0.9, 1), (0.99, 1), (0.9, 10), (0.99, 10)].into_iter().enumerate() {
            let got = return_level(fit, alpha, years).unwrap();
            got_all.push(format!("{got:.0}"));
            if rel_err(got, want[k]) > 0.005 {
                failures.push(format!("{name} alpha={alpha} n={years}: {got:.1} vs {}", want[k]));
            }
        }
    }
    conclude("AC1", &failures, format!("return levels {} (±0.5%)", got_all.join(", ")));
}

fn fit_at(threshold: f64, sigma: f64, exceed_freq: f64) -> UnivariateGpFit {
    UnivariateGpFit {
        threshold,
        exceed_freq,
        sigma,
        gamma: 0.0,
        gamma_fixed: true,
        log_lik: f64::NAN,
        sigma_ci: (f64::NAN, f64::NAN),
        n_excess: 0,
    }
}

// ---------------------------------------------------------------------------
// AC2

#[test]
fn ac2_exponential_fits() {
    let margins = observed().and_then(observed_margins);
    let m = match margins {
        Ok(m) => m,
        Err(e) => return conclude("AC2", &[e], "exponential fits not computed".into()),
    };
    let want = [72.0, 256.0, 392.0, 1428.0];
    let mut failures = Vec::new();
    for (j, fit) in m.fits.iter().enumerate() {
        if rel_err(fit.sigma, want[j]) > 0.02 {
            failures.push(format!("scale {j}: {:.1} vs {} (±2%)", fit.sigma, want[j]));
        }
    }
    if m.fits[2].n_excess != 30 {
        failures.push(format!("{} Week-3 excesses vs 30", m.fits[2].n_excess));
    }
    if m.fits[3].n_excess != 14 {
        failures.push(format!("{} size excesses vs 14", m.fits[3].n_excess));
    }
    let sigmas: Vec<String> = m.fits.iter().map(|f| format!("{:.1}", f.sigma)).collect();
    conclude(
        "AC2",
        &failures,
        format!(
            "start threshold {:.0}, thresholds {:.0}/{:.0}, scales {}, excesses {}/{}",
            observed().map(|d| d.start_threshold).unwrap_or(f64::NAN),
            m.rate_threshold,
            m.size_threshold,
            sigmas.join(", "),
            m.fits[2].n_excess,
            m.fits[3].n_excess
        ),
    );
}

// ---------------------------------------------------------------------------
// AC3

#[test]
fn ac3_multivariate_fits() {
    let prepared = observed().and_then(|d| {
        let m = observed_margins(d)?;
        Ok((observed_vectors(d, &m, false)?, observed_vectors(d, &m, true)?))
    });
    let (week3, sizes) = match prepared {
        Ok(v) => v,
        Err(e) => return conclude("AC3", &[e], "multivariate fits not computed".into()),
    };
    let opts = FitOptions::default();
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    let targets = [
        ("week 3", &week3, week3_family(), [194.0, 2189.0, 208.0], [194.0, 257.0, 220.0, 250.0]),
        ("sizes", &sizes, size_family(), [227.0, 2240.0, 268.0], [227.0, 334.0, 258.0, 311.0]),
    ];
    for (name, vectors, published, family_aic, ladder_aic) in targets {
        let rows = model_selection(vectors, &opts);
        for (row, want) in rows.iter().zip(family_aic) {
            match row.aic {
                Some(aic) if (aic - want).abs() <= 2.0 => {}
                Some(aic) => failures.push(format!("{name} {} AIC {aic:.1} vs {want}", row.family)),
                None => failures.push(format!("{name} {} fit failed: {:?}", row.family, row.error)),
            }
        }
        match simplify_ladder(vectors, FamilyKind::Gumbel, &opts) {
            Ok(ladder) => {
                let m1 = &ladder[0].fit.model.family;
                let (a, b) = (m1.alpha(), m1.beta());
                for j in 0..3 {
                    if rel_err(a[j], published.alpha()[j]) > 0.05 {
                        failures.push(format!("{name} alpha{} {:.3} vs {}", j + 1, a[j], published.alpha()[j]));
                    }
                }
                for j in 1..3 {
                    if rel_err(b[j], published.beta()[j]) > 0.05 {
                        failures.push(format!("{name} beta{} {:.3} vs {}", j + 1, b[j], published.beta()[j]));
                    }
                }
                for (row, want) in ladder.iter().zip(ladder_aic) {
                    if (row.aic - want).abs() > 2.0 {
                        failures.push(format!("{name} {:?} AIC {:.1} vs {want}", row.submodel, row.aic));
                    }
                    if let Some(p) = row.lr_p_value.filter(|p| *p >= 1e-3) {
                        failures.push(format!("{name} {:?} LR p {p:.2e} ≥ 1e-3", row.submodel));
                    }
                }
                summary.push(format!(
                    "{name}: alpha {:.2}/{:.2}/{:.2} beta {:.2}/{:.2}, ladder AIC {}",
                    a[0],
                    a[1],
                    a[2],
                    b[1],
                    b[2],
                    ladder.iter().map(|r| format!("{:.0}", r.aic)).collect::<Vec<_>>().join("/")
                ));
            }
            Err(e) => failures.push(format!("{name} ladder failed: {e}")),
        }
    }
    conclude("AC3", &failures, summary.join("; "));
}

// ---------------------------------------------------------------------------
// AC4

#[test]
fn ac4_prediction_2019() {
    let (y1, y2) = (366.0, 540.0);
    let cases = [
        ("week 3", week3_model(), 1729.0, [0.185, 0.012, 0.001, 0.0007]),
        ("size", size_model(), 8062.0, [0.026, 0.008, 0.003, 0.002]),
    ];
    let mut failures = Vec::new();
    let mut got_all = Vec::new();
    for (name, model, base, want) in cases {
        for (k, kappa) in [0.5, 0.75, 0.95, 1.0].into_iter().enumerate() {
            let query = PredictionQuery {
                y1,
                y2,
                level: kappa * base,
                below_threshold_prob: None,
            };
            let got = predict_level(&model, &query).unwrap();
            got_all.push(format!("{got:.4}"));
            let tol = f64::max(0.15 * want[k], 0.002);
            if (got - want[k]).abs() > tol {
                failures.push(format!("{name} kappa={kappa}: {got:.5} vs {} (±{tol})", want[k]));
            }
        }
    }
    conclude("AC4", &failures, format!("probabilities {}", got_all.join(", ")));
}

// ---------------------------------------------------------------------------
// AC5

/// Simulated demo points: (i) a vector whose third component sits at the
/// 0.99-quantile of simulated third components, and (ii) the same vector
/// with components scaled by (1.5, 0.5, 1.5).
fn demo_points(family: &GeneratorFamily) -> (ExcessVector, ExcessVector) {
    let mut draws = sample_gp(family, 100_000, 4);
    draws.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let i = draws[(0.99 * (draws.len() - 1) as f64).round() as usize];
    (i, [1.5 * i[0], 0.5 * i[1], 1.5 * i[2]])
}

#[test]
fn ac5_anomaly_calibration() {
    let family = week3_family();
    let cal = week3_calibration(1);
    let want = [(0.10, 4.72), (0.05, 5.60), (0.01, 7.79), (0.001, 14.50)];
    let mut failures = Vec::new();
    for (level, published) in want {
        let got = cal.cutoff(level).unwrap();
        if rel_err(got, published) > 0.10 {
            failures.push(format!("cutoff at {level}: {got:.2} vs {published} (±10%)"));
        }
    }
    let (point_i, point_ii) = demo_points(&family);
    let nll_i = nll_at(&family, &point_i).unwrap();
    let nll_ii = nll_at(&family, &point_ii).unwrap();
    let cut_01 = cal.cutoff(0.01).unwrap();
    let cut_001 = cal.cutoff(0.001).unwrap();
    if nll_ii <= cut_001 {
        failures.push(format!("anomalous point NLL {nll_ii:.2} not above 0.1% cutoff {cut_001:.2}"));
    }

    let swine = observed().and_then(|d| {
        let m = observed_margins(d)?;
        let thresholds = [m.rate_threshold; 3];
        let scales = [m.fits[0].sigma, m.fits[1].sigma, m.fits[2].sigma];
        // Observed vectors with a positive excess, tagged by influenza
        // season; the 2009 pandemic is the one starting in autumn 2009.
        let positive: Vec<(i32, ExcessVector)> = d
            .all
            .iter()
            .filter_map(|(start, f)| {
                let v = standardize(&[f.triple(false)?], &thresholds, &scales).ok()?;
                v.first().map(|x| (start.season(), *x))
            })
            .collect();
        let idx = positive
            .iter()
            .position(|(season, _)| *season == 2009)
            .ok_or("no 2009-10 epidemic with a positive excess vector")?;
        let vectors: Vec<ExcessVector> = positive.iter().map(|(_, x)| *x).collect();
        let loo = leave_one_out_nll(&vectors, &family, &FitOptions::quick(0)).map_err(|e| e.to_string())?;
        loo[idx].nll.ok_or_else(|| format!("swine-flu fold failed: {:?}", loo[idx].error))
    });
    let swine_text = match swine {
        Ok(nll) => {
            if nll > cut_01 {
                failures.push(format!("swine-flu NLL {nll:.2} flagged at 1% (cutoff {cut_01:.2})"));
            }
            format!("{nll:.2}")
        }
        Err(e) => {
            failures.push(format!("swine-flu check: {e}"));
            "n/a".into()
        }
    };
    let cutoffs: Vec<String> = cal.quantiles.iter().map(|q| format!("{:.2}", q.cutoff)).collect();
    conclude(
        "AC5",
        &failures,
        format!(
            "cutoffs {} from {} datasets ({} failed); NLL point (i) {nll_i:.2}, anomalous point {nll_ii:.2}, swine flu {swine_text}",
            cutoffs.join("/"),
            cal.n_datasets,
            cal.n_failed
        ),
    );
}

// ---------------------------------------------------------------------------
// AC6

fn brier_of(a: &Assessment, level_index: usize, source: PredictionSource) -> Option<f64> {
    a.levels.get(level_index)?.score(source)?.brier
}

fn ap_of(a: &Assessment, level_index: usize, source: PredictionSource) -> Option<f64> {
    a.levels.get(level_index)?.score(source)?.average_precision
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("–".into(), |v| format!("{v:.3}"))
}

#[test]
fn ac6_leave_one_out() {
    let prepared = observed().and_then(|d| Ok((d, observed_margins(d)?)));
    let (data, m) = match prepared {
        Ok(v) => v,
        Err(e) => return conclude("AC6", &[e], "leave-one-out assessment not run".into()),
    };
    let targets = [
        (
            "week 3",
            false,
            [m.rate_threshold; 3],
            1632.0,
            [0.33, 0.69],
            [0.06, 0.02],
        ),
        (
            "sizes",
            true,
            [m.rate_threshold, m.rate_threshold, m.size_threshold],
            8062.0,
            [0.44, 0.46],
            [0.005, 0.002],
        ),
    ];
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for (name, size_target, thresholds, base, gp, logistic) in targets {
        let mut config = LooConfig::new(thresholds);
        config.kappas = vec![0.5, 0.75];
        config.historical_max = Some(base);
        let a = match loo_assess(&triples(&data.estimation, size_target), &config) {
            Ok(a) => a,
            Err(e) => {
                failures.push(format!("{name}: {e}"));
                continue;
            }
        };
        for k in 0..2 {
            for (source, want) in [(PredictionSource::Gp, gp[k]), (PredictionSource::Logistic, logistic[k])] {
                let got = brier_of(&a, k, source);
                match got {
                    Some(b) if (b - want).abs() <= 0.08 => {}
                    _ => failures.push(format!("{name} {source} level {k}: {} vs {want} (±0.08)", fmt_opt(got))),
                }
            }
        }
        summary.push(format!(
            "{name} GP {}/{} logistic {}/{}",
            fmt_opt(brier_of(&a, 0, PredictionSource::Gp)),
            fmt_opt(brier_of(&a, 1, PredictionSource::Gp)),
            fmt_opt(brier_of(&a, 0, PredictionSource::Logistic)),
            fmt_opt(brier_of(&a, 1, PredictionSource::Logistic)),
        ));
    }
    conclude("AC6", &failures, summary.join("; "));
}

// ---------------------------------------------------------------------------
// AC7

#[test]
fn ac7_simulation_assessment() {
    let n_datasets = if full_scale() { 1500 } else { 300 };
    let cases = [
        (
            "week 3",
            week3_model(),
            1632.0,
            [0.72, 0.75, 0.80, 0.84],
            [0.92, 0.91, 0.93, 0.96],
        ),
        (
            "sizes",
            size_model(),
            8062.0,
            [0.40, 0.51, 0.47, 0.44],
            [0.64, 0.71, 0.64, 0.60],
        ),
    ];
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for (name, model, base, brier, ap) in cases {
        let mut config = SimAssessConfig::new(base);
        config.simulation = SimulationConfig {
            seed: 7,
            n_vectors: 33,
            n_datasets,
        };
        let a = sim_assess(&model, &config).expect("simulation assessment");
        let mut line = Vec::new();
        for k in 0..4 {
            let gb = brier_of(&a, k, PredictionSource::Gp);
            let ga = ap_of(&a, k, PredictionSource::Gp);
            match gb {
                Some(b) if (b - brier[k]).abs() <= 0.08 => {}
                _ => failures.push(format!("{name} GP Brier level {k}: {} vs {} (±0.08)", fmt_opt(gb), brier[k])),
            }
            match ga {
                Some(v) if (v - ap[k]).abs() <= 0.08 => {}
                _ => failures.push(format!("{name} GP AP level {k}: {} vs {} (±0.08)", fmt_opt(ga), ap[k])),
            }
            let lb = brier_of(&a, k, PredictionSource::Logistic);
            let la = ap_of(&a, k, PredictionSource::Logistic);
            // Logistic must be worse wherever it can be scored.
            if let (Some(l), Some(g)) = (lb, gb) {
                if l >= g {
                    failures.push(format!("{name} level {k}: logistic Brier {l:.3} not below GP {g:.3}"));
                }
            }
            if let (Some(l), Some(g)) = (la, ga) {
                if l >= g {
                    failures.push(format!("{name} level {k}: logistic AP {l:.3} not below GP {g:.3}"));
                }
            }
            line.push(format!(
                "{:.0}: GP {}/{} logistic {}/{}",
                a.levels[k].level,
                fmt_opt(gb),
                fmt_opt(ga),
                fmt_opt(lb),
                fmt_opt(la)
            ));
        }
        summary.push(format!("{name} [{}]", line.join(", ")));
    }
    conclude(
        "AC7",
        &failures,
        format!("{n_datasets} datasets, Brier/AP {}", summary.join("; ")),
    );
}

// ---------------------------------------------------------------------------
// AC8

/// Asymptotic Kolmogorov tail `P(sqrt(n) D > t)`.
fn kolmogorov_sf(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..100 {
        let k = k as f64;
        s += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * t * t).exp();
    }
    s.clamp(0.0, 1.0)
}

fn ks_exponential_p(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = 1.0 - (-x).exp();
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    kolmogorov_sf(d * n.sqrt())
}

fn property_families() -> Vec<GeneratorFamily> {
    vec![
        week3_family(),
        GeneratorFamily::new(FamilyKind::ReverseGumbel, [1.8, 3.5, 2.6], [0.0, 0.4, -0.3]).unwrap(),
        GeneratorFamily::new(FamilyKind::ReverseExponential, [0.7, 1.3, 0.9], [0.0, 0.2, -0.4]).unwrap(),
    ]
}

/// Importance-sampling estimate of the density's total mass, with i.i.d.
/// Laplace(0, 2) proposals whose tails dominate the GP tails.
fn normalization_check(failures: &mut Vec<String>) -> String {
    let b = 2.0;
    let n = 200_000;
    let mut out = Vec::new();
    for family in property_families() {
        let d = GpDensity::new(family).unwrap();
        let mut rng = RngStreams::new(11, "normalization-check").stream(0);
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let x: [f64; 3] = std::array::from_fn(|_| {
                let u: f64 = rng.random::<f64>() - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            });
            let w = if x.iter().any(|&v| v > 0.0) {
                let log_q: f64 = x.iter().map(|v| -v.abs() / b - (2.0 * b).ln()).sum();
                (d.log_density(&x).unwrap() - log_q).exp()
            } else {
                0.0
            };
            sum += w;
            sum2 += w * w;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        if (mean - 1.0).abs() >= 3.0 * se {
            failures.push(format!("{} mass {mean:.4} ± {se:.4}", family.kind()));
        }
        out.push(format!("{mean:.3}"));
    }
    format!("mass {}", out.join("/"))
}

fn margins_check(failures: &mut Vec<String>) -> String {
    let mut min_p: f64 = 1.0;
    for family in property_families() {
        let draws = sample_gp(&family, 100_000, 5);
        if !draws.iter().all(|x| x.iter().any(|&v| v > 0.0)) {
            failures.push(format!("{}: draw without a positive component", family.kind()));
        }
        for j in 0..3 {
            let pos: Vec<f64> = draws.iter().map(|x| x[j]).filter(|&v| v > 0.0).collect();
            let p = ks_exponential_p(pos);
            min_p = min_p.min(p);
            if p <= 0.01 {
                failures.push(format!("{} component {j}: KS p = {p:.4}", family.kind()));
            }
        }
    }
    format!("min KS p {min_p:.3}")
}

fn case_iii_check(failures: &mut Vec<String>) -> String {
    for family in property_families() {
        for (x1, x2, v3) in [(-0.4, -0.2, -0.5), (-0.4, 0.0, 0.0), (-2.0, -1.0, -0.01)] {
            let p = conditional_exceedance(&family, x1, x2, v3).unwrap();
            if p != 1.0 {
                failures.push(format!("{} case iii at ({x1}, {x2}, {v3}) = {p}", family.kind()));
            }
        }
    }
    "case iii exact".into()
}

/// Conditional probabilities against 10⁷ simulated vectors: within a
/// small cell around the conditioning values, the empirical exceedance
/// frequency matches the cell-averaged model probability.
fn brute_force_check(failures: &mut Vec<String>) -> String {
    let family = week3_family();
    let draws = sample_gp(&family, 10_000_000, 21);
    let mut worst: f64 = 0.0;
    for (c1, c2, v3) in [(0.5, 0.3, 0.8), (0.2, -0.1, 0.0), (-0.3, -0.2, 0.6)] {
        let cell: Vec<&[f64; 3]> = draws
            .iter()
            .filter(|x| (x[0] - c1).abs() < 0.05 && (x[1] - c2).abs() < 0.05)
            .collect();
        let n = cell.len() as f64;
        if n < 2000.0 {
            failures.push(format!("cell ({c1}, {c2}) has only {n} draws"));
            continue;
        }
        let hits = cell.iter().filter(|x| x[2] > v3).count() as f64 / n;
        let model: Vec<f64> = cell
            .iter()
            .step_by(((n as usize) / 2000).max(1))
            .map(|x| conditional_exceedance(&family, x[0], x[1], v3).unwrap())
            .collect();
        let p = model.iter().sum::<f64>() / model.len() as f64;
        let se = (p * (1.0 - p) / n).sqrt();
        worst = worst.max((hits - p).abs() / se);
        if (hits - p).abs() >= 3.0 * se {
            failures.push(format!("cell ({c1}, {c2}), v3 = {v3}: {hits:.4} vs {p:.4} ± {se:.4}"));
        }
    }
    format!("brute force within {worst:.2} SE")
}

fn scoring_check(failures: &mut Vec<String>) -> String {
    let outcomes = [true, false, false, true, false, false, false, true, false, false];
    let base = outcomes.iter().filter(|&&o| o).count() as f64 / outcomes.len() as f64;
    let records = |p: &dyn Fn(bool) -> f64| -> Vec<PredictionRecord> {
        outcomes
            .iter()
            .enumerate()
            .map(|(i, &o)| PredictionRecord::new(i, 1.0, p(o), o, PredictionSource::Gp).unwrap())
            .collect()
    };
    let base_rate = brier_standardized(&records(&|_| base)).unwrap();
    let perfect = brier_standardized(&records(&|o| if o { 1.0 } else { 0.0 })).unwrap();
    let ranked = average_precision(&records(&|o| if o { 0.9 } else { 0.2 })).unwrap();
    if base_rate.abs() > 1e-12 {
        failures.push(format!("base-rate Brier {base_rate}"));
    }
    if (perfect - 1.0).abs() > 1e-12 {
        failures.push(format!("perfect Brier {perfect}"));
    }
    if (ranked - 1.0).abs() > 1e-12 {
        failures.push(format!("perfect-ranking AP {ranked}"));
    }
    "Brier/AP identities".into()
}

/// Flag rate at each level on self-simulated data: cutoffs from one
/// calibration, held-out NLLs from an independent one.
fn flag_rate_check(failures: &mut Vec<String>) -> String {
    let cal = week3_calibration(1);
    let trials = week3_calibration(2);
    let n = trials.nlls.len() as f64;
    let mut rates = Vec::new();
    for q in &cal.quantiles {
        let rate = trials.nlls.iter().filter(|&&v| v > q.cutoff).count() as f64 / n;
        let se = (q.level * (1.0 - q.level) / n).sqrt();
        if (rate - q.level).abs() > 2.0 * se {
            failures.push(format!("flag rate at {}: {rate:.4} (±{:.4})", q.level, 2.0 * se));
        }
        rates.push(format!("{rate:.4}"));
    }
    format!("flag rates {} over {n} trials", rates.join("/"))
}

#[test]
fn ac8_property_suite() {
    let mut failures = Vec::new();
    let parts = [
        normalization_check(&mut failures),
        margins_check(&mut failures),
        case_iii_check(&mut failures),
        brute_force_check(&mut failures),
        scoring_check(&mut failures),
        flag_rate_check(&mut failures),
    ];
    conclude("AC8", &failures, parts.join(", "));
}
