use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::density::{is_positive_excess, ExcessVector, GpDensity};
use super::generator::{FamilyKind, GeneratorFamily};
use crate::error::{Error, Result};
use crate::optim::{multi_start, MultiStartOptions};
use crate::stats::{mean, variance};

/// Nested parameterizations of the three-component generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Submodel {
    /// Three shapes, two free locations.
    #[default]
    M1,
    /// Three shapes, all locations 0.
    M2,
    /// One common shape, two free locations.
    M3,
    /// One common shape, all locations 0.
    M4,
}

impl Submodel {
    pub const ALL: [Submodel; 4] = [Submodel::M1, Submodel::M2, Submodel::M3, Submodel::M4];

    pub fn n_params(self) -> usize {
        match self {
            Submodel::M1 => 5,
            Submodel::M2 | Submodel::M3 => 3,
            Submodel::M4 => 1,
        }
    }

    /// Maps unconstrained coordinates to `(alpha, beta)`.
    pub fn unpack(self, kind: FamilyKind, theta: &[f64]) -> ([f64; 3], [f64; 3]) {
        let shape = |a: f64| match kind {
            FamilyKind::Gumbel => 1.0 + a.exp(),
            _ => a.exp(),
        };
        match self {
            Submodel::M1 => (
                [shape(theta[0]), shape(theta[1]), shape(theta[2])],
                [0.0, theta[3], theta[4]],
            ),
            Submodel::M2 => ([shape(theta[0]), shape(theta[1]), shape(theta[2])], [0.0; 3]),
            Submodel::M3 => ([shape(theta[0]); 3], [0.0, theta[1], theta[2]]),
            Submodel::M4 => ([shape(theta[0]); 3], [0.0; 3]),
        }
    }

    /// Inverse of [`Submodel::unpack`] for parameters inside this submodel;
    /// shapes of coarser submodels are averaged on the log scale.
    pub fn pack(self, kind: FamilyKind, alpha: [f64; 3], beta: [f64; 3]) -> Vec<f64> {
        let raw = |a: f64| match kind {
            FamilyKind::Gumbel => (a - 1.0).max(1e-6).ln(),
            _ => a.ln(),
        };
        let common = (alpha.iter().map(|a| a.ln()).sum::<f64>() / 3.0).exp();
        match self {
            Submodel::M1 => vec![raw(alpha[0]), raw(alpha[1]), raw(alpha[2]), beta[1], beta[2]],
            Submodel::M2 => vec![raw(alpha[0]), raw(alpha[1]), raw(alpha[2])],
            Submodel::M3 => vec![raw(common), beta[1], beta[2]],
            Submodel::M4 => vec![raw(common)],
        }
    }
}

/// A fitted (or externally supplied) three-dimensional GP model together
/// with the marginal standardization it applies to raw observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvGpModel {
    #[serde(flatten)]
    pub family: GeneratorFamily,
    #[serde(default)]
    pub submodel: Submodel,
    pub scales: [f64; 3],
    pub thresholds: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loglik: Option<f64>,
    #[serde(default)]
    pub n: usize,
    /// Largest third component in the training history, the base for
    /// levels expressed as fractions of the historical maximum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub historical_max: Option<f64>,
    /// Empirical probability that the third component exceeds its threshold
    /// when the first two do not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub below_threshold_prob: Option<f64>,
}

impl MvGpModel {
    /// A model in standard units (unit scales, zero thresholds).
    pub fn standard(family: GeneratorFamily) -> Self {
        Self {
            family,
            submodel: Submodel::M1,
            scales: [1.0; 3],
            thresholds: [0.0; 3],
            loglik: None,
            n: 0,
            historical_max: None,
            below_threshold_prob: None,
        }
    }

    pub fn with_margins(mut self, thresholds: [f64; 3], scales: [f64; 3]) -> Self {
        self.thresholds = thresholds;
        self.scales = scales;
        self
    }

    pub fn density(&self) -> Result<GpDensity> {
        GpDensity::new(self.family)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: Self = serde_json::from_str(&text)?;
        if m.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::domain(format!("model scales must be positive, got {:?}", m.scales)));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub multi_start: MultiStartOptions,
    /// Coordinates closer than this to the edge of a transformed range
    /// (e.g. a Gumbel shape within `exp(-boundary_log)` of 1) are reported
    /// as boundary solutions.
    pub boundary_log: f64,
    /// Also start from the moment-based guess. Refits that are given a
    /// good anchor (e.g. the model that simulated the data) can skip it.
    #[serde(default = "yes")]
    pub moment_start: bool,
}

fn yes() -> bool {
    true
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            multi_start: MultiStartOptions::default(),
            boundary_log: 8.0,
            moment_start: true,
        }
    }
}

impl FitOptions {
    /// Cheaper settings for the thousands of refits of calibration and
    /// assessment runs.
    pub fn quick(seed: u64) -> Self {
        let mut o = Self::default();
        o.multi_start.starts = 2;
        o.multi_start.seed = seed;
        o.multi_start.simplex.f_rel_tol = 1e-8;
        o.multi_start.simplex.x_tol = 1e-5;
        o
    }

    /// A single local search from the supplied anchors only.
    pub fn anchored(seed: u64) -> Self {
        let mut o = Self::quick(seed);
        o.multi_start.starts = 1;
        o.moment_start = false;
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvGpFit {
    pub model: MvGpModel,
    pub n_params: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    /// Set when a parameter ended at the edge of its admissible range.
    pub at_boundary: bool,
    pub evaluations: usize,
    /// Objective reached from each start.
    pub trace: Vec<f64>,
}

/// Log-likelihood of standardized vectors under `family`.
pub fn log_likelihood(family: &GeneratorFamily, vectors: &[ExcessVector]) -> Result<f64> {
    let d = GpDensity::new(*family)?;
    vectors.iter().map(|x| d.log_density(x)).sum()
}

/// Moment-based starting values.
///
/// Component differences `X_i - X_j` behave like generator differences
/// `U_i - U_j`, whose variances determine the shapes and whose means
/// determine the location offsets.
pub fn moment_start(kind: FamilyKind, vectors: &[ExcessVector]) -> ([f64; 3], [f64; 3]) {
    let diff = |i: usize, j: usize| -> Vec<f64> { vectors.iter().map(|x| x[i] - x[j]).collect() };
    let (v01, v02, v12) = (variance(&diff(0, 1)), variance(&diff(0, 2)), variance(&diff(1, 2)));
    let c = match kind {
        FamilyKind::ReverseExponential => 1.0,
        _ => std::f64::consts::PI.powi(2) / 6.0,
    };
    // Per-component variance of U_i.
    let var = [
        0.5 * (v01 + v02 - v12),
        0.5 * (v01 + v12 - v02),
        0.5 * (v02 + v12 - v01),
    ];
    let floor = 0.05 * (v01 + v02 + v12) / 3.0 + 1e-6;
    let mut alpha = [0.0; 3];
    for i in 0..3 {
        let v = var[i].max(floor);
        alpha[i] = match kind {
            FamilyKind::ReverseExponential => v.sqrt(),
            _ => (c / v).sqrt(),
        };
        if kind == FamilyKind::Gumbel {
            alpha[i] = alpha[i].max(1.1);
        }
        alpha[i] = alpha[i].clamp(0.05, 200.0);
    }
    const EULER: f64 = 0.577_215_664_901_532_9;
    let mut beta = [0.0; 3];
    for j in 1..3 {
        let d = mean(&diff(j, 0));
        beta[j] = match kind {
            FamilyKind::Gumbel => d - EULER * (1.0 / alpha[j] - 1.0 / alpha[0]),
            FamilyKind::ReverseGumbel => d + EULER * (1.0 / alpha[j] - 1.0 / alpha[0]),
            FamilyKind::ReverseExponential => -d - alpha[j] + alpha[0],
        };
    }
    (alpha, beta)
}

/// Maximum-likelihood fit of a generator family and submodel to
/// standardized positive excess vectors.
///
/// `extra_starts` are additional `(alpha, beta)` anchors, e.g. the
/// parameters of a parent model being refitted.
pub fn fit_mvgp_with(
    vectors: &[ExcessVector],
    kind: FamilyKind,
    submodel: Submodel,
    opts: &FitOptions,
    extra_starts: &[([f64; 3], [f64; 3])],
) -> Result<MvGpFit> {
    if vectors.len() < 10 {
        return Err(Error::Fitting(format!(
            "at least 10 positive excess vectors are needed, got {}",
            vectors.len()
        )));
    }
    if let Some(x) = vectors.iter().find(|x| !is_positive_excess(x) || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::domain(format!("{x:?} is not a positive excess vector")));
    }
    let objective = |theta: &[f64]| -> f64 {
        let (alpha, beta) = submodel.unpack(kind, theta);
        match GeneratorFamily::new(kind, alpha, beta).and_then(|f| log_likelihood(&f, vectors)) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        }
    };
    let mut anchors: Vec<Vec<f64>> = extra_starts.iter().map(|(a, b)| submodel.pack(kind, *a, *b)).collect();
    if opts.moment_start || anchors.is_empty() {
        let (a0, b0) = moment_start(kind, vectors);
        anchors.push(submodel.pack(kind, a0, b0));
    }
    let res = multi_start(&objective, &anchors, &opts.multi_start)?;
    let theta = &res.best.x;
    let (alpha, beta) = submodel.unpack(kind, theta);
    let family = GeneratorFamily::new(kind, alpha, beta)?;
    let loglik = -res.best.value;
    let k = submodel.n_params();
    let n = vectors.len() as f64;
    let n_shapes = match submodel {
        Submodel::M1 | Submodel::M2 => 3,
        _ => 1,
    };
    let at_boundary = theta[..n_shapes].iter().any(|a| a.abs() > opts.boundary_log);
    if at_boundary {
        log::warn!("{kind} {submodel:?} fit converged at a parameter boundary: {theta:?}");
    }
    Ok(MvGpFit {
        model: MvGpModel {
            family,
            submodel,
            scales: [1.0; 3],
            thresholds: [0.0; 3],
            loglik: Some(loglik),
            n: vectors.len(),
            historical_max: None,
            below_threshold_prob: None,
        },
        n_params: k,
        loglik,
        aic: 2.0 * k as f64 - 2.0 * loglik,
        bic: k as f64 * n.ln() - 2.0 * loglik,
        converged: res.best.converged,
        at_boundary,
        evaluations: res.best.evaluations,
        trace: res.trace,
    })
}

/// [`fit_mvgp_with`] using default options and no extra starts.
pub fn fit_mvgp(vectors: &[ExcessVector], kind: FamilyKind, submodel: Submodel) -> Result<MvGpFit> {
    fit_mvgp_with(vectors, kind, submodel, &FitOptions::default(), &[])
}

/// Fits several independent datasets concurrently.
pub fn fit_many(
    datasets: &[Vec<ExcessVector>],
    kind: FamilyKind,
    submodel: Submodel,
    opts: &FitOptions,
) -> Vec<Result<MvGpFit>> {
    datasets
        .par_iter()
        .map(|d| fit_mvgp_with(d, kind, submodel, opts, &[]))
        .collect()
}
