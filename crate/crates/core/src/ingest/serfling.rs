use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::series::IncidenceSeries;
use crate::error::{Error, Result};
use crate::stats::normal_quantile;

/// Cyclic-regression baseline settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerflingConfig {
    /// Length of the annual cycle in weeks.
    pub period_weeks: f64,
    /// Coverage of the two-sided prediction interval whose upper bound is
    /// the epidemic threshold.
    pub interval_coverage: f64,
    pub max_iter: usize,
}

impl Default for SerflingConfig {
    fn default() -> Self {
        Self {
            period_weeks: 52.18,
            interval_coverage: 0.90,
            max_iter: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerflingBaseline {
    /// Intercept, trend (per year), cosine and sine coefficients.
    pub coefficients: [f64; 4],
    pub residual_sd: f64,
    pub fitted: Vec<f64>,
    /// Upper bound of the prediction interval, one value per week.
    pub upper: Vec<f64>,
    /// Weeks left out of the final regression.
    pub excluded: Vec<bool>,
    pub iterations: usize,
}

fn design_row(i: usize, n: usize, period: f64) -> [f64; 4] {
    let t = i as f64;
    let centered = (t - 0.5 * (n as f64 - 1.0)) / 52.0;
    let angle = 2.0 * std::f64::consts::PI * t / period;
    [1.0, centered, angle.cos(), angle.sin()]
}

/// Serfling cyclic regression with iterative exclusion of epidemic weeks.
///
/// The model is `rate = a + b·t + c·cos(2πt/P) + d·sin(2πt/P)`. Epidemic
/// weeks (runs of at least two consecutive weeks above the current upper
/// bound) are dropped and the model refitted until the excluded set no
/// longer changes. Isolated exceedances are ordinary noise and stay in.
pub fn serfling_baseline(series: &IncidenceSeries, config: &SerflingConfig) -> Result<SerflingBaseline> {
    let n = series.len();
    if (n as f64) < 2.0 * config.period_weeks {
        return Err(Error::Calibration(format!(
            "cyclic regression needs at least two years of weekly data, got {n} weeks"
        )));
    }
    let rates = series.rates();
    let z = normal_quantile(0.5 + 0.5 * config.interval_coverage);
    let scale = rates.iter().map(|r| r.abs()).sum::<f64>() / n as f64;
    let sd_floor = 1e-6 * scale.max(1.0);

    let mut excluded = vec![false; n];
    for iteration in 1..=config.max_iter {
        let included: Vec<usize> = (0..n).filter(|&i| !excluded[i]).collect();
        if included.len() < 8 {
            return Err(Error::Calibration(format!(
                "only {} non-epidemic weeks left after exclusion",
                included.len()
            )));
        }
        let x = DMatrix::from_fn(included.len(), 4, |r, c| design_row(included[r], n, config.period_weeks)[c]);
        let y = DVector::from_iterator(included.len(), included.iter().map(|&i| rates[i]));
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        let beta = xtx
            .cholesky()
            .ok_or_else(|| Error::Calibration("singular cyclic-regression design".into()))?
            .solve(&xty);
        let resid = &y - &x * &beta;
        let dof = (included.len() - 4) as f64;
        let residual_sd = (resid.norm_squared() / dof).sqrt().max(sd_floor);

        let fitted: Vec<f64> = (0..n)
            .map(|i| {
                let row = design_row(i, n, config.period_weeks);
                (0..4).map(|c| row[c] * beta[c]).sum()
            })
            .collect();
        let upper: Vec<f64> = fitted.iter().map(|f| f + z * residual_sd).collect();
        let above: Vec<bool> = rates.iter().zip(&upper).map(|(r, u)| r > u).collect();
        let next = in_runs_of_two(&above);
        if next == excluded {
            return Ok(SerflingBaseline {
                coefficients: [beta[0], beta[1], beta[2], beta[3]],
                residual_sd,
                fitted,
                upper,
                excluded,
                iterations: iteration,
            });
        }
        excluded = next;
    }
    Err(Error::Calibration(format!(
        "epidemic-week exclusion did not stabilize within {} iterations",
        config.max_iter
    )))
}

/// Marks the members of runs of at least two consecutive `true` values.
fn in_runs_of_two(above: &[bool]) -> Vec<bool> {
    (0..above.len())
        .map(|i| above[i] && ((i > 0 && above[i - 1]) || (i + 1 < above.len() && above[i + 1])))
        .collect()
}

/// Maximal runs of at least two consecutive weeks above the baseline's
/// upper bound, as inclusive `(start, end)` index pairs.
pub fn serfling_episodes(series: &IncidenceSeries, baseline: &SerflingBaseline) -> Vec<(usize, usize)> {
    let above: Vec<bool> = series
        .records()
        .iter()
        .zip(&baseline.upper)
        .map(|(r, u)| r.rate > *u)
        .collect();
    runs(&above).into_iter().filter(|(s, e)| e > s).collect()
}

/// Maximal runs of `true`, as inclusive index pairs.
pub(crate) fn runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, flags.len() - 1));
    }
    out
}
