//! Univariate peaks-over-threshold: generalized Pareto fits to threshold
//! excesses, the tail estimator and return levels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::brent_minimize;
use crate::stats::{lr_p_value, normal_quantile};

/// Shape values with `|γ|` below this are treated as exactly exponential.
const GAMMA_ZERO: f64 = 1e-12;

fn check_scale(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("GP scale must be positive, got {sigma}")))
    }
}

/// `H(x) = 1 - (1 + γx/σ)^{-1/γ}`, the exponential cdf at `γ = 0`.
pub fn gp_cdf(x: f64, sigma: f64, gamma: f64) -> Result<f64> {
    check_scale(sigma)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    if gamma.abs() < GAMMA_ZERO {
        return Ok(-(-x / sigma).exp_m1());
    }
    let t = gamma * x / sigma;
    if t <= -1.0 {
        return Ok(1.0);
    }
    Ok(-(-t.ln_1p() / gamma).exp_m1())
}

/// Quantile of the GP distribution: `H^{-1}(q)`.
pub fn gp_quantile(q: f64, sigma: f64, gamma: f64) -> Result<f64> {
    check_scale(sigma)?;
    if !(0.0..1.0).contains(&q) {
        return Err(Error::domain(format!("GP quantile level {q} outside [0, 1)")));
    }
    let log_sf = (-q).ln_1p();
    if gamma.abs() < GAMMA_ZERO {
        Ok(-sigma * log_sf)
    } else {
        Ok(sigma * (-gamma * log_sf).exp_m1() / gamma)
    }
}

/// Log-likelihood of excesses under GP(σ, γ); `-inf` outside the support.
pub fn gp_log_likelihood(excesses: &[f64], sigma: f64, gamma: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let n = excesses.len() as f64;
    if gamma.abs() < GAMMA_ZERO {
        return -n * sigma.ln() - excesses.iter().sum::<f64>() / sigma;
    }
    let mut acc = -n * sigma.ln();
    for &x in excesses {
        let t = 1.0 + gamma * x / sigma;
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc -= (1.0 + 1.0 / gamma) * t.ln();
    }
    acc
}

/// Excesses of `values` over `threshold` with the exceedance frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotSample {
    pub threshold: f64,
    pub exceed_freq: f64,
    pub excesses: Vec<f64>,
    pub n_total: usize,
}

/// Keeps strict exceedances of `threshold`.
pub fn pot_excesses(values: &[f64], threshold: f64) -> PotSample {
    let excesses: Vec<f64> = values.iter().filter(|&&v| v > threshold).map(|v| v - threshold).collect();
    PotSample {
        threshold,
        exceed_freq: if values.is_empty() {
            0.0
        } else {
            excesses.len() as f64 / values.len() as f64
        },
        excesses,
        n_total: values.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnivariateGpFit {
    pub threshold: f64,
    pub exceed_freq: f64,
    pub sigma: f64,
    pub gamma: f64,
    /// True when the shape was fixed at 0 (exponential excesses).
    pub gamma_fixed: bool,
    pub log_lik: f64,
    /// 95% normal-approximation interval for σ from the observed
    /// information.
    pub sigma_ci: (f64, f64),
    pub n_excess: usize,
}

impl UnivariateGpFit {
    /// Attaches the threshold and exceedance frequency of the sample the
    /// excesses came from.
    pub fn with_tail(mut self, threshold: f64, exceed_freq: f64) -> Self {
        self.threshold = threshold;
        self.exceed_freq = exceed_freq;
        self
    }
}

fn validate_excesses(excesses: &[f64], min: usize) -> Result<()> {
    if excesses.len() < min {
        return Err(Error::Fitting(format!(
            "need at least {min} excesses, got {}",
            excesses.len()
        )));
    }
    if let Some(x) = excesses.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::domain(format!("excesses must be positive and finite, got {x}")));
    }
    Ok(())
}

/// Exponential (γ = 0) fit: σ̂ is the mean excess and the observed
/// information `n/σ̂²` gives the interval `σ̂ ± 1.96 σ̂/√n`.
pub fn fit_exponential(excesses: &[f64]) -> Result<UnivariateGpFit> {
    validate_excesses(excesses, 1)?;
    let n = excesses.len();
    let sigma = excesses.iter().sum::<f64>() / n as f64;
    let half = normal_quantile(0.975) * sigma / (n as f64).sqrt();
    Ok(UnivariateGpFit {
        threshold: 0.0,
        exceed_freq: 1.0,
        sigma,
        gamma: 0.0,
        gamma_fixed: true,
        log_lik: gp_log_likelihood(excesses, sigma, 0.0),
        sigma_ci: (sigma - half, sigma + half),
        n_excess: n,
    })
}

/// Profile likelihood of γ: `max_σ ℓ(σ, γ)`, returned as `(σ̂(γ), ℓ)`.
fn profile(excesses: &[f64], gamma: f64) -> (f64, f64) {
    let xmax = excesses.iter().cloned().fold(0.0, f64::max);
    let mean = excesses.iter().sum::<f64>() / excesses.len() as f64;
    let lo = if gamma < 0.0 {
        (-gamma * xmax * (1.0 + 1e-9)).ln()
    } else {
        (1e-4 * mean).ln()
    };
    let hi = (50.0 * xmax * (1.0 + gamma.abs())).ln().max(lo + 1.0);
    let (tau, nll) = brent_minimize(|t: f64| -gp_log_likelihood(excesses, t.exp(), gamma), lo, hi, 1e-10, 200);
    (tau.exp(), -nll)
}

/// Free-shape GP fit.
///
/// Maximizes the profile likelihood over `γ ∈ [-0.9, 2]`: a coarse grid
/// locates the best region, Brent's method refines it, and each profile
/// value is itself a one-dimensional maximization over `log σ`.
pub fn fit_gp_excesses(excesses: &[f64]) -> Result<UnivariateGpFit> {
    validate_excesses(excesses, 5)?;
    const LO: f64 = -0.9;
    const HI: f64 = 2.0;
    let grid = 58;
    let step = (HI - LO) / grid as f64;
    let (best_k, _) = (0..=grid)
        .map(|k| (k, profile(excesses, LO + step * k as f64).1))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    let a = (LO + step * (best_k as f64 - 1.0)).max(LO);
    let b = (LO + step * (best_k as f64 + 1.0)).min(HI);
    let (gamma, neg) = brent_minimize(|g| -profile(excesses, g).1, a, b, 1e-9, 200);
    if !neg.is_finite() {
        return Err(Error::Optimization {
            message: "GP profile likelihood is not finite anywhere in the shape range".into(),
            evaluations: grid + 200,
            best: neg,
        });
    }
    let (sigma, log_lik) = profile(excesses, gamma);

    // Observed information by central differences on (σ, γ).
    let f = |s: f64, g: f64| gp_log_likelihood(excesses, s, g);
    let (hs, hg) = (1e-4 * sigma, 1e-4);
    let fss = (f(sigma + hs, gamma) - 2.0 * log_lik + f(sigma - hs, gamma)) / (hs * hs);
    let fgg = (f(sigma, gamma + hg) - 2.0 * log_lik + f(sigma, gamma - hg)) / (hg * hg);
    let fsg = (f(sigma + hs, gamma + hg) - f(sigma + hs, gamma - hg) - f(sigma - hs, gamma + hg)
        + f(sigma - hs, gamma - hg))
        / (4.0 * hs * hg);
    let det = fss * fgg - fsg * fsg;
    let var_sigma = -fgg / det;
    let half = if var_sigma > 0.0 && var_sigma.is_finite() {
        normal_quantile(0.975) * var_sigma.sqrt()
    } else {
        f64::NAN
    };
    Ok(UnivariateGpFit {
        threshold: 0.0,
        exceed_freq: 1.0,
        sigma,
        gamma,
        gamma_fixed: false,
        log_lik,
        sigma_ci: (sigma - half, sigma + half),
        n_excess: excesses.len(),
    })
}

/// Likelihood-ratio test of `γ = 0`: p-value of the deviance
/// `2(ℓ_free - ℓ_exp)` under χ²(1), with negative deviances clamped to 0.
pub fn lr_test_gamma_zero(fit_free: &UnivariateGpFit, fit_exp: &UnivariateGpFit) -> Result<f64> {
    if fit_free.n_excess != fit_exp.n_excess {
        return Err(Error::domain(format!(
            "fits use different data ({} vs {} excesses)",
            fit_free.n_excess, fit_exp.n_excess
        )));
    }
    Ok(lr_p_value(fit_free.log_lik, fit_exp.log_lik, 1))
}

/// Tail estimator `F̂(y) = 1 - p̂_u (1 - Ĥ(y - u))` for `y > u`.
pub fn tail_cdf(y: f64, fit: &UnivariateGpFit) -> Result<f64> {
    if !(y > fit.threshold) {
        return Err(Error::domain(format!(
            "tail estimate needs y > u = {}, got {y}",
            fit.threshold
        )));
    }
    let h = gp_cdf(y - fit.threshold, fit.sigma, fit.gamma)?;
    Ok(1.0 - fit.exceed_freq * (1.0 - h))
}

/// Level exceeded with probability `1 - alpha` over `n` independent
/// episodes. For exponential excesses this is
/// `u + σ̂ (log p̂_u - log(1 - α^{1/n}))`.
pub fn return_level(fit: &UnivariateGpFit, alpha: f64, n: u32) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || n == 0 {
        return Err(Error::domain(format!("need 0 < alpha < 1 and n ≥ 1, got {alpha}, {n}")));
    }
    // 1 - α^{1/n}, accurate for α near 1.
    let per_episode = -(alpha.ln() / f64::from(n)).exp_m1();
    if fit.exceed_freq < per_episode {
        return Err(Error::domain(format!(
            "level below threshold not estimable: exceedance frequency {} < {per_episode}",
            fit.exceed_freq
        )));
    }
    let q = 1.0 - per_episode / fit.exceed_freq;
    Ok(fit.threshold + gp_quantile(q, fit.sigma, fit.gamma)?)
}

/// Pairs `(theoretical quantile, ordered excess)` at plotting positions
/// `i/(n+1)`.
pub fn qq_plot_data(excesses: &[f64], fit: &UnivariateGpFit) -> Vec<(f64, f64)> {
    let mut sorted = excesses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let q = gp_quantile((i + 1) as f64 / (n + 1.0), fit.sigma, fit.gamma).unwrap_or(f64::NAN);
            (q, x)
        })
        .collect()
}
