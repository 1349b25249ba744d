use std::fmt;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::optim::open_unit;
use crate::quad::{integrate_log_smooth, integrate_log_unimodal, Tolerance};

/// Marginal law of the generator components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Gumbel,
    ReverseExponential,
    ReverseGumbel,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 3] = [FamilyKind::Gumbel, FamilyKind::ReverseGumbel, FamilyKind::ReverseExponential];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Gumbel => "gumbel",
            FamilyKind::ReverseExponential => "reverse_exponential",
            FamilyKind::ReverseGumbel => "reverse_gumbel",
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gumbel" => Ok(FamilyKind::Gumbel),
            "reverse_exponential" | "revexp" => Ok(FamilyKind::ReverseExponential),
            "reverse_gumbel" | "revgumbel" => Ok(FamilyKind::ReverseGumbel),
            other => Err(Error::Config(format!("unknown generator family `{other}`"))),
        }
    }
}

#[derive(Deserialize)]
struct RawFamily {
    family: FamilyKind,
    alpha: [f64; 3],
    beta: [f64; 3],
}

/// A generator with three independent components.
///
/// Component `i` has shape `alpha[i]` and location `beta[i]`; `beta[0]` is
/// pinned to 0 for identifiability. Gumbel generators need every
/// `alpha[i] > 1` so that `E[exp(max U)]` is finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFamily")]
pub struct GeneratorFamily {
    #[serde(rename = "family")]
    kind: FamilyKind,
    alpha: [f64; 3],
    beta: [f64; 3],
    #[serde(skip)]
    log_alpha: [f64; 3],
}

impl TryFrom<RawFamily> for GeneratorFamily {
    type Error = Error;
    fn try_from(r: RawFamily) -> Result<Self> {
        GeneratorFamily::new(r.family, r.alpha, r.beta)
    }
}

impl GeneratorFamily {
    pub fn new(kind: FamilyKind, alpha: [f64; 3], beta: [f64; 3]) -> Result<Self> {
        if alpha.iter().chain(&beta).any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite generator parameters {alpha:?} {beta:?}")));
        }
        if beta[0] != 0.0 {
            return Err(Error::domain(format!("first location must be 0, got {}", beta[0])));
        }
        let min_alpha = if kind == FamilyKind::Gumbel { 1.0 } else { 0.0 };
        if let Some(a) = alpha.iter().find(|&&a| a <= min_alpha) {
            return Err(Error::domain(format!(
                "{kind} shape parameters must exceed {min_alpha}, got {a}"
            )));
        }
        Ok(Self {
            kind,
            alpha,
            beta,
            log_alpha: alpha.map(f64::ln),
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn alpha(&self) -> [f64; 3] {
        self.alpha
    }

    pub fn beta(&self) -> [f64; 3] {
        self.beta
    }

    /// Upper end of the support of component `i`.
    pub fn support_upper(&self, i: usize) -> f64 {
        match self.kind {
            FamilyKind::ReverseExponential => -self.beta[i],
            _ => f64::INFINITY,
        }
    }

    /// Whether every marginal density is analytic on the whole real line,
    /// so that integrals over `s` can use the fast smooth rule.
    pub fn is_smooth(&self) -> bool {
        self.kind != FamilyKind::ReverseExponential
    }

    /// Width of the narrowest marginal density, `1 / max α`.
    pub fn feature_scale(&self) -> f64 {
        1.0 / self.alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `log f_i(u)`; `-inf` outside the support.
    #[inline]
    pub fn marginal_log_density(&self, i: usize, u: f64) -> f64 {
        let (a, b, la) = (self.alpha[i], self.beta[i], self.log_alpha[i]);
        match self.kind {
            FamilyKind::Gumbel => {
                let z = a * (u - b);
                la - z - (-z).exp()
            }
            FamilyKind::ReverseGumbel => {
                let z = a * (u - b);
                la + z - z.exp()
            }
            FamilyKind::ReverseExponential => {
                if u < -b {
                    (u + b) / a - la
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// `log F_i(u)`.
    #[inline]
    pub fn marginal_log_cdf(&self, i: usize, u: f64) -> f64 {
        let (a, b) = (self.alpha[i], self.beta[i]);
        match self.kind {
            FamilyKind::Gumbel => -(-a * (u - b)).exp(),
            FamilyKind::ReverseGumbel => (-(a * (u - b)).exp()).ln_1p_neg_exp(),
            FamilyKind::ReverseExponential => ((u + b) / a).min(0.0),
        }
    }

    /// `log(1 - F_i(u))`.
    #[inline]
    pub fn marginal_log_sf(&self, i: usize, u: f64) -> f64 {
        let (a, b) = (self.alpha[i], self.beta[i]);
        match self.kind {
            FamilyKind::Gumbel => (-(-a * (u - b)).exp()).ln_1p_neg_exp(),
            FamilyKind::ReverseGumbel => -(a * (u - b)).exp(),
            FamilyKind::ReverseExponential => {
                if u < -b {
                    ((u + b) / a).ln_1p_neg_exp()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// `log E[exp(U_i)]`.
    pub fn log_mean_exp(&self, i: usize) -> f64 {
        let (a, b) = (self.alpha[i], self.beta[i]);
        match self.kind {
            FamilyKind::Gumbel => b + ln_gamma(1.0 - 1.0 / a),
            FamilyKind::ReverseGumbel => b + ln_gamma(1.0 + 1.0 / a),
            FamilyKind::ReverseExponential => -b - (a + 1.0).ln(),
        }
    }

    /// Draws component `i` from its marginal law.
    pub fn sample_component<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> f64 {
        let (a, b) = (self.alpha[i], self.beta[i]);
        match self.kind {
            FamilyKind::Gumbel => {
                let e: f64 = Exp1.sample(rng);
                b - e.ln() / a
            }
            FamilyKind::ReverseGumbel => {
                let e: f64 = Exp1.sample(rng);
                b + e.ln() / a
            }
            FamilyKind::ReverseExponential => -b + a * open_unit(rng).ln(),
        }
    }

    /// Draws component `i` from the exponentially tilted law
    /// `e^u f_i(u) / E[e^{U_i}]`.
    pub fn sample_tilted_component<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> f64 {
        let (a, b) = (self.alpha[i], self.beta[i]);
        match self.kind {
            FamilyKind::Gumbel => {
                let w = Gamma::new(1.0 - 1.0 / a, 1.0).expect("shape > 0").sample(rng);
                b - w.ln() / a
            }
            FamilyKind::ReverseGumbel => {
                let w = Gamma::new(1.0 + 1.0 / a, 1.0).expect("shape > 0").sample(rng);
                b + w.ln() / a
            }
            FamilyKind::ReverseExponential => {
                let v: f64 = Beta::new(a + 1.0, 1.0).expect("positive shapes").sample(rng);
                -b + a * v.ln()
            }
        }
    }

    /// Moments `(E[U_i], Var[U_i])`.
    pub fn component_moments(&self, i: usize) -> (f64, f64) {
        let (a, b) = (self.alpha[i], self.beta[i]);
        const EULER: f64 = 0.577_215_664_901_532_9;
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        match self.kind {
            FamilyKind::Gumbel => (b + EULER / a, pi2_6 / (a * a)),
            FamilyKind::ReverseGumbel => (b - EULER / a, pi2_6 / (a * a)),
            FamilyKind::ReverseExponential => (-b - a, a * a),
        }
    }
}

/// `log(1 - e^x)` for `x ≤ 0`, accurate near both ends.
pub(crate) trait Log1mExp {
    fn ln_1p_neg_exp(self) -> f64;
}

impl Log1mExp for f64 {
    #[inline]
    fn ln_1p_neg_exp(self) -> f64 {
        if self > -std::f64::consts::LN_2 {
            (-self.exp_m1()).ln()
        } else {
            (-self.exp()).ln_1p()
        }
    }
}

/// Joint log density of the generator: the sum of the three marginal log
/// densities (`-inf` outside the support).
pub fn generator_log_density(family: &GeneratorFamily, u: &[f64; 3]) -> f64 {
    (0..3).map(|i| family.marginal_log_density(i, u[i])).sum()
}

pub(crate) fn quad_tolerance() -> Tolerance {
    Tolerance {
        rel: 1e-10,
        ..Tolerance::default()
    }
}

/// `log E[exp(max U)]`.
///
/// Reverse-exponential generators use the closed form; the other families
/// integrate `∫ (1 - Π F_i(s)) e^s ds` on the log scale.
pub fn log_normalizer(family: &GeneratorFamily) -> Result<f64> {
    match family.kind {
        FamilyKind::ReverseExponential => Ok(reverse_exponential_normalizer(family).ln()),
        _ => log_normalizer_quadrature(family),
    }
}

/// `E[exp(max U)]`.
pub fn normalizer(family: &GeneratorFamily) -> Result<f64> {
    log_normalizer(family).map(f64::exp)
}

pub(crate) fn log_normalizer_quadrature(family: &GeneratorFamily) -> Result<f64> {
    let hi = (0..3).map(|i| family.support_upper(i)).fold(f64::NEG_INFINITY, f64::max);
    let g = |s: f64| {
        let log_prod: f64 = (0..3).map(|i| family.marginal_log_cdf(i, s)).sum();
        [s + log_prod.ln_1p_neg_exp()]
    };
    let hint = (0..3).map(|i| family.component_moments(i).0).sum::<f64>() / 3.0;
    if family.is_smooth() {
        return Ok(integrate_log_smooth(g, hint, family.feature_scale(), quad_tolerance())?.log_value[0]);
    }
    let hint = if hi.is_finite() { hint.min(hi - 1.0) } else { hint };
    Ok(integrate_log_unimodal(g, f64::NEG_INFINITY, hi, hint, quad_tolerance())?.log_value[0])
}

/// Closed form of `E[exp(max U)]` for reverse-exponential generators.
///
/// On `s < c_i = -β_i` component `i` has `F_i(s) = exp((s - c_i)/α_i)`, so
/// `Π F_i` is piecewise exponential in `s` between the sorted breakpoints.
fn reverse_exponential_normalizer(family: &GeneratorFamily) -> f64 {
    let mut c: Vec<(f64, f64)> = (0..3).map(|i| (-family.beta[i], family.alpha[i])).collect();
    c.sort_by(|x, y| x.0.total_cmp(&y.0));
    let top = c[2].0;
    // ∫_{-∞}^{top} e^s ds minus ∫_{-∞}^{top} Π F_i(s) e^s ds.
    let mut prod_integral = 0.0;
    let mut lower = f64::NEG_INFINITY;
    for k in 0..3 {
        let upper = c[k].0;
        // Active components on (lower, upper): those with breakpoint ≥ upper.
        let rate: f64 = 1.0 + c[k..].iter().map(|(_, a)| 1.0 / a).sum::<f64>();
        let offset: f64 = c[k..].iter().map(|(ci, a)| ci / a).sum();
        // ∫ exp(rate·s - offset) ds over (lower, upper)
        let upper_term = (rate * upper - offset).exp();
        let lower_term = if lower.is_finite() { (rate * lower - offset).exp() } else { 0.0 };
        prod_integral += (upper_term - lower_term) / rate;
        lower = upper;
    }
    top.exp() - prod_integral
}
