//! Conditional exceedance probabilities for the third component given the
//! first two.
//!
//! Writing the density as `h(x) ∝ ∫ e^s Π f_i(x_i + s) ds` and integrating
//! over `x_3` under the integral sign, every conditional probability
//! becomes a ratio of one-dimensional integrals in `s`:
//!
//! ```text
//! x_{1:2} has a positive entry:
//!   P(X_3 > v | x_{1:2}) = ∫ e^s f_1 f_2 (1 - F_3(v + s)) ds / ∫ e^s f_1 f_2 ds
//! x_{1:2} ≤ 0 and v > 0 (X_3 must then be positive):
//!   P(X_3 > v | x_{1:2}) = ∫ e^s f_1 f_2 (1 - F_3(v + s)) ds / ∫ e^s f_1 f_2 (1 - F_3(s)) ds
//! x_{1:2} ≤ 0 and v ≤ 0: 1
//! ```
//!
//! with `f_i = f_i(x_i + s)`. Numerator and denominator are evaluated on
//! the same quadrature nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mvgp::{GeneratorFamily, MvGpModel};
use crate::quad::{integrate_log_smooth, integrate_log_unimodal, Tolerance};

/// Overshoot beyond `[0, 1]` tolerated silently before clamping.
const CLAMP_WARN: f64 = 1e-6;

fn tolerance() -> Tolerance {
    Tolerance {
        rel: 1e-9,
        ..Tolerance::default()
    }
}

/// `P(X_3 > v3 | X_1 = x1, X_2 = x2)` in standardized units.
pub fn conditional_exceedance(family: &GeneratorFamily, x1: f64, x2: f64, v3: f64) -> Result<f64> {
    if !x1.is_finite() || !x2.is_finite() || v3.is_nan() {
        return Err(Error::domain(format!("invalid conditioning values ({x1}, {x2}, {v3})")));
    }
    let first_two_positive = x1 > 0.0 || x2 > 0.0;
    if !first_two_positive && v3 <= 0.0 {
        return Ok(1.0);
    }
    if v3 == f64::INFINITY {
        return Ok(0.0);
    }
    if v3 == f64::NEG_INFINITY {
        return Ok(1.0);
    }
    let x = [x1, x2];
    let base = |s: f64| s + family.marginal_log_density(0, x1 + s) + family.marginal_log_density(1, x2 + s);
    let mut hi = (0..2).map(|i| family.support_upper(i) - x[i]).fold(f64::INFINITY, f64::min);
    if !first_two_positive {
        hi = hi.min(family.support_upper(2));
    }
    let hint = (0..2).map(|i| family.component_moments(i).0 - x[i]).sum::<f64>() / 2.0;
    let hint = if hi.is_finite() { hint.min(hi - 0.5) } else { hint };
    let g = |s: f64| {
        let b = base(s);
        let num = b + family.marginal_log_sf(2, v3 + s);
        let den = if first_two_positive { b } else { b + family.marginal_log_sf(2, s) };
        [den, num]
    };
    let r = if family.is_smooth() {
        integrate_log_smooth(g, hint, family.feature_scale(), tolerance())
    } else {
        integrate_log_unimodal(g, f64::NEG_INFINITY, hi, hint, tolerance())
    };
    let r = r.map_err(|e| {
        Error::Numeric(format!("conditional exceedance at ({x1}, {x2}, {v3}): {e}"))
    })?;
    let p = (r.log_value[1] - r.log_value[0]).exp();
    let p = if p.is_nan() { 0.0 } else { p };
    if p > 1.0 + CLAMP_WARN {
        log::warn!("conditional probability {p} exceeds 1; clamped");
    }
    Ok(p.clamp(0.0, 1.0))
}

/// A prediction request in original units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionQuery {
    pub y1: f64,
    pub y2: f64,
    pub level: f64,
    /// Probability that the third component exceeds its threshold when the
    /// first two do not; falls back to the model's stored value.
    pub below_threshold_prob: Option<f64>,
}

/// `P(Y_3 > level | Y_1 = y1, Y_2 = y2)` under a model on original units.
///
/// When one of `y1, y2` exceeds its threshold the model conditional
/// probability is returned as is. Otherwise the model only describes the
/// case where the third component is itself an exceedance, and the result
/// is scaled by the empirical below-threshold probability; levels at or
/// below the third threshold are then not estimable.
pub fn predict_level(model: &MvGpModel, query: &PredictionQuery) -> Result<f64> {
    let x1 = (query.y1 - model.thresholds[0]) / model.scales[0];
    let x2 = (query.y2 - model.thresholds[1]) / model.scales[1];
    let v3 = (query.level - model.thresholds[2]) / model.scales[2];
    if x1 > 0.0 || x2 > 0.0 {
        return conditional_exceedance(&model.family, x1, x2, v3);
    }
    if !(v3 > 0.0) {
        return Err(Error::domain(format!(
            "level {} must exceed the threshold {} when neither conditioning value is an exceedance",
            query.level, model.thresholds[2]
        )));
    }
    let below = query
        .below_threshold_prob
        .or(model.below_threshold_prob)
        .ok_or_else(|| Error::Estimation("no below-threshold probability available".into()))?;
    if !(0.0..=1.0).contains(&below) {
        return Err(Error::domain(format!("below-threshold probability {below} outside [0, 1]")));
    }
    if below == 0.0 {
        return Ok(0.0);
    }
    Ok(below * conditional_exceedance(&model.family, x1, x2, v3)?)
}

/// Among historical triples whose first two components do not exceed
/// their thresholds, the fraction whose third component does.
pub fn below_threshold_prob(history: &[[f64; 3]], thresholds: &[f64; 3]) -> Result<f64> {
    let qualifying: Vec<&[f64; 3]> = history
        .iter()
        .filter(|y| y[0] <= thresholds[0] && y[1] <= thresholds[1])
        .collect();
    if qualifying.is_empty() {
        return Err(Error::Estimation(
            "no historical epidemic has both conditioning values below threshold".into(),
        ));
    }
    let hits = qualifying.iter().filter(|y| y[2] > thresholds[2]).count();
    Ok(hits as f64 / qualifying.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelPrediction {
    pub kappa: f64,
    pub level: f64,
    pub probability: f64,
}

/// Predictions at levels `κ × historical_max` for each `κ`.
pub fn predict_kappas(
    model: &MvGpModel,
    y1: f64,
    y2: f64,
    historical_max: f64,
    kappas: &[f64],
    below: Option<f64>,
) -> Result<Vec<LevelPrediction>> {
    kappas
        .iter()
        .map(|&kappa| {
            let level = kappa * historical_max;
            let probability = predict_level(
                model,
                &PredictionQuery {
                    y1,
                    y2,
                    level,
                    below_threshold_prob: below,
                },
            )?;
            Ok(LevelPrediction {
                kappa,
                level,
                probability,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mvgp::FamilyKind;
    use crate::quad::integrate;

    fn week3() -> GeneratorFamily {
        GeneratorFamily::new(FamilyKind::Gumbel, [2.22, 10.37, 3.21], [0.0, 0.84, 0.59]).unwrap()
    }

    /// Nested two-dimensional evaluation of the defining ratio: the inner
    /// integral in `s` gives the density at `(x1, x2, x3)`, the outer one
    /// integrates it over `x3`.
    fn nested_oracle(family: &GeneratorFamily, x1: f64, x2: f64, v3: f64) -> f64 {
        let d = crate::mvgp::GpDensity::new(*family).unwrap();
        let dens = |x3: f64| d.log_density(&[x1, x2, x3]).map(f64::exp).unwrap_or(0.0);
        let tol = Tolerance {
            rel: 1e-9,
            abs_rel_to_first: 1e-14,
            max_subdivisions: 400,
        };
        // Split at the kink of reverse-exponential densities in x3.
        let beta = family.beta();
        let kink = (x1 + beta[0]).max(x2 + beta[1]) - beta[2];
        let piece = |a: f64, b: f64| integrate(|t| [dens(t)], a, b, tol).unwrap().value[0];
        let over = |a: f64, b: f64| {
            if kink > a && kink < b {
                piece(a, kink) + piece(kink, b)
            } else {
                piece(a, b)
            }
        };
        let lower = if x1 > 0.0 || x2 > 0.0 { -400.0 } else { 0.0 };
        let num = over(v3.max(lower), 40.0);
        let den = over(lower, 40.0);
        num / den
    }

    #[test]
    fn case_three_is_exactly_one() {
        assert_eq!(conditional_exceedance(&week3(), -0.3, -0.1, -0.5).unwrap(), 1.0);
        assert_eq!(conditional_exceedance(&week3(), 0.0, -0.1, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn limits_in_the_level() {
        let f = week3();
        assert_eq!(conditional_exceedance(&f, 0.5, 0.2, f64::INFINITY).unwrap(), 0.0);
        assert_eq!(conditional_exceedance(&f, 0.5, 0.2, f64::NEG_INFINITY).unwrap(), 1.0);
        assert!(conditional_exceedance(&f, 0.5, 0.2, -30.0).unwrap() > 1.0 - 1e-9);
        assert!(conditional_exceedance(&f, 0.5, 0.2, 60.0).unwrap() < 1e-12);
    }

    #[test]
    fn matches_nested_quadrature() {
        for kind in FamilyKind::ALL {
            let f = GeneratorFamily::new(kind, [2.22, 4.0, 3.21], [0.0, 0.4, 0.3]).unwrap();
            for (x1, x2, v3) in [(0.375, 0.785, 0.5), (0.1, -0.4, 1.5), (-0.2, -0.3, 0.8), (1.2, 0.4, -0.7)] {
                let fast = conditional_exceedance(&f, x1, x2, v3).unwrap();
                let slow = nested_oracle(&f, x1, x2, v3);
                assert!(
                    (fast - slow).abs() <= 1e-6 * slow.max(1e-3),
                    "{kind} ({x1},{x2},{v3}): {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn nonincreasing_in_level() {
        let f = week3();
        let mut prev = 1.0;
        for k in -20..40 {
            let p = conditional_exceedance(&f, 0.3, 0.6, k as f64 * 0.1).unwrap();
            assert!(p <= prev + 1e-12 && (0.0..=1.0).contains(&p));
            prev = p;
        }
    }

    #[test]
    fn case_boundary_is_continuous() {
        let f = week3();
        let inside = conditional_exceedance(&f, -1e-9, -1e-9, 0.7).unwrap();
        let outside = conditional_exceedance(&f, 1e-9, -1e-9, 0.7).unwrap();
        // Across x_{1:2} = 0 the integrand is continuous; the two cases
        // differ only in that the second one also conditions on X_3 > 0.
        let pos = conditional_exceedance(&f, 1e-9, -1e-9, 0.0).unwrap();
        assert!((inside - outside / pos).abs() < 1e-6, "{inside} {outside} {pos}");
    }

    #[test]
    fn below_threshold_scaling() {
        let m = MvGpModel::standard(week3()).with_margins([339.0; 3], [72.0, 256.0, 392.0]);
        let q = PredictionQuery {
            y1: 200.0,
            y2: 300.0,
            level: 800.0,
            below_threshold_prob: Some(0.0),
        };
        assert_eq!(predict_level(&m, &q).unwrap(), 0.0);
        let q = PredictionQuery { level: 300.0, ..q };
        assert!(matches!(predict_level(&m, &q), Err(Error::Domain(_))));
        let q = PredictionQuery {
            level: 800.0,
            below_threshold_prob: None,
            ..q
        };
        assert!(matches!(predict_level(&m, &q), Err(Error::Estimation(_))));
    }

    #[test]
    fn situation_one_allows_levels_below_threshold() {
        let m = MvGpModel::standard(week3()).with_margins([339.0; 3], [72.0, 256.0, 392.0]);
        let q = PredictionQuery {
            y1: 366.0,
            y2: 540.0,
            level: 300.0,
            below_threshold_prob: None,
        };
        let p = predict_level(&m, &q).unwrap();
        assert!(p > 0.5 && p <= 1.0);
    }

    #[test]
    fn empirical_below_threshold_probability() {
        let t = [10.0; 3];
        assert!(below_threshold_prob(&[[20.0, 1.0, 1.0]], &t).is_err());
        assert_eq!(below_threshold_prob(&[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]], &t).unwrap(), 0.0);
        assert_eq!(below_threshold_prob(&[[1.0, 1.0, 11.0], [2.0, 20.0, 2.0]], &t).unwrap(), 1.0);
        assert_eq!(
            below_threshold_prob(&[[1.0, 1.0, 11.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0]], &t).unwrap(),
            1.0 / 3.0
        );
    }
}
