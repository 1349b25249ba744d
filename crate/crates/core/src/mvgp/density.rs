use super::generator::{log_normalizer, quad_tolerance, FamilyKind, GeneratorFamily};
use crate::error::{Error, Result};
use crate::quad::{integrate_log_smooth, integrate_log_unimodal};

/// A point in standardized units; the density lives on vectors with at
/// least one positive component.
pub type ExcessVector = [f64; 3];

pub fn is_positive_excess(x: &ExcessVector) -> bool {
    x.iter().any(|&v| v > 0.0)
}

/// Density of the standard-form GP distribution generated by `family`,
/// with the normalizing constant computed once.
#[derive(Debug, Clone, Copy)]
pub struct GpDensity {
    family: GeneratorFamily,
    log_norm: f64,
}

impl GpDensity {
    pub fn new(family: GeneratorFamily) -> Result<Self> {
        let log_norm = log_normalizer(&family)?;
        Ok(Self { family, log_norm })
    }

    pub fn family(&self) -> &GeneratorFamily {
        &self.family
    }

    /// `log E[exp(max U)]`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    pub fn log_density(&self, x: &ExcessVector) -> Result<f64> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite excess vector {x:?}")));
        }
        if !is_positive_excess(x) {
            return Err(Error::domain(format!("{x:?} is not a positive excess vector")));
        }
        let log_num = match self.family.kind() {
            FamilyKind::ReverseExponential => reverse_exponential_log_numerator(&self.family, x),
            _ => log_numerator_quadrature(&self.family, x)?,
        };
        Ok(log_num - self.log_norm)
    }
}

/// `log ∫ f_U(x + s) e^s ds` by quadrature.
pub(crate) fn log_numerator_quadrature(family: &GeneratorFamily, x: &ExcessVector) -> Result<f64> {
    let hi = (0..3).map(|i| family.support_upper(i) - x[i]).fold(f64::INFINITY, f64::min);
    let g = |s: f64| [s + (0..3).map(|i| family.marginal_log_density(i, x[i] + s)).sum::<f64>()];
    let hint = (0..3).map(|i| family.component_moments(i).0 - x[i]).sum::<f64>() / 3.0;
    if family.is_smooth() {
        return Ok(integrate_log_smooth(g, hint, family.feature_scale(), quad_tolerance())?.log_value[0]);
    }
    let hint = if hi.is_finite() { hint.min(hi - 1.0) } else { hint };
    Ok(integrate_log_unimodal(g, f64::NEG_INFINITY, hi, hint, quad_tolerance())?.log_value[0])
}

/// Closed form of the reverse-exponential numerator: with `A = Σ 1/α_i`,
/// `∫ f_U(x + s) e^s ds = e^{-(A+1) max(x+β)} / (A+1) · Π e^{(x_i+β_i)/α_i} / α_i`.
pub(crate) fn reverse_exponential_log_numerator(family: &GeneratorFamily, x: &ExcessVector) -> f64 {
    let (alpha, beta) = (family.alpha(), family.beta());
    let a: f64 = alpha.iter().map(|a| 1.0 / a).sum();
    let m = (0..3).map(|i| x[i] + beta[i]).fold(f64::NEG_INFINITY, f64::max);
    let mut out = -(a + 1.0) * m - (a + 1.0).ln();
    for i in 0..3 {
        out += (x[i] + beta[i]) / alpha[i] - alpha[i].ln();
    }
    out
}

/// `log h_U(x)` for the standard-form GP distribution.
pub fn gp_log_density(family: &GeneratorFamily, x: &ExcessVector) -> Result<f64> {
    GpDensity::new(*family)?.log_density(x)
}

/// Maps an observation on general GP margins `(σ, γ)` to standard form.
/// Returns the standardized vector and `Σ log(σ_j + γ_j x_j)`, the log
/// Jacobian of the inverse map.
pub fn to_standard_margins(x: &[f64; 3], sigma: &[f64; 3], gamma: &[f64; 3]) -> Result<([f64; 3], f64)> {
    let mut z = [0.0; 3];
    let mut log_jac = 0.0;
    for j in 0..3 {
        if !(sigma[j] > 0.0) {
            return Err(Error::domain(format!("scale {} must be positive", sigma[j])));
        }
        let t = 1.0 + gamma[j] * x[j] / sigma[j];
        if !(t > 0.0) {
            return Err(Error::domain(format!(
                "component {j}: 1 + γx/σ = {t} is outside the support"
            )));
        }
        z[j] = if gamma[j] == 0.0 { x[j] / sigma[j] } else { t.ln() / gamma[j] };
        log_jac += (sigma[j] * t).ln();
    }
    Ok((z, log_jac))
}

/// Log density of a GP vector with margins `(σ_j, γ_j)`, obtained from the
/// standard-form density by the change of variables
/// `z_j = log(1 + γ_j x_j / σ_j) / γ_j`.
pub fn gp_log_density_general(
    x: &[f64; 3],
    sigma: &[f64; 3],
    gamma: &[f64; 3],
    family: &GeneratorFamily,
) -> Result<f64> {
    let (z, log_jac) = to_standard_margins(x, sigma, gamma)?;
    Ok(gp_log_density(family, &z)? - log_jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn week3() -> GeneratorFamily {
        GeneratorFamily::new(FamilyKind::Gumbel, [2.22, 10.37, 3.21], [0.0, 0.84, 0.59]).unwrap()
    }

    #[test]
    fn rejects_non_positive_vectors() {
        assert!(matches!(gp_log_density(&week3(), &[-1.0; 3]), Err(Error::Domain(_))));
        assert!(matches!(gp_log_density(&week3(), &[0.0; 3]), Err(Error::Domain(_))));
        assert!(gp_log_density(&week3(), &[0.1, -0.2, 0.3]).unwrap().is_finite());
    }

    #[test]
    fn reverse_exponential_quadrature_matches_closed_form() {
        let f = GeneratorFamily::new(FamilyKind::ReverseExponential, [0.8, 1.7, 2.4], [0.0, 0.3, -0.5]).unwrap();
        for x in [[0.1, -0.2, 0.3], [2.0, 1.0, -3.0], [-0.5, -0.1, 0.01], [5.0, 4.0, 6.0]] {
            let closed = reverse_exponential_log_numerator(&f, &x);
            let quad = log_numerator_quadrature(&f, &x).unwrap();
            assert!(
                (closed.exp() - quad.exp()).abs() <= 1e-10 * closed.exp(),
                "{x:?}: {closed} vs {quad}"
            );
        }
    }

    #[test]
    fn general_margins_reduce_to_standard() {
        let x = [0.4, -0.3, 1.2];
        let std = gp_log_density(&week3(), &x).unwrap();
        let gen = gp_log_density_general(&x, &[1.0; 3], &[0.0; 3], &week3()).unwrap();
        assert!((std - gen).abs() < 1e-12);
    }

    #[test]
    fn scaled_margins_change_of_variables() {
        let x = [0.8, -0.6, 2.4];
        let half = [0.4, -0.3, 1.2];
        let gen = gp_log_density_general(&x, &[2.0; 3], &[0.0; 3], &week3()).unwrap();
        let std = gp_log_density(&week3(), &half).unwrap();
        assert_relative_eq!(gen, std - 8f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn general_margin_support_violation() {
        let r = gp_log_density_general(&[3.0, 1.0, 1.0], &[1.0; 3], &[-0.5, 0.0, 0.0], &week3());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn shape_margins_match_numerical_jacobian() {
        let sigma = [1.3, 0.7, 2.0];
        let gamma = [0.2, -0.1, 0.35];
        let x = [0.5, -0.2, 0.9];
        let (z, log_jac) = to_standard_margins(&x, &sigma, &gamma).unwrap();
        let h = 1e-6;
        let mut det = 1.0;
        for j in 0..3 {
            let mut xp = x;
            xp[j] += h;
            let (zp, _) = to_standard_margins(&xp, &sigma, &gamma).unwrap();
            det *= (zp[j] - z[j]) / h;
        }
        assert_relative_eq!(-det.ln(), log_jac, epsilon = 1e-5);
    }
}
