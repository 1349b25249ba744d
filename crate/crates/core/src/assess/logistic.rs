use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `logit P(event) = b0 + b1 y1 + b2 y2`, in the units of the covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: [f64; 3],
    pub iterations: usize,
}

impl LogisticModel {
    pub fn predict(&self, y1: f64, y2: f64) -> f64 {
        predict_logistic(&self.coefficients, y1, y2)
    }
}

pub fn predict_logistic(coefficients: &[f64; 3], y1: f64, y2: f64) -> f64 {
    let eta = coefficients[0] + coefficients[1] * y1 + coefficients[2] * y2;
    1.0 / (1.0 + (-eta).exp())
}

const MAX_ITER: usize = 100;
/// On standardized covariates a slope this large means the likelihood is
/// still climbing towards a perfect split.
const SEPARATION_COEF: f64 = 30.0;

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares.
///
/// Covariates are centred and scaled internally for conditioning; the
/// returned coefficients are on the original scale.
pub fn fit_logistic(features: &[[f64; 2]], outcomes: &[bool]) -> Result<LogisticModel> {
    if features.len() != outcomes.len() {
        return Err(Error::domain(format!(
            "{} feature rows but {} outcomes",
            features.len(),
            outcomes.len()
        )));
    }
    let n = features.len();
    let positives = outcomes.iter().filter(|&&o| o).count();
    if positives == 0 || positives == n {
        return Err(Error::domain("logistic regression needs both outcome classes"));
    }
    let mut center = [0.0; 2];
    let mut scale = [0.0; 2];
    for j in 0..2 {
        center[j] = features.iter().map(|f| f[j]).sum::<f64>() / n as f64;
        scale[j] = (features.iter().map(|f| (f[j] - center[j]).powi(2)).sum::<f64>() / n as f64).sqrt();
        if !(scale[j] > 0.0) || !scale[j].is_finite() {
            return Err(Error::domain(format!("covariate {} is constant; design is rank deficient", j + 1)));
        }
    }
    let rows: Vec<Vector3<f64>> = features
        .iter()
        .map(|f| Vector3::new(1.0, (f[0] - center[0]) / scale[0], (f[1] - center[1]) / scale[1]))
        .collect();

    let mut b = Vector3::zeros();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=MAX_ITER {
        iterations = it;
        let mut info = Matrix3::zeros();
        let mut score = Vector3::zeros();
        for (x, &o) in rows.iter().zip(outcomes) {
            let p = 1.0 / (1.0 + (-b.dot(x)).exp());
            let w = (p * (1.0 - p)).max(1e-300);
            info += w * x * x.transpose();
            score += (o as u8 as f64 - p) * x;
        }
        let Some(step) = info.cholesky().map(|c| c.solve(&score)) else {
            return Err(Error::domain("logistic design matrix is not of full rank"));
        };
        b += step;
        if b.iter().any(|v| !v.is_finite() || v.abs() > SEPARATION_COEF) {
            break;
        }
        if step.amax() < 1e-10 * (1.0 + b.amax()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Optimization {
            message: "logistic regression did not converge; outcomes are (quasi-)separated".into(),
            evaluations: iterations,
            best: f64::NAN,
        });
    }
    let slopes = [b[1] / scale[0], b[2] / scale[1]];
    Ok(LogisticModel {
        coefficients: [b[0] - slopes[0] * center[0] - slopes[1] * center[1], slopes[0], slopes[1]],
        iterations,
    })
}
