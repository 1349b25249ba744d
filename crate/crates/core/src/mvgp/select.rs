use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::density::ExcessVector;
use super::fit::{fit_mvgp_with, FitOptions, MvGpFit, Submodel};
use super::generator::FamilyKind;
use crate::error::{Error, Result};
use crate::stats::lr_p_value;

/// Divides excesses over `thresholds` by `scales`, keeping vectors with at
/// least one strictly positive component.
pub fn standardize(values: &[[f64; 3]], thresholds: &[f64; 3], scales: &[f64; 3]) -> Result<Vec<ExcessVector>> {
    if let Some(s) = scales.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::domain(format!("scale {s} must be positive")));
    }
    Ok(values
        .iter()
        .map(|v| std::array::from_fn(|j| (v[j] - thresholds[j]) / scales[j]))
        .filter(|x: &ExcessVector| x.iter().any(|&c| c > 0.0))
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRow {
    pub family: FamilyKind,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
    pub loglik: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub fit: Option<MvGpFit>,
}

/// Fits every generator family (M1) and ranks them by AIC. Failed fits are
/// kept at the end of the table with their error message.
pub fn model_selection(vectors: &[ExcessVector], opts: &FitOptions) -> Vec<SelectionRow> {
    let mut rows: Vec<SelectionRow> = FamilyKind::ALL
        .par_iter()
        .map(|&family| match fit_mvgp_with(vectors, family, Submodel::M1, opts, &[]) {
            Ok(fit) => SelectionRow {
                family,
                aic: Some(fit.aic),
                bic: Some(fit.bic),
                loglik: Some(fit.loglik),
                error: None,
                fit: Some(fit),
            },
            Err(e) => SelectionRow {
                family,
                aic: None,
                bic: None,
                loglik: None,
                error: Some(e.to_string()),
                fit: None,
            },
        })
        .collect();
    rows.sort_by(|a, b| a.aic.unwrap_or(f64::INFINITY).total_cmp(&b.aic.unwrap_or(f64::INFINITY)));
    rows
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderRow {
    pub submodel: Submodel,
    pub n_params: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    /// Likelihood-ratio p-value against M1 (absent for M1 itself).
    pub lr_p_value: Option<f64>,
    #[serde(skip)]
    pub fit: MvGpFit,
}

/// Fits the nested submodels M1–M4 of one family and tests each against M1.
///
/// Submodels are started from the projection of the M1 estimate as well as
/// from moments, so a nested fit never ends below what M1 implies.
pub fn simplify_ladder(vectors: &[ExcessVector], kind: FamilyKind, opts: &FitOptions) -> Result<Vec<LadderRow>> {
    let full = fit_mvgp_with(vectors, kind, Submodel::M1, opts, &[])?;
    let parent = [(full.model.family.alpha(), full.model.family.beta())];
    let nested: Vec<Result<MvGpFit>> = [Submodel::M2, Submodel::M3, Submodel::M4]
        .par_iter()
        .map(|&s| fit_mvgp_with(vectors, kind, s, opts, &parent))
        .collect();
    let mut rows = vec![LadderRow {
        submodel: Submodel::M1,
        n_params: full.n_params,
        loglik: full.loglik,
        aic: full.aic,
        bic: full.bic,
        lr_p_value: None,
        fit: full.clone(),
    }];
    for fit in nested {
        let fit = fit?;
        rows.push(LadderRow {
            submodel: fit.model.submodel,
            n_params: fit.n_params,
            loglik: fit.loglik,
            aic: fit.aic,
            bic: fit.bic,
            lr_p_value: Some(lr_p_value(full.loglik, fit.loglik, full.n_params - fit.n_params)),
            fit,
        });
    }
    Ok(rows)
}
