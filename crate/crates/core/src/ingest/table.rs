use serde::{Deserialize, Serialize};

use super::segment::{epidemic_features, segment_epidemics, EndRule, Epidemic, EpidemicFeatures, SegmentConfig};
use super::serfling::{serfling_baseline, SerflingConfig};
use super::series::IncidenceSeries;
use crate::error::{Error, Result};
use crate::stats::empirical_quantile;

/// Epidemics of a series and their features, with the start threshold
/// that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicTable {
    pub start_threshold: f64,
    pub epidemics: Vec<Epidemic>,
    pub features: Vec<EpidemicFeatures>,
}

impl EpidemicTable {
    /// Features of epidemics labelled `first..=last`.
    pub fn seasons(&self, first: i32, last: i32) -> Vec<EpidemicFeatures> {
        self.features
            .iter()
            .filter(|f| f.season >= first && f.season <= last)
            .copied()
            .collect()
    }
}

/// Segments `series` with the start threshold set to its
/// `start_quantile` quantile.
pub fn epidemic_table(
    series: &IncidenceSeries,
    start_quantile: f64,
    end_rule: EndRule,
    serfling: &SerflingConfig,
) -> Result<EpidemicTable> {
    if series.is_empty() {
        return Err(Error::domain("empty series"));
    }
    let start_threshold = empirical_quantile(&series.rates(), start_quantile)?;
    let baseline = match end_rule {
        EndRule::Serfling => Some(serfling_baseline(series, serfling)?),
        EndRule::ThresholdFallback => None,
    };
    let config = SegmentConfig {
        start_threshold,
        end_rule,
    };
    let epidemics = segment_epidemics(series, &config, baseline.as_ref())?;
    let features = epidemics.iter().map(epidemic_features).collect();
    Ok(EpidemicTable {
        start_threshold,
        epidemics,
        features,
    })
}

/// `(y1, y2, target)` for every epidemic that has the target, where the
/// target is the Week-3 rate or, with `size_target`, the size.
pub fn target_triples(features: &[EpidemicFeatures], size_target: bool) -> Vec<[f64; 3]> {
    features.iter().filter_map(|f| f.triple(size_target)).collect()
}
