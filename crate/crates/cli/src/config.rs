use std::path::{Path, PathBuf};

use epitail_core::assess::DEFAULT_KAPPAS;
use epitail_core::ingest::EndRule;
use epitail_core::mvgp::FamilyKind;
use epitail_core::Error;
use serde::{Deserialize, Serialize};

/// Seed used when none is given by flag, config file or `EVT_SEED`.
pub const DEFAULT_SEED: u64 = 1;

/// Resolved pipeline settings; every report embeds a copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input_path: Option<PathBuf>,
    pub start_quantile: f64,
    pub rate_threshold_quantile: f64,
    pub size_threshold_quantile: f64,
    pub kappas: Vec<f64>,
    pub family: FamilyKind,
    pub seed: Option<u64>,
    pub n_datasets: usize,
    pub end_rule: EndRule,
    /// Calendar years `[first, last]` of the series used for estimation.
    pub estimation_years: Option<[i32; 2]>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input_path: None,
            start_quantile: 0.88,
            rate_threshold_quantile: 0.9,
            size_threshold_quantile: 0.6,
            kappas: DEFAULT_KAPPAS.to_vec(),
            family: FamilyKind::Gumbel,
            seed: None,
            n_datasets: 1500,
            end_rule: EndRule::Serfling,
            estimation_years: None,
        }
    }
}

/// Values given on the command line; each one replaces the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input_path: Option<PathBuf>,
    pub start_quantile: Option<f64>,
    pub rate_threshold_quantile: Option<f64>,
    pub size_threshold_quantile: Option<f64>,
    pub kappas: Option<Vec<f64>>,
    pub family: Option<FamilyKind>,
    pub seed: Option<u64>,
    pub n_datasets: Option<usize>,
    pub end_rule: Option<EndRule>,
    pub estimation_years: Option<[i32; 2]>,
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies flag overrides, fills the seed (flag, then file, then
    /// `env_seed`, then [`DEFAULT_SEED`]) and validates the result.
    pub fn resolve(mut self, o: Overrides, env_seed: Option<&str>) -> Result<Self, Error> {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = o.$field {
                    self.$field = v.into();
                })*
            };
        }
        take!(
            start_quantile,
            rate_threshold_quantile,
            size_threshold_quantile,
            kappas,
            family,
            n_datasets,
            end_rule
        );
        if o.input_path.is_some() {
            self.input_path = o.input_path;
        }
        if o.estimation_years.is_some() {
            self.estimation_years = o.estimation_years;
        }
        let seed = match (o.seed, self.seed, env_seed) {
            (Some(s), _, _) | (None, Some(s), _) => s,
            (None, None, Some(text)) => text
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("EVT_SEED is not a 64-bit unsigned integer: {text:?}")))?,
            (None, None, None) => DEFAULT_SEED,
        };
        self.seed = Some(seed);
        self.validate()?;
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    fn validate(&self) -> Result<(), Error> {
        for (name, q) in [
            ("start_quantile", self.start_quantile),
            ("rate_threshold_quantile", self.rate_threshold_quantile),
            ("size_threshold_quantile", self.size_threshold_quantile),
        ] {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {q}")));
            }
        }
        if self.kappas.is_empty() {
            return Err(Error::Config("kappas must not be empty".into()));
        }
        if let Some(k) = self.kappas.iter().find(|k| !(**k > 0.0 && **k <= 1.0)) {
            return Err(Error::Config(format!("kappas must lie in (0, 1], got {k}")));
        }
        if self.n_datasets == 0 {
            return Err(Error::Config("n_datasets must be at least 1".into()));
        }
        if let Some([a, b]) = self.estimation_years {
            if a > b {
                return Err(Error::Config(format!("estimation_years [{a}, {b}] is empty")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_env() {
        let file = PipelineConfig {
            seed: Some(5),
            ..Default::default()
        };
        let flag = Overrides {
            seed: Some(9),
            ..Default::default()
        };
        assert_eq!(file.clone().resolve(flag, Some("7")).unwrap().seed(), 9);
        assert_eq!(file.resolve(Overrides::default(), Some("7")).unwrap().seed(), 5);
        let bare = PipelineConfig::default();
        assert_eq!(bare.clone().resolve(Overrides::default(), Some(" 7 ")).unwrap().seed(), 7);
        assert_eq!(bare.clone().resolve(Overrides::default(), None).unwrap().seed(), DEFAULT_SEED);
        assert!(bare.resolve(Overrides::default(), Some("x")).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let bad = |o: Overrides| PipelineConfig::default().resolve(o, None).is_err();
        assert!(bad(Overrides {
            start_quantile: Some(1.0),
            ..Default::default()
        }));
        assert!(bad(Overrides {
            kappas: Some(vec![0.5, 1.2]),
            ..Default::default()
        }));
        assert!(bad(Overrides {
            n_datasets: Some(0),
            ..Default::default()
        }));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"kapas": [0.5]}"#).is_err());
        let c: PipelineConfig = serde_json::from_str(r#"{"family": "reverse_gumbel"}"#).unwrap();
        assert_eq!(c.family, FamilyKind::ReverseGumbel);
        assert_eq!(c.n_datasets, 1500);
    }
}
