use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::serfling::{runs, serfling_episodes, SerflingBaseline};
use super::series::{IncidenceSeries, IsoWeek};
use crate::error::{Error, Result};

/// How the last week of an epidemic is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndRule {
    /// Last week of the overlapping Serfling episode.
    #[default]
    Serfling,
    /// Last week of the run of weeks above the start threshold.
    ThresholdFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    /// Rates must be strictly above this for two consecutive weeks.
    pub start_threshold: f64,
    pub end_rule: EndRule,
}

/// One epidemic episode of a weekly series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epidemic {
    /// ISO year of the first week. Epidemics are unique per influenza
    /// season, so two consecutive ones may share this label.
    pub season: i32,
    pub start_week: IsoWeek,
    pub start_index: usize,
    pub end_index: usize,
    pub rates: Vec<f64>,
    pub size: f64,
}

impl Epidemic {
    pub fn duration(&self) -> usize {
        self.rates.len()
    }
}

/// Splits a series into epidemics.
///
/// An epidemic starts at the first of the first two consecutive weeks whose
/// rates strictly exceed `config.start_threshold`; at most one epidemic is
/// kept per influenza season (weeks 27 to 26). With [`EndRule::Serfling`] the
/// threshold run must overlap a Serfling episode, whose last week ends the
/// epidemic.
pub fn segment_epidemics(
    series: &IncidenceSeries,
    config: &SegmentConfig,
    baseline: Option<&SerflingBaseline>,
) -> Result<Vec<Epidemic>> {
    if !(config.start_threshold > 0.0) {
        return Err(Error::Config(format!(
            "start threshold must be positive, got {}",
            config.start_threshold
        )));
    }
    let episodes = match (config.end_rule, baseline) {
        (EndRule::Serfling, None) => {
            return Err(Error::Config("the serfling end rule needs a fitted baseline".into()))
        }
        (EndRule::Serfling, Some(b)) => {
            if b.upper.len() != series.len() {
                return Err(Error::Config(format!(
                    "baseline covers {} weeks but the series has {}",
                    b.upper.len(),
                    series.len()
                )));
            }
            serfling_episodes(series, b)
        }
        (EndRule::ThresholdFallback, _) => Vec::new(),
    };

    let records = series.records();
    let above: Vec<bool> = records.iter().map(|r| r.rate > config.start_threshold).collect();
    let mut seasons_taken = BTreeSet::new();
    let mut out: Vec<Epidemic> = Vec::new();
    for (run_start, run_end) in runs(&above) {
        if run_end == run_start {
            continue;
        }
        if out.last().is_some_and(|e| run_start <= e.end_index) {
            continue;
        }
        let season = records[run_start].week.season();
        if seasons_taken.contains(&season) {
            continue;
        }
        let end = match config.end_rule {
            EndRule::ThresholdFallback => run_end,
            EndRule::Serfling => {
                let Some(&(_, ep_end)) = episodes.iter().find(|(s, e)| *s <= run_end && *e >= run_start) else {
                    continue;
                };
                ep_end.max(run_start + 1)
            }
        };
        let rates: Vec<f64> = records[run_start..=end].iter().map(|r| r.rate).collect();
        let size = rates.iter().sum();
        seasons_taken.insert(season);
        out.push(Epidemic {
            season: records[run_start].week.year,
            start_week: records[run_start].week,
            start_index: run_start,
            end_index: end,
            rates,
            size,
        });
    }
    Ok(out)
}

/// Summary of an epidemic: the first three weekly rates and the size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicFeatures {
    pub season: i32,
    pub y1: f64,
    pub y2: f64,
    /// Absent for epidemics shorter than three weeks.
    pub y3: Option<f64>,
    pub size: f64,
}

impl EpidemicFeatures {
    pub fn is_complete(&self) -> bool {
        self.y3.is_some()
    }

    /// `(y1, y2, y3)`, or `(y1, y2, size)` when `size_target` is set.
    pub fn triple(&self, size_target: bool) -> Option<[f64; 3]> {
        if size_target {
            Some([self.y1, self.y2, self.size])
        } else {
            self.y3.map(|y3| [self.y1, self.y2, y3])
        }
    }
}

pub fn epidemic_features(e: &Epidemic) -> EpidemicFeatures {
    EpidemicFeatures {
        season: e.season,
        y1: e.rates[0],
        y2: e.rates[1],
        y3: e.rates.get(2).copied(),
        size: e.size,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::serfling::{serfling_baseline, SerflingConfig};
    use crate::ingest::series::{GapPolicy, WeeklyRecord};

    fn series_from(start: IsoWeek, rates: &[f64]) -> IncidenceSeries {
        let mut w = start;
        let mut recs = Vec::new();
        for &r in rates {
            recs.push(WeeklyRecord { week: w, rate: r });
            w = w.succ();
        }
        IncidenceSeries::new(recs, GapPolicy::Reject).unwrap()
    }

    fn fallback(threshold: f64) -> SegmentConfig {
        SegmentConfig {
            start_threshold: threshold,
            end_rule: EndRule::ThresholdFallback,
        }
    }

    #[test]
    fn features_of_simple_epidemic() {
        let e = Epidemic {
            season: 2000,
            start_week: IsoWeek::new(2000, 2).unwrap(),
            start_index: 0,
            end_index: 3,
            rates: vec![300.0, 400.0, 500.0, 100.0],
            size: 1300.0,
        };
        let f = epidemic_features(&e);
        assert_eq!((f.y1, f.y2, f.y3, f.size), (300.0, 400.0, Some(500.0), 1300.0));
    }

    #[test]
    fn all_zero_series_has_no_epidemics() {
        let s = series_from(IsoWeek::new(2000, 1).unwrap(), &[0.0; 200]);
        assert!(segment_epidemics(&s, &fallback(10.0), None).unwrap().is_empty());
    }

    #[test]
    fn serfling_rule_requires_baseline() {
        let s = series_from(IsoWeek::new(2000, 1).unwrap(), &[0.0; 10]);
        let cfg = SegmentConfig {
            start_threshold: 10.0,
            end_rule: EndRule::Serfling,
        };
        assert!(matches!(segment_epidemics(&s, &cfg, None), Err(Error::Config(_))));
    }

    #[test]
    fn single_week_spike_is_not_an_epidemic() {
        let mut r = vec![10.0; 60];
        r[20] = 500.0;
        r[30] = 500.0;
        r[31] = 20.0;
        let s = series_from(IsoWeek::new(2000, 1).unwrap(), &r);
        assert!(segment_epidemics(&s, &fallback(100.0), None).unwrap().is_empty());
    }

    #[test]
    fn ties_at_threshold_do_not_exceed() {
        let mut r = vec![10.0; 30];
        r[5] = 100.0;
        r[6] = 100.0;
        let s = series_from(IsoWeek::new(2000, 1).unwrap(), &r);
        assert!(segment_epidemics(&s, &fallback(100.0), None).unwrap().is_empty());
    }

    #[test]
    fn one_epidemic_per_season() {
        // Two separate runs within the same winter: only the first is kept.
        let mut r = vec![10.0; 40];
        for i in [3, 4, 5, 12, 13, 14] {
            r[i] = 300.0;
        }
        let s = series_from(IsoWeek::new(2000, 1).unwrap(), &r);
        let eps = segment_epidemics(&s, &fallback(100.0), None).unwrap();
        assert_eq!(eps.len(), 1);
        assert_eq!((eps[0].start_index, eps[0].end_index), (3, 5));
    }

    #[test]
    fn serfling_end_extends_past_threshold_run() {
        let n = 52 * 4;
        let rates: Vec<f64> = (0..n)
            .map(|i| {
                let wk = i % 52;
                let base = 50.0 + 10.0 * (2.0 * std::f64::consts::PI * i as f64 / 52.18).cos() + 3.0 * (i as f64 * 1.3).sin();
                let burst = match wk {
                    1 => 120.0,
                    2 => 300.0,
                    3 => 500.0,
                    4 => 400.0,
                    5 => 250.0,
                    6 => 120.0,
                    _ => 0.0,
                };
                base + burst
            })
            .collect();
        let s = series_from(IsoWeek::new(2000, 1).unwrap(), &rates);
        let b = serfling_baseline(&s, &SerflingConfig::default()).unwrap();
        let cfg = SegmentConfig {
            start_threshold: 272.0,
            end_rule: EndRule::Serfling,
        };
        let eps = segment_epidemics(&s, &cfg, Some(&b)).unwrap();
        assert_eq!(eps.len(), 4);
        for e in &eps {
            assert!(e.rates[0] > 272.0 && e.rates[1] > 272.0);
            assert_eq!(e.start_index % 52, 2);
            // Serfling episode runs at least through week 6 (the 120 tail).
            assert!(e.end_index % 52 >= 5, "{e:?}");
            let sum: f64 = e.rates.iter().sum();
            assert!((sum - e.size).abs() <= 1e-9 * e.size);
        }
        // Idempotent.
        assert_eq!(eps, segment_epidemics(&s, &cfg, Some(&b)).unwrap());
    }
}
