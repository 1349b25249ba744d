//! Weekly incidence series: parsing, the Serfling baseline, and epidemic
//! segmentation.

mod segment;
mod serfling;
mod series;
mod table;

pub use segment::{epidemic_features, segment_epidemics, EndRule, Epidemic, EpidemicFeatures, SegmentConfig};
pub use serfling::{serfling_baseline, serfling_episodes, SerflingBaseline, SerflingConfig};
pub use series::{parse_series, GapPolicy, IncidenceSeries, IsoWeek, ParseOptions, WeeklyRecord};
pub use table::{epidemic_table, target_triples, EpidemicTable};

pub use crate::stats::empirical_quantile;
