use std::fmt;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ISO-8601 week.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IsoWeek {
    pub year: i32,
    pub week: u32,
}

impl IsoWeek {
    pub fn new(year: i32, week: u32) -> Result<Self> {
        if NaiveDate::from_isoywd_opt(year, week, Weekday::Mon).is_none() {
            return Err(Error::domain(format!("{year}-W{week:02} is not a valid ISO week")));
        }
        Ok(Self { year, week })
    }

    fn monday(self) -> NaiveDate {
        NaiveDate::from_isoywd_opt(self.year, self.week, Weekday::Mon)
            .expect("validated at construction")
    }

    pub fn succ(self) -> Self {
        let next = self.monday() + Duration::days(7);
        let iso = next.iso_week();
        Self {
            year: iso.year(),
            week: iso.week(),
        }
    }

    /// Number of weeks from `self` to `other` (negative if `other` is earlier).
    pub fn weeks_until(self, other: Self) -> i64 {
        (other.monday() - self.monday()).num_days() / 7
    }

    /// Influenza season the week belongs to: weeks 27..=53 of year `y` and
    /// weeks 1..=26 of year `y + 1` form season `y`.
    pub fn season(self) -> i32 {
        if self.week >= 27 {
            self.year
        } else {
            self.year - 1
        }
    }

    /// Parses `YYYYWW`, `YYYYWww`, `YYYY-Www` or `YYYY-WW`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let digits: String = t.chars().filter(|c| c.is_ascii_digit()).collect();
        let only_known = t
            .chars()
            .all(|c| c.is_ascii_digit() || c == 'W' || c == 'w' || c == '-');
        if !only_known || !(digits.len() == 6 || digits.len() == 5) {
            return Err(Error::domain(format!("unrecognized week '{t}'")));
        }
        let year: i32 = digits[..4].parse().map_err(|_| Error::domain(format!("bad year in '{t}'")))?;
        let week: u32 = digits[4..].parse().map_err(|_| Error::domain(format!("bad week in '{t}'")))?;
        Self::new(year, week)
    }
}

impl fmt::Display for IsoWeek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-W{:02}", self.year, self.week)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeeklyRecord {
    pub week: IsoWeek,
    /// Incidence per 100,000 inhabitants.
    pub rate: f64,
}

/// What to do when consecutive records skip one or more ISO weeks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    #[default]
    Reject,
    Interpolate,
}

/// Weekly incidence series, strictly increasing in time and gap-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidenceSeries {
    records: Vec<WeeklyRecord>,
}

impl IncidenceSeries {
    /// Validates ordering, sign and contiguity.
    pub fn new(records: Vec<WeeklyRecord>, gaps: GapPolicy) -> Result<Self> {
        let mut out: Vec<WeeklyRecord> = Vec::with_capacity(records.len());
        for (i, r) in records.into_iter().enumerate() {
            if !(r.rate >= 0.0) || !r.rate.is_finite() {
                return Err(Error::domain(format!(
                    "record {} ({}) has invalid rate {}",
                    i + 1,
                    r.week,
                    r.rate
                )));
            }
            if let Some(prev) = out.last().copied() {
                let step = prev.week.weeks_until(r.week);
                if step <= 0 {
                    return Err(Error::Ordering {
                        line: i + 1,
                        week: r.week.to_string(),
                        previous: prev.week.to_string(),
                    });
                }
                if step > 1 {
                    match gaps {
                        GapPolicy::Reject => {
                            return Err(Error::Gap {
                                after: prev.week.to_string(),
                                before: r.week.to_string(),
                            })
                        }
                        GapPolicy::Interpolate => {
                            let mut w = prev.week;
                            for k in 1..step {
                                w = w.succ();
                                let frac = k as f64 / step as f64;
                                out.push(WeeklyRecord {
                                    week: w,
                                    rate: prev.rate + frac * (r.rate - prev.rate),
                                });
                            }
                        }
                    }
                }
            }
            out.push(r);
        }
        Ok(Self { records: out })
    }

    pub fn records(&self) -> &[WeeklyRecord] {
        &self.records
    }

    pub fn rates(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.rate).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sub-series of records whose ISO year lies in `first..=last`.
    pub fn years(&self, first: i32, last: i32) -> Self {
        Self {
            records: self
                .records
                .iter()
                .filter(|r| r.week.year >= first && r.week.year <= last)
                .copied()
                .collect(),
        }
    }

    /// Sub-series of records up to and including `last`.
    pub fn until(&self, last: IsoWeek) -> Self {
        Self {
            records: self.records.iter().filter(|r| r.week <= last).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    pub gaps: GapPolicy,
}

/// Parses a weekly incidence CSV.
///
/// Accepted layouts, with or without a header row (lines starting with `#`
/// are ignored):
///
/// * `week,rate` where `week` is `YYYYWW`, `YYYYWww` or `YYYY-Www`;
/// * `year,week,rate`;
/// * any header containing `week` and one of `rate` / `inc100`, in which
///   case those columns are used (Sentinelles export layout).
pub fn parse_series(csv_bytes: &[u8], opts: ParseOptions) -> Result<IncidenceSeries> {
    let text = std::str::from_utf8(csv_bytes).map_err(|e| Error::Parse {
        line: 0,
        message: format!("input is not UTF-8: {e}"),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    #[derive(Clone, Copy)]
    enum Layout {
        WeekRate { week: usize, rate: usize },
        YearWeekRate,
    }
    let mut layout: Option<Layout> = None;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.iter().all(|f| f.is_empty()) {
            continue;
        }
        if layout.is_none() {
            let first = row.get(0).unwrap_or("");
            let looks_numeric = first.chars().next().is_some_and(|c| c.is_ascii_digit());
            if !looks_numeric {
                let lower: Vec<String> = row.iter().map(|h| h.to_ascii_lowercase()).collect();
                let find = |names: &[&str]| lower.iter().position(|h| names.contains(&h.as_str()));
                let layout_from_header = match (find(&["week"]), find(&["rate", "inc100"]), find(&["year"])) {
                    (Some(w), Some(r), None) => Layout::WeekRate { week: w, rate: r },
                    (Some(_), Some(_), Some(_)) => Layout::YearWeekRate,
                    _ => {
                        return Err(Error::Parse {
                            line,
                            message: format!("header must name 'week' and 'rate' columns, got {lower:?}"),
                        })
                    }
                };
                layout = Some(layout_from_header);
                continue;
            }
            layout = Some(if row.len() >= 3 {
                Layout::YearWeekRate
            } else {
                Layout::WeekRate { week: 0, rate: 1 }
            });
        }
        let field = |i: usize| -> Result<&str> {
            row.get(i).ok_or_else(|| Error::Parse {
                line,
                message: format!("expected at least {} columns, found {}", i + 1, row.len()),
            })
        };
        let parse_err = |e: Error| Error::Parse {
            line,
            message: e.to_string(),
        };
        let (week, rate_text) = match layout.expect("set above") {
            Layout::WeekRate { week, rate } => (IsoWeek::parse(field(week)?).map_err(parse_err)?, field(rate)?),
            Layout::YearWeekRate => {
                let y: i32 = field(0)?.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad year '{}'", field(0).unwrap_or("")),
                })?;
                let w: u32 = field(1)?.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad week '{}'", field(1).unwrap_or("")),
                })?;
                (IsoWeek::new(y, w).map_err(parse_err)?, field(2)?)
            }
        };
        let rate: f64 = rate_text.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad rate '{rate_text}'"),
        })?;
        if rate < 0.0 {
            return Err(Error::domain(format!("line {line}: negative rate {rate}")));
        }
        if let Some(prev) = records.last().map(|r: &WeeklyRecord| r.week) {
            if week <= prev {
                return Err(Error::Ordering {
                    line,
                    week: week.to_string(),
                    previous: prev.to_string(),
                });
            }
        }
        records.push(WeeklyRecord { week, rate });
    }
    IncidenceSeries::new(records, opts.gaps)
}
