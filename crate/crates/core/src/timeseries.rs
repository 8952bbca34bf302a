//! Weekly case-count series, their running totals, and outbreak-season
//! segmentation.
//!
//! A season is a stretch of transmission delimited by quiet periods: at
//! least `quiet_weeks` consecutive weeks whose count is at or below
//! `quiet_level`. Seasons start and end on active weeks (count above the
//! quiet level); quiet weeks at either edge belong to no season.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// New cases per epidemiological week, over consecutive weeks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidenceSeries {
    start_week: i64,
    new_cases: Vec<u64>,
}

impl IncidenceSeries {
    pub fn new(start_week: i64, new_cases: Vec<u64>) -> Result<Self> {
        if new_cases.is_empty() {
            return Err(Error::EmptySeries);
        }
        Ok(Self {
            start_week,
            new_cases,
        })
    }

    pub fn start_week(&self) -> i64 {
        self.start_week
    }

    /// Last week covered by the series (inclusive).
    pub fn end_week(&self) -> i64 {
        self.start_week + self.new_cases.len() as i64 - 1
    }

    pub fn new_cases(&self) -> &[u64] {
        &self.new_cases
    }

    pub fn len(&self) -> usize {
        self.new_cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.new_cases.is_empty()
    }

    pub fn weeks(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.new_cases.len() as i64).map(move |i| self.start_week + i)
    }

    pub fn get(&self, week: i64) -> Option<u64> {
        let idx = week.checked_sub(self.start_week)?;
        usize::try_from(idx)
            .ok()
            .and_then(|i| self.new_cases.get(i).copied())
    }

    pub fn total(&self) -> u64 {
        self.new_cases.iter().sum()
    }

    /// Sub-series over `[first, last]`, both inclusive.
    pub fn slice(&self, first: i64, last: i64) -> Result<Self> {
        if first > last || first < self.start_week || last > self.end_week() {
            return Err(Error::InvalidArgument(format!(
                "weeks {first}..={last} outside series {}..={}",
                self.start_week,
                self.end_week()
            )));
        }
        let lo = (first - self.start_week) as usize;
        let hi = (last - self.start_week) as usize;
        Self::new(first, self.new_cases[lo..=hi].to_vec())
    }

    /// Data up to and including `week`.
    pub fn through(&self, week: i64) -> Result<Self> {
        self.slice(self.start_week, week.min(self.end_week()))
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    week: String,
    cases: String,
}

/// Reads a `week,cases` CSV. Missing weeks inside the covered range are
/// filled with zero counts.
pub fn parse_weekly_csv(path: impl AsRef<Path>) -> Result<IncidenceSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_weekly_csv(file)
}

pub fn read_weekly_csv<R: Read>(reader: R) -> Result<IncidenceSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "week" || &headers[1] != "cases" {
        return Err(Error::MalformedRow {
            row: 1,
            message: format!("expected header `week,cases`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut rows: Vec<(i64, u64)> = Vec::new();
    for (i, record) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        let week: i64 = record.week.parse().map_err(|_| Error::MalformedRow {
            row,
            message: format!("week `{}` is not an integer", record.week),
        })?;
        let cases: i64 = record.cases.parse().map_err(|_| Error::MalformedRow {
            row,
            message: format!("cases `{}` is not an integer", record.cases),
        })?;
        if cases < 0 {
            return Err(Error::NegativeCount { week, count: cases });
        }
        if let Some(&(previous, _)) = rows.last() {
            if week == previous {
                return Err(Error::DuplicateWeek(week));
            }
            if week < previous {
                return Err(Error::UnorderedWeek { previous, week });
            }
        }
        rows.push((week, cases as u64));
    }

    let (first, _) = *rows.first().ok_or(Error::EmptySeries)?;
    let (last, _) = *rows.last().unwrap();
    let mut counts = vec![0u64; (last - first + 1) as usize];
    for (week, cases) in rows {
        counts[(week - first) as usize] = cases;
    }
    IncidenceSeries::new(first, counts)
}

/// Running total of an [`IncidenceSeries`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CumulativeSeries {
    start_week: i64,
    cumulative: Vec<u64>,
}

impl CumulativeSeries {
    pub fn start_week(&self) -> i64 {
        self.start_week
    }

    pub fn values(&self) -> &[u64] {
        &self.cumulative
    }

    /// Cumulative count at `week`. Weeks before the series are 0 and weeks
    /// after it hold the final total.
    pub fn at(&self, week: i64) -> u64 {
        if week < self.start_week {
            return 0;
        }
        let idx = (week - self.start_week) as usize;
        self.cumulative
            .get(idx)
            .copied()
            .unwrap_or_else(|| self.total())
    }

    /// S, the total number of reported cases.
    pub fn total(&self) -> u64 {
        self.cumulative.last().copied().unwrap_or(0)
    }
}

pub fn cumulative(series: &IncidenceSeries) -> CumulativeSeries {
    let cumulative = series
        .new_cases
        .iter()
        .scan(0u64, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    CumulativeSeries {
        start_week: series.start_week,
        cumulative,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub quiet_weeks: usize,
    pub quiet_level: u64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            quiet_weeks: 3,
            quiet_level: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutbreakSeason {
    pub first_week: i64,
    pub last_week: i64,
    pub series: IncidenceSeries,
}

impl OutbreakSeason {
    pub fn total_cases(&self) -> u64 {
        self.series.total()
    }

    pub fn summary(&self) -> SeasonSummary {
        SeasonSummary {
            first_week: self.first_week,
            last_week: self.last_week,
            total_cases: self.total_cases(),
        }
    }
}

/// JSON form of a season.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonSummary {
    pub first_week: i64,
    pub last_week: i64,
    pub total_cases: u64,
}

pub fn segment_seasons(series: &IncidenceSeries, config: SegmentConfig) -> Vec<OutbreakSeason> {
    segment_seasons_with_splits(series, config, &[])
}

/// Like [`segment_seasons`], but additionally starts a new season at the
/// first active week on or after each week in `split_weeks`, for back-to-back
/// outbreaks that are not separated by a quiet period.
pub fn segment_seasons_with_splits(
    series: &IncidenceSeries,
    config: SegmentConfig,
    split_weeks: &[i64],
) -> Vec<OutbreakSeason> {
    let quiet_weeks = config.quiet_weeks.max(1);
    let splits: BTreeSet<i64> = split_weeks.iter().copied().collect();

    let mut bounds: Vec<(i64, i64)> = Vec::new();
    let mut current: Option<(i64, i64)> = None;
    let mut quiet_run = 0usize;
    let mut pending_split = false;

    for (week, &count) in series.weeks().zip(series.new_cases()) {
        if splits.contains(&week) {
            pending_split = true;
        }
        if count <= config.quiet_level {
            quiet_run += 1;
            continue;
        }
        match current.as_mut() {
            Some((first, last)) => {
                if quiet_run >= quiet_weeks || pending_split {
                    bounds.push((*first, *last));
                    current = Some((week, week));
                } else {
                    *last = week;
                }
            }
            None => current = Some((week, week)),
        }
        quiet_run = 0;
        pending_split = false;
    }
    bounds.extend(current);

    bounds
        .into_iter()
        .map(|(first, last)| OutbreakSeason {
            first_week: first,
            last_week: last,
            series: series
                .slice(first, last)
                .expect("season bounds lie inside the series"),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(text: &str) -> Result<IncidenceSeries> {
        read_weekly_csv(text.as_bytes())
    }

    #[test]
    fn gap_weeks_are_zero_filled() {
        let s = csv("week,cases\n1,0\n2,3\n4,1\n").unwrap();
        assert_eq!(s.start_week(), 1);
        assert_eq!(s.new_cases(), &[0, 3, 0, 1]);
    }

    #[test]
    fn preserves_start_week() {
        let s = csv("week,cases\r\n13,0\r\n14,0\r\n15,1\r\n").unwrap();
        assert_eq!(s.start_week(), 13);
        assert_eq!(s.new_cases(), &[0, 0, 1]);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(
            csv("week,cases\n5,-2\n"),
            Err(Error::NegativeCount { week: 5, count: -2 })
        ));
        assert!(matches!(csv("week,cases\n5,1\n5,2\n"), Err(Error::DuplicateWeek(5))));
        assert!(matches!(
            csv("week,cases\n6,1\n5,2\n"),
            Err(Error::UnorderedWeek { .. })
        ));
        assert!(matches!(csv("week,cases\n5,x\n"), Err(Error::MalformedRow { row: 2, .. })));
        assert!(matches!(csv("week,cases\n5\n"), Err(Error::MalformedRow { .. })));
        assert!(matches!(csv("wk,n\n5,1\n"), Err(Error::MalformedRow { row: 1, .. })));
        assert!(matches!(csv("week,cases\n"), Err(Error::EmptySeries)));
    }

    #[test]
    fn missing_file() {
        let err = parse_weekly_csv("/nonexistent/weekly.csv").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn cumulative_examples() {
        let s = IncidenceSeries::new(13, vec![0, 0, 1, 0, 0, 5, 0, 4, 0]).unwrap();
        let c = cumulative(&s);
        assert_eq!(c.values(), &[0, 0, 1, 1, 1, 6, 6, 10, 10]);
        assert_eq!(c.total(), 10);
        assert_eq!(c.at(12), 0);
        assert_eq!(c.at(18), 6);
        assert_eq!(c.at(30), 10);

        let one = IncidenceSeries::new(0, vec![7]).unwrap();
        assert_eq!(cumulative(&one).values(), &[7]);
        let zeros = IncidenceSeries::new(0, vec![0, 0, 0]).unwrap();
        assert_eq!(cumulative(&zeros).values(), &[0, 0, 0]);
        assert!(IncidenceSeries::new(0, vec![]).is_err());
    }

    #[test]
    fn two_seasons_split_by_quiet_run() {
        let s = IncidenceSeries::new(1, vec![0, 0, 2, 3, 0, 0, 0, 1, 4]).unwrap();
        let seasons = segment_seasons(&s, SegmentConfig::default());
        let spans: Vec<_> = seasons.iter().map(|x| (x.first_week, x.last_week)).collect();
        assert_eq!(spans, vec![(3, 4), (8, 9)]);
        assert_eq!(seasons[1].series.new_cases(), &[1, 4]);
    }

    #[test]
    fn short_quiet_run_does_not_split() {
        let s = IncidenceSeries::new(1, vec![2, 0, 0, 3]).unwrap();
        let seasons = segment_seasons(&s, SegmentConfig::default());
        assert_eq!(seasons.len(), 1);
        assert_eq!((seasons[0].first_week, seasons[0].last_week), (1, 4));
    }

    #[test]
    fn all_quiet_is_empty() {
        let s = IncidenceSeries::new(1, vec![0; 10]).unwrap();
        assert!(segment_seasons(&s, SegmentConfig::default()).is_empty());
        let low = IncidenceSeries::new(1, vec![1, 2, 1]).unwrap();
        let cfg = SegmentConfig {
            quiet_weeks: 2,
            quiet_level: 2,
        };
        assert!(segment_seasons(&low, cfg).is_empty());
    }

    #[test]
    fn explicit_split_week() {
        let s = IncidenceSeries::new(1, vec![1, 2, 3, 2, 4, 5]).unwrap();
        let seasons = segment_seasons_with_splits(&s, SegmentConfig::default(), &[5]);
        let spans: Vec<_> = seasons.iter().map(|x| (x.first_week, x.last_week)).collect();
        assert_eq!(spans, vec![(1, 4), (5, 6)]);
    }

    #[test]
    fn quiet_level_above_zero() {
        let s = IncidenceSeries::new(1, vec![1, 1, 6, 9, 2, 1, 2, 7]).unwrap();
        let cfg = SegmentConfig {
            quiet_weeks: 3,
            quiet_level: 2,
        };
        let spans: Vec<_> = segment_seasons(&s, cfg)
            .iter()
            .map(|x| (x.first_week, x.last_week))
            .collect();
        assert_eq!(spans, vec![(3, 4), (8, 8)]);
    }
}
