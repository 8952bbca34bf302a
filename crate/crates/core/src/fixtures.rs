//! Reference series used by tests, the acceptance suite, and the CLI demos.

use crate::icc::{predict_cumulative, LogisticFit};
use crate::timeseries::IncidenceSeries;

/// Florida 2022, weeks 13–21: the first outbreak of the record.
pub fn outbreak_one() -> IncidenceSeries {
    IncidenceSeries::new(13, vec![0, 0, 1, 0, 0, 5, 0, 4, 0]).expect("non-empty")
}

/// Florida 2023, weeks 77–87.
///
/// Weeks 80–87 are the observed cumulative counts
/// (3, 4, 8, 9, 13, 14, 17, 17); weeks 77–79 are reconstructed with one case
/// at onset, consistent with a cumulative total of 1 at week 79.
pub fn outbreak_three() -> IncidenceSeries {
    IncidenceSeries::new(77, vec![1, 0, 0, 2, 1, 4, 1, 4, 1, 3, 0]).expect("non-empty")
}

/// Integer weekly counts whose cumulative series is `round(C_t)` for the
/// given logistic over weeks `first..=last`, counting from zero before
/// `first`.
pub fn logistic_season(truth: &LogisticFit, first: i64, last: i64) -> IncidenceSeries {
    let mut prev = 0.0;
    let counts = (first..=last)
        .map(|t| {
            let c = predict_cumulative(truth, t as f64).round();
            let n = (c - prev).max(0.0) as u64;
            prev = prev.max(c);
            n
        })
        .collect();
    IncidenceSeries::new(first, counts).expect("non-empty")
}

/// A 108-week series with active stretches at weeks 13–21, 25–67, 77–87
/// and 88–103, separated by zero-count runs except at the 87/88 boundary.
pub fn florida_like() -> IncidenceSeries {
    let mut counts = vec![0u64; 108];
    let mut fill = |first: usize, last: usize, peak: u64| {
        let len = (last - first + 1) as f64;
        for week in first..=last {
            let x = (week - first) as f64 / (len - 1.0).max(1.0);
            let shape = 1.0 - (2.0 * x - 1.0).powi(2);
            counts[week - 1] = 1 + (peak as f64 * shape).round() as u64;
        }
    };
    fill(13, 21, 4);
    fill(25, 67, 9);
    fill(77, 87, 4);
    fill(88, 103, 20);
    IncidenceSeries::new(1, counts).expect("non-empty")
}
