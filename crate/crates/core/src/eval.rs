//! Forecast scoring: RMSE, absolute-error distributions, binned log scores,
//! and lagged rank correlation against auxiliary series.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::predictive::{rolling_forecast, CensoredPoisson, ForecastSet, LowerBound, PointModelConfig};
use crate::timeseries::{cumulative, IncidenceSeries};

/// Lowest log score assigned; bounds the penalty for zero-mass bins.
pub const LOG_SCORE_FLOOR: f64 = -10.0;

pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mse = pairs.iter().map(|(p, o)| (p - o).powi(2)).sum::<f64>() / pairs.len() as f64;
    Ok(mse.sqrt())
}

pub fn mean_absolute_error(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(pairs.iter().map(|(p, o)| (p - o).abs()).sum::<f64>() / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveBucket {
    /// Absolute error; for the tail bucket, its lower end.
    pub error: u64,
    pub tail: bool,
    pub pmf: f64,
    pub cdf: f64,
}

/// Empirical distribution of absolute errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveDistribution {
    pub buckets: Vec<AveBucket>,
    pub n: usize,
}

impl AveDistribution {
    /// Fraction of errors `≤ e`.
    pub fn cdf_at(&self, e: u64) -> f64 {
        self.buckets
            .iter()
            .take_while(|b| b.error <= e && !b.tail)
            .last()
            .map_or(0.0, |b| b.cdf)
    }

    pub fn pmf_of(&self, e: u64) -> f64 {
        self.buckets
            .iter()
            .find(|b| b.error == e && !b.tail)
            .map_or(0.0, |b| b.pmf)
    }
}

/// Distribution of `|p − o|` over `(point, observed)` pairs. Errors at or
/// above `tail_from`, when given, are grouped into one `≥ k` bucket.
pub fn ave_distribution(pairs: &[(u64, u64)], tail_from: Option<u64>) -> Result<AveDistribution> {
    if pairs.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut counts: BTreeMap<(bool, u64), usize> = BTreeMap::new();
    for &(p, o) in pairs {
        let e = p.abs_diff(o);
        let key = match tail_from {
            Some(k) if e >= k => (true, k),
            _ => (false, e),
        };
        *counts.entry(key).or_default() += 1;
    }
    let n = pairs.len();
    let mut acc = 0usize;
    let buckets = counts
        .into_iter()
        .map(|((tail, error), c)| {
            acc += c;
            AveBucket {
                error,
                tail,
                pmf: c as f64 / n as f64,
                cdf: if acc == n { 1.0 } else { acc as f64 / n as f64 },
            }
        })
        .collect();
    Ok(AveDistribution { buckets, n })
}

/// Integer-count bins of fixed width with an optional open upper bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinScheme {
    pub width: u64,
    /// Counts at or above this value share one open bin.
    pub open_from: Option<u64>,
}

impl Default for BinScheme {
    fn default() -> Self {
        Self {
            width: 1,
            open_from: None,
        }
    }
}

impl BinScheme {
    /// Inclusive range of counts in the bin containing `n`; `None` as the
    /// upper end marks the open bin.
    pub fn bin_of(&self, n: u64) -> (u64, Option<u64>) {
        if let Some(open) = self.open_from {
            if n >= open {
                return (open, None);
            }
        }
        let width = self.width.max(1);
        let lo = n / width * width;
        let hi = lo + width - 1;
        match self.open_from {
            Some(open) if hi >= open => (lo, Some(open - 1)),
            _ => (lo, Some(hi)),
        }
    }

    pub fn contains(&self, bin: (u64, Option<u64>), n: u64) -> bool {
        n >= bin.0 && bin.1.is_none_or(|hi| n <= hi)
    }
}

/// A predictive law to be scored.
#[derive(Debug, Clone, Copy)]
pub enum Predictive<'a> {
    Poisson(&'a CensoredPoisson),
    /// Posterior predictive draws; each is rounded to the nearest count.
    Sample(&'a [f64]),
}

/// Log of the predictive mass in the observation's bin, floored at −10.
pub fn log_score(dist: Predictive<'_>, observed: u64, bins: BinScheme) -> f64 {
    let bin = bins.bin_of(observed);
    let mass = match dist {
        Predictive::Poisson(d) => match bin.1 {
            Some(hi) => (bin.0..=hi).map(|n| d.pmf(n)).sum::<f64>(),
            None => {
                let below: f64 = (d.lower()..bin.0).map(|n| d.pmf(n)).sum();
                1.0 - below
            }
        },
        Predictive::Sample(xs) => {
            if xs.is_empty() {
                0.0
            } else {
                let hits = xs
                    .iter()
                    .filter(|&&x| x >= -0.5 && bins.contains(bin, x.round().max(0.0) as u64))
                    .count();
                hits as f64 / xs.len() as f64
            }
        }
    };
    let mass = mass.min(1.0);
    if mass > 0.0 {
        mass.ln().clamp(LOG_SCORE_FLOOR, 0.0)
    } else {
        LOG_SCORE_FLOOR
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredForecast {
    pub week: i64,
    pub horizon: u32,
    pub point: u64,
    pub observed: u64,
    pub abs_error: u64,
    pub log_score: f64,
}

/// Scores every horizon of every set against the realised cumulative
/// counts of `season`.
pub fn score_forecasts(sets: &[ForecastSet], season: &IncidenceSeries, bins: BinScheme) -> Vec<ScoredForecast> {
    let realised = cumulative(season);
    sets.iter()
        .flat_map(|set| set.forecasts.iter())
        .map(|f| {
            let observed = realised.at(f.week);
            ScoredForecast {
                week: f.week,
                horizon: f.horizon,
                point: f.point,
                observed,
                abs_error: f.point.abs_diff(observed),
                log_score: log_score(Predictive::Poisson(&f.distribution), observed, bins),
            }
        })
        .collect()
}

/// Rolling forecasts from every anchor in `anchors`, each scored against
/// the season's realised counts. Targets past the end of the season are
/// left out.
pub fn evaluate_season(
    season: &IncidenceSeries,
    anchors: std::ops::RangeInclusive<i64>,
    horizons: u32,
    mode: LowerBound,
    config: PointModelConfig,
    bins: BinScheme,
) -> Result<(Vec<ForecastSet>, Vec<ScoredForecast>)> {
    let sets = anchors
        .map(|t0| rolling_forecast(season, t0, horizons, mode, config))
        .collect::<Result<Vec<_>>>()?;
    let scored = score_forecasts(&sets, season, bins)
        .into_iter()
        .filter(|s| s.week <= season.end_week())
        .collect();
    Ok((sets, scored))
}

/// Default anchors: from the third week of the season to its second-to-last.
pub fn default_anchors(season: &IncidenceSeries) -> std::ops::RangeInclusive<i64> {
    season.start_week() + 2..=season.end_week() - 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub horizon: u32,
    pub n: usize,
    pub rmse: f64,
    pub mean_log_score: f64,
    pub ave: AveDistribution,
}

pub fn summarise_by_horizon(scored: &[ScoredForecast], tail_from: Option<u64>) -> Result<Vec<HorizonSummary>> {
    let mut by_h: BTreeMap<u32, Vec<&ScoredForecast>> = BTreeMap::new();
    for s in scored {
        by_h.entry(s.horizon).or_default().push(s);
    }
    by_h.into_iter()
        .map(|(horizon, rows)| {
            let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.point as f64, r.observed as f64)).collect();
            let ints: Vec<(u64, u64)> = rows.iter().map(|r| (r.point, r.observed)).collect();
            Ok(HorizonSummary {
                horizon,
                n: rows.len(),
                rmse: rmse(&pairs)?,
                mean_log_score: rows.iter().map(|r| r.log_score).sum::<f64>() / rows.len() as f64,
                ave: ave_distribution(&ints, tail_from)?,
            })
        })
        .collect()
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn midranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of midranks. `None` if either series
/// is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&midranks(a), &midranks(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Student-t approximation with `n − 2` degrees of freedom.
    TApprox,
    /// Exact two-sided permutation test (all `n!` orderings; `n ≤ 10`).
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagCorrelation {
    pub lag: usize,
    pub n: usize,
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
}

fn t_p_value(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

fn permutation_p_value(a: &[f64], b: &[f64], rho: f64) -> f64 {
    let ra = midranks(a);
    let mut rb = midranks(b);
    let n = rb.len();
    let mut extreme = 0u64;
    let mut total = 0u64;
    let target = rho.abs() - 1e-12;
    // Heap's algorithm over all orderings of the second series' ranks.
    let mut c = vec![0usize; n];
    let mut visit = |rb: &[f64]| {
        total += 1;
        if pearson(&ra, rb).is_some_and(|r| r.abs() >= target) {
            extreme += 1;
        }
    };
    visit(&rb);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                rb.swap(0, i);
            } else {
                rb.swap(c[i], i);
            }
            visit(&rb);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    extreme as f64 / total as f64
}

/// For each lag `ℓ = 0..=max_lag`, correlates abundance in week `w` with
/// risk in week `w + ℓ`. Both series start at the same week.
pub fn lagged_spearman(risk: &[f64], abundance: &[f64], max_lag: usize, method: PValueMethod) -> Result<Vec<LagCorrelation>> {
    let len = risk.len().min(abundance.len());
    if len < max_lag + 5 {
        return Err(Error::InvalidArgument(format!(
            "overlap at lag {max_lag} is {} weeks; at least 5 are required",
            len.saturating_sub(max_lag)
        )));
    }
    if method == PValueMethod::Permutation && len > 10 {
        return Err(Error::InvalidArgument("permutation p-values are limited to n <= 10".into()));
    }
    Ok((0..=max_lag)
        .map(|lag| {
            let n = len - lag;
            let a = &abundance[..n];
            let r = &risk[lag..lag + n];
            let rho = spearman(a, r);
            let p_value = rho.map(|rho| match method {
                PValueMethod::TApprox => t_p_value(rho, n),
                PValueMethod::Permutation => permutation_p_value(a, r, rho),
            });
            LagCorrelation { lag, n, rho, p_value }
        })
        .collect())
}
