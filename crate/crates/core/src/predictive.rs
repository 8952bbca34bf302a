//! Predictive distributions for cumulative cases and rolling forecasts.
//!
//! The forecast of cumulative cases at week `t` is Poisson with rate equal
//! to the fitted logistic `C_t`, restricted to values no smaller than the
//! cumulative count already reported (`R_{t−1}`) and renormalised over that
//! support. This is a left-truncated Poisson; it is called "censored" here
//! for consistency with the surveillance literature it is used in.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::icc::{
    fit_logistic, fit_parabola, fit_with_final_size, icc_points, predict_cumulative, IccFit,
    IccPoint, LogisticFit, ParabolaRoute,
};
use crate::timeseries::{cumulative, IncidenceSeries};

/// Normalising mass below which a distribution is rejected.
const MIN_SUPPORT_MASS: f64 = 1e-300;

/// Above this rate the pmf is evaluated through logarithms only.
const LOG_SPACE_RATE: f64 = 50.0;

pub const MAX_HORIZON: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CensoredPoisson {
    lambda: f64,
    lower: u64,
    #[serde(skip)]
    ln_mass: f64,
}

fn ln_poisson(lambda: f64, k: u64) -> f64 {
    let k = k as f64;
    k * lambda.ln() - lambda - ln_gamma(k + 1.0)
}

fn poisson(lambda: f64, k: u64) -> f64 {
    if lambda > LOG_SPACE_RATE || k > 150 {
        ln_poisson(lambda, k).exp()
    } else {
        // Product form keeps full precision for moderate rates.
        let mut p = (-lambda).exp();
        for i in 1..=k {
            p *= lambda / i as f64;
        }
        p
    }
}

impl CensoredPoisson {
    pub fn new(lambda: f64, lower: u64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Poisson rate must be positive and finite, got {lambda}"
            )));
        }
        let ln_mass = ln_upper_tail(lambda, lower);
        if !(ln_mass > MIN_SUPPORT_MASS.ln()) {
            return Err(Error::EmptySupportMass { lambda, lower });
        }
        Ok(Self {
            lambda,
            lower,
            ln_mass,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lower(&self) -> u64 {
        self.lower
    }

    /// Probability mass of the untruncated Poisson on `n ≥ lower`.
    pub fn support_mass(&self) -> f64 {
        self.ln_mass.exp()
    }

    pub fn ln_pmf(&self, n: u64) -> f64 {
        if n < self.lower {
            f64::NEG_INFINITY
        } else {
            ln_poisson(self.lambda, n) - self.ln_mass
        }
    }

    pub fn pmf(&self, n: u64) -> f64 {
        if n < self.lower {
            0.0
        } else if self.lambda > LOG_SPACE_RATE {
            self.ln_pmf(n).exp()
        } else {
            poisson(self.lambda, n) / self.ln_mass.exp()
        }
    }

    pub fn cdf(&self, n: u64) -> f64 {
        if n < self.lower {
            return 0.0;
        }
        (self.lower..=n).map(|k| self.pmf(k)).sum::<f64>().min(1.0)
    }

    /// Smallest `n ≥ lower` with `cdf(n) ≥ q`.
    pub fn quantile(&self, q: f64) -> Result<u64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level {q} outside (0, 1)")));
        }
        let mut acc = 0.0;
        let mut n = self.lower;
        loop {
            let p = self.pmf(n);
            acc += p;
            if acc >= q {
                return Ok(n);
            }
            // Past the mode the remaining tail is bounded by a geometric series.
            let next = n as f64 + 1.0;
            if next > self.lambda {
                let tail = p * self.lambda / (next - self.lambda);
                if tail <= f64::EPSILON * 0.5 {
                    return Ok(n);
                }
            }
            n += 1;
        }
    }

    pub fn median(&self) -> Result<u64> {
        self.quantile(0.5)
    }

    /// Upper end of a support window holding all but a negligible tail.
    pub fn support_upper(&self) -> u64 {
        self.lower + (20.0 * (1.0 + self.lambda.sqrt())).ceil() as u64 + 50
    }

    /// `(n, pmf(n))` over `lower..=support_upper()`.
    pub fn pmf_table(&self) -> Vec<(u64, f64)> {
        (self.lower..=self.support_upper())
            .map(|n| (n, self.pmf(n)))
            .collect()
    }
}

/// `ln P(X ≥ lower)` for `X ~ Poisson(lambda)`.
fn ln_upper_tail(lambda: f64, lower: u64) -> f64 {
    if lower == 0 {
        return 0.0;
    }
    if (lower as f64) <= lambda {
        // Below the mode: the excluded head is at most about one half.
        let head: f64 = (0..lower).map(|k| poisson(lambda, k)).sum();
        return (-head).ln_1p();
    }
    let first = ln_poisson(lambda, lower);
    let mut rel = 0.0;
    let mut term = 1.0;
    let mut k = lower;
    while term > 1e-18 * rel || rel == 0.0 {
        rel += term;
        k += 1;
        term *= lambda / k as f64;
        if term == 0.0 {
            break;
        }
    }
    first + rel.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerBound {
    /// Lower bound `R_{t−1}` taken from realised data; for scoring past forecasts.
    Retrospective,
    /// Lower bound `R_{t0}` for every horizon; for genuine forecasts.
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointModelConfig {
    /// Leave weeks with no new cases out of the parabola fit.
    pub skip_zero_weeks: bool,
}

impl Default for PointModelConfig {
    fn default() -> Self {
        Self {
            skip_zero_weeks: true,
        }
    }
}

/// Parabola and logistic fitted to the data through one anchor week.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointModel {
    pub anchor_week: i64,
    /// Cumulative cases reported through the anchor week.
    pub reported: u64,
    pub icc: IccFit,
    pub logistic: LogisticFit,
    /// The logistic regression was not identifiable, so the curve was pinned
    /// to pass through the last observation with `δ = W·L0`.
    pub anchored: bool,
}

impl PointModel {
    pub fn predict(&self, week: f64) -> f64 {
        predict_cumulative(&self.logistic, week)
    }

    pub fn report(&self) -> FitReport {
        FitReport {
            w: self.icc.w,
            l0: self.icc.l0,
            delta: self.logistic.delta,
            mu: self.logistic.mu,
            rss: self.icc.rss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub w: f64,
    pub l0: f64,
    pub delta: f64,
    pub mu: f64,
    pub rss: f64,
}

/// Fits the two-parameter model to `history` (the season up to the anchor).
///
/// Sparse early data often cannot identify the parabola (fewer than three
/// informative points, or a single distinct cumulative value). In that case
/// the final size defaults to `2·S` with `W` fitted to it, and if the
/// logistic regression is also unidentifiable the curve is anchored at the
/// last observation.
pub fn fit_point_model(history: &IncidenceSeries, config: PointModelConfig) -> Result<PointModel> {
    let anchor_week = history.end_week();
    let s = history.total();
    if s == 0 {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let sf = s as f64;

    let informative: Vec<IccPoint> = icc_points(history)
        .into_iter()
        .filter(|p| p.c > 0.0 && (!config.skip_zero_weeks || p.dc > 0.0))
        .collect();

    let icc = match fit_parabola(&informative, sf) {
        Ok(fit) => fit,
        Err(Error::TooFewPoints { .. } | Error::DegenerateDesign) => {
            fit_with_final_size(&informative, 2.0 * sf, ParabolaRoute::FixedFinalSize)
        }
        Err(e) => return Err(e),
    };

    let (logistic, anchored) = match fit_logistic(history, icc.l0) {
        Ok(fit) => (fit, false),
        Err(Error::TooFewPoints { .. } | Error::NonPositiveRate(_) | Error::ZeroTimeVariance) => {
            let delta = icc.delta();
            let mu = anchor_week as f64 - (sf / (icc.l0 - sf)).ln() / delta;
            (
                LogisticFit {
                    l0: icc.l0,
                    delta,
                    mu,
                },
                true,
            )
        }
        Err(e) => return Err(e),
    };

    Ok(PointModel {
        anchor_week,
        reported: s,
        icc,
        logistic,
        anchored,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonForecast {
    pub week: i64,
    pub horizon: u32,
    pub point: u64,
    pub distribution: CensoredPoisson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    pub anchor_week: i64,
    pub mode: LowerBound,
    pub model: PointModel,
    pub forecasts: Vec<HorizonForecast>,
}

/// Forecasts cumulative cases at `t0 + h` for `h = 1..=horizons`, from the
/// season's data through week `t0`.
///
/// In [`LowerBound::Retrospective`] mode the truncation point for week `t`
/// is the realised cumulative count at `t − 1`, read from `season`; weeks
/// past the end of the season hold its final total.
pub fn rolling_forecast(
    season: &IncidenceSeries,
    t0: i64,
    horizons: u32,
    mode: LowerBound,
    config: PointModelConfig,
) -> Result<ForecastSet> {
    if horizons == 0 || horizons > MAX_HORIZON {
        return Err(Error::InvalidArgument(format!(
            "horizons must be in 1..={MAX_HORIZON}, got {horizons}"
        )));
    }
    if t0 < season.start_week() + 2 || t0 > season.end_week() {
        return Err(Error::InvalidArgument(format!(
            "anchor week {t0} needs at least 3 weeks of data inside {}..={}",
            season.start_week(),
            season.end_week()
        )));
    }
    let history = season.through(t0)?;
    let model = fit_point_model(&history, config).map_err(|e| e.at_week(t0))?;
    let realised = cumulative(season);
    let reported = model.reported;

    let forecasts = (1..=horizons)
        .map(|h| {
            let week = t0 + h as i64;
            let lambda = model.predict(week as f64);
            let point = (lambda.round() as u64).max(reported);
            let lower = match mode {
                LowerBound::Retrospective => realised.at(week - 1),
                LowerBound::Live => reported,
            };
            let distribution = CensoredPoisson::new(lambda, lower).map_err(|e| e.at_week(week))?;
            Ok(HorizonForecast {
                week,
                horizon: h,
                point,
                distribution,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ForecastSet {
        anchor_week: t0,
        mode,
        model,
        forecasts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSummary {
    pub q05: u64,
    pub q25: u64,
    pub q50: u64,
    pub q75: u64,
    pub q95: u64,
}

impl QuantileSummary {
    pub fn of(d: &CensoredPoisson) -> Result<Self> {
        Ok(Self {
            q05: d.quantile(0.05)?,
            q25: d.quantile(0.25)?,
            q50: d.quantile(0.50)?,
            q75: d.quantile(0.75)?,
            q95: d.quantile(0.95)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub week: i64,
    pub horizon: u32,
    pub point: u64,
    pub lambda: f64,
    pub lower: u64,
    pub quantiles: QuantileSummary,
}

/// Serialisable form of a [`ForecastSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSetRecord {
    pub anchor_week: i64,
    pub mode: LowerBound,
    pub fit: FitReport,
    pub forecasts: Vec<ForecastRecord>,
}

impl ForecastSet {
    pub fn record(&self) -> Result<ForecastSetRecord> {
        let forecasts = self
            .forecasts
            .iter()
            .map(|f| {
                Ok(ForecastRecord {
                    week: f.week,
                    horizon: f.horizon,
                    point: f.point,
                    lambda: f.distribution.lambda(),
                    lower: f.distribution.lower(),
                    quantiles: QuantileSummary::of(&f.distribution)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ForecastSetRecord {
            anchor_week: self.anchor_week,
            mode: self.mode,
            fit: self.model.report(),
            forecasts,
        })
    }

    /// `(week, count, probability)` rows covering each target week's support.
    pub fn pmf_grid(&self) -> Vec<(i64, u64, f64)> {
        self.forecasts
            .iter()
            .flat_map(|f| {
                f.distribution
                    .pmf_table()
                    .into_iter()
                    .map(move |(n, p)| (f.week, n, p))
            })
            .collect()
    }
}
