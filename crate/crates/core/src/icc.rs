//! The incidence-vs-cumulative-cases (ICC) curve.
//!
//! Under logistic growth the weekly incidence is a parabola in the
//! cumulative count, `dC/dt = W·C·(L0 − C)`, whose second root `L0` is the
//! final epidemic size. Fitting that parabola gives `L0`; fixing `L0` and
//! regressing `logit(C_t / L0)` on `t` then gives the time-domain logistic
//! `C_t = L0 / (1 + exp(−δ(t − μ)))`, with `δ = W·L0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{cumulative, IncidenceSeries};

/// Lower bound applied to the growth-rate constant when a fit would make it
/// non-positive.
pub const MIN_GROWTH_RATE: f64 = 1e-12;

/// One point of the ICC plot: cumulative cases against new cases that week.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccPoint {
    pub c: f64,
    pub dc: f64,
}

impl IccPoint {
    pub fn new(c: f64, dc: f64) -> Self {
        Self { c, dc }
    }
}

/// How an [`IccFit`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParabolaRoute {
    /// Two-parameter least squares through the origin.
    Quadratic,
    /// Downward parabola whose root fell below `S + 1`; `L0` clamped and `W` refit.
    ClampedFinalSize,
    /// Upward-opening or unidentifiable parabola; `L0 = 2·S` and `W` refit.
    FixedFinalSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccFit {
    pub w: f64,
    pub l0: f64,
    pub rss: f64,
    pub route: ParabolaRoute,
}

impl IccFit {
    /// Growth rate of the matching logistic, `δ = W·L0`.
    pub fn delta(&self) -> f64 {
        self.w * self.l0
    }

    pub fn rate_at(&self, c: f64) -> f64 {
        self.w * c * (self.l0 - c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub l0: f64,
    pub delta: f64,
    pub mu: f64,
}

/// ICC points for each week of a season; zero-cumulative weeks are kept.
pub fn icc_points(season: &IncidenceSeries) -> Vec<IccPoint> {
    let cum = cumulative(season);
    cum.values()
        .iter()
        .zip(season.new_cases())
        .map(|(&c, &dc)| IccPoint::new(c as f64, dc as f64))
        .collect()
}

/// Least-squares fit of `dc = a·c + b·c²` and conversion to `W = −b`,
/// `L0 = −a/b`.
///
/// The returned fit always has `l0 ≥ s + 1` and `w > 0`. A root below
/// `s + 1` is clamped and `W` refit with `L0` fixed; an upward-opening
/// parabola (`b ≥ 0`) falls back to `L0 = 2·s`, again with `W` refit.
pub fn fit_parabola(points: &[IccPoint], s: f64) -> Result<IccFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let c_max = points.iter().map(|p| p.c).fold(0.0, f64::max);
    if !(s >= c_max) {
        return Err(Error::InvalidArgument(format!(
            "total cases {s} is below the largest cumulative value {c_max}"
        )));
    }
    if c_max <= 0.0 {
        return Err(Error::DegenerateDesign);
    }

    // Solve in the scaled variable u = c / c_max for conditioning.
    let (mut s2, mut s3, mut s4, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let u = p.c / c_max;
        let u2 = u * u;
        s2 += u2;
        s3 += u2 * u;
        s4 += u2 * u2;
        r1 += u * p.dc;
        r2 += u2 * p.dc;
    }
    let det = s2 * s4 - s3 * s3;
    if det <= 1e-12 * s2 * s4 {
        return Err(Error::DegenerateDesign);
    }
    let a = (s4 * r1 - s3 * r2) / det / c_max;
    let b = (s2 * r2 - s3 * r1) / det / (c_max * c_max);

    if b >= 0.0 {
        return Ok(fit_with_final_size(
            points,
            (2.0 * s).max(s + 1.0),
            ParabolaRoute::FixedFinalSize,
        ));
    }
    let l0 = -a / b;
    if l0 < s + 1.0 {
        return Ok(fit_with_final_size(
            points,
            s + 1.0,
            ParabolaRoute::ClampedFinalSize,
        ));
    }
    let w = -b;
    Ok(IccFit {
        w,
        l0,
        rss: rss(points, w, l0),
        route: ParabolaRoute::Quadratic,
    })
}

/// One-parameter fit of `W` in `dc = W·c·(l0 − c)` with `l0` held fixed.
pub fn fit_with_final_size(points: &[IccPoint], l0: f64, route: ParabolaRoute) -> IccFit {
    let (num, den) = points.iter().fold((0.0, 0.0), |(num, den), p| {
        let g = p.c * (l0 - p.c);
        (num + g * p.dc, den + g * g)
    });
    let w = if den > 0.0 { num / den } else { 0.0 };
    let w = if w.is_finite() { w.max(MIN_GROWTH_RATE) } else { MIN_GROWTH_RATE };
    IccFit {
        w,
        l0,
        rss: rss(points, w, l0),
        route,
    }
}

fn rss(points: &[IccPoint], w: f64, l0: f64) -> f64 {
    points
        .iter()
        .map(|p| {
            let r = p.dc - w * p.c * (l0 - p.c);
            r * r
        })
        .sum()
}

/// Fits `(δ, μ)` with `L0` fixed, from the season's cumulative counts.
pub fn fit_logistic(season: &IncidenceSeries, l0: f64) -> Result<LogisticFit> {
    let cum: Vec<f64> = cumulative(season).values().iter().map(|&c| c as f64).collect();
    fit_logistic_cumulative(season.start_week(), &cum, l0)
}

/// Ordinary least squares on `logit(C_t / l0) = δ·(t − μ)`, using only
/// weeks with `0 < C_t < l0`. `cumulative[i]` belongs to week
/// `start_week + i`.
pub fn fit_logistic_cumulative(start_week: i64, cumulative: &[f64], l0: f64) -> Result<LogisticFit> {
    let max_c = cumulative.iter().copied().fold(0.0, f64::max);
    if !(l0 > max_c) {
        return Err(Error::FinalSizeTooSmall {
            l0,
            max_cumulative: max_c,
        });
    }

    let (mut n, mut st, mut sy) = (0usize, 0.0, 0.0);
    for (i, &c) in cumulative.iter().enumerate() {
        if c > 0.0 && c < l0 {
            n += 1;
            st += (start_week + i as i64) as f64;
            sy += (c / (l0 - c)).ln();
        }
    }
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let t_mean = st / n as f64;
    let y_mean = sy / n as f64;
    let (mut stt, mut sty) = (0.0, 0.0);
    for (i, &c) in cumulative.iter().enumerate() {
        if c > 0.0 && c < l0 {
            let dt = (start_week + i as i64) as f64 - t_mean;
            stt += dt * dt;
            sty += dt * ((c / (l0 - c)).ln() - y_mean);
        }
    }
    if stt <= 0.0 {
        return Err(Error::ZeroTimeVariance);
    }
    let delta = sty / stt;
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::NonPositiveRate(delta));
    }
    Ok(LogisticFit {
        l0,
        delta,
        mu: t_mean - y_mean / delta,
    })
}

/// `L0 / (1 + exp(−δ(t − μ)))`.
pub fn predict_cumulative(fit: &LogisticFit, t: f64) -> f64 {
    let z = fit.delta * (t - fit.mu);
    if z >= 0.0 {
        fit.l0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        fit.l0 * e / (1.0 + e)
    }
}
