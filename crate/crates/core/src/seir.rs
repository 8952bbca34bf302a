//! Two-strain host–vector dengue model.
//!
//! Humans move from susceptible (`S`) through primary infection with strain
//! 1 or 2 (`I1`, `I2`) to single immunity (`R1`, `R2`); a secondary infection
//! with the other strain is either severe (`D`) or not (`Y1`, `Y2`), ending
//! in full immunity (`R`). Infected vector fractions `V1`, `V2` share the
//! saturation term `1 − V1 − V2`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::icc::{fit_logistic_cumulative, fit_parabola, IccFit, IccPoint, LogisticFit};
use crate::timeseries::IncidenceSeries;

pub const COMPARTMENTS: [&str; 11] = ["s", "i1", "r1", "i2", "r2", "d", "y1", "y2", "r", "v1", "v2"];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SeirState {
    pub s: f64,
    pub i1: f64,
    pub r1: f64,
    pub i2: f64,
    pub r2: f64,
    pub d: f64,
    pub y1: f64,
    pub y2: f64,
    pub r: f64,
    pub v1: f64,
    pub v2: f64,
}

impl SeirState {
    pub fn to_array(&self) -> [f64; 11] {
        [
            self.s, self.i1, self.r1, self.i2, self.r2, self.d, self.y1, self.y2, self.r, self.v1, self.v2,
        ]
    }

    pub fn from_array(a: [f64; 11]) -> Self {
        Self {
            s: a[0],
            i1: a[1],
            r1: a[2],
            i2: a[3],
            r2: a[4],
            d: a[5],
            y1: a[6],
            y2: a[7],
            r: a[8],
            v1: a[9],
            v2: a[10],
        }
    }

    /// Total human fraction across all nine human compartments.
    pub fn human_mass(&self) -> f64 {
        self.s + self.i1 + self.r1 + self.i2 + self.r2 + self.d + self.y1 + self.y2 + self.r
    }

    /// The same state with strain labels 1 and 2 exchanged.
    pub fn swap_strains(&self) -> Self {
        Self {
            i1: self.i2,
            i2: self.i1,
            r1: self.r2,
            r2: self.r1,
            y1: self.y2,
            y2: self.y1,
            v1: self.v2,
            v2: self.v1,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        if a.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidArgument("compartments must be finite and non-negative".into()));
        }
        if self.v1 + self.v2 > 1.0 {
            return Err(Error::InvalidArgument("v1 + v2 must not exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SeirParams {
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
    pub gamma: f64,
    pub mu_h: f64,
    pub mu_v: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub q: f64,
}

impl SeirParams {
    pub fn swap_strains(&self) -> Self {
        Self {
            b1: self.b2,
            b2: self.b1,
            a1: self.a2,
            a2: self.a1,
            sigma1: self.sigma2,
            sigma2: self.sigma1,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            self.b1, self.b2, self.a1, self.a2, self.gamma, self.mu_h, self.mu_v, self.sigma1, self.sigma2,
        ];
        if rates.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidArgument("rates must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::InvalidArgument("q must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Rate of new human infections (primary and secondary) per unit time.
    pub fn infection_flux(&self, x: &SeirState) -> f64 {
        self.b1 * x.v1 * x.s
            + self.b2 * x.v2 * x.s
            + self.sigma2 * self.b2 * x.v2 * x.r1
            + self.sigma1 * self.b1 * x.v1 * x.r2
    }
}

pub fn derivatives(x: &SeirState, p: &SeirParams) -> SeirState {
    let inf1 = p.b1 * x.v1;
    let inf2 = p.b2 * x.v2;
    let secondary1 = p.sigma1 * inf1 * x.r2;
    let secondary2 = p.sigma2 * inf2 * x.r1;
    let free_vectors = 1.0 - x.v1 - x.v2;
    SeirState {
        s: -(inf1 + inf2) * x.s - p.mu_h * x.s,
        i1: inf1 * x.s - (p.gamma + p.mu_h) * x.i1,
        r1: p.gamma * x.i1 - secondary2 - p.mu_h * x.r1,
        i2: inf2 * x.s - (p.gamma + p.mu_h) * x.i2,
        r2: p.gamma * x.i2 - secondary1 - p.mu_h * x.r2,
        d: p.q * (secondary2 + secondary1) - (p.mu_h + p.gamma) * x.d,
        y1: (1.0 - p.q) * secondary1 - (p.gamma + p.mu_h) * x.y1,
        y2: (1.0 - p.q) * secondary2 - (p.gamma + p.mu_h) * x.y2,
        r: p.gamma * (x.y1 + x.y2 + x.d),
        v1: p.a1 * (x.i1 + x.y1) * free_vectors - p.mu_v * x.v1,
        v2: p.a2 * (x.i2 + x.y2) * free_vectors - p.mu_v * x.v2,
    }
}

/// Weekly samples of an integrated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    /// State at each week boundary, starting with the initial state (week 0).
    pub states: Vec<SeirState>,
    /// Integrated infection flux (population fraction) at each boundary.
    pub cumulative_infections: Vec<f64>,
    /// Fine steps after which some component had to be clamped to zero.
    pub clamp_events: usize,
    /// Fine-step state at the end of the run, whether or not it falls on a
    /// week boundary.
    pub final_state: SeirState,
}

type Augmented = [f64; 12];

fn augmented_rhs(y: &Augmented, p: &SeirParams) -> Augmented {
    let mut a = [0.0; 11];
    a.copy_from_slice(&y[..11]);
    let x = SeirState::from_array(a);
    let d = derivatives(&x, p).to_array();
    let mut out = [0.0; 12];
    out[..11].copy_from_slice(&d);
    out[11] = p.infection_flux(&x);
    out
}

fn axpy(y: &Augmented, h: f64, k: &Augmented) -> Augmented {
    let mut out = *y;
    for (o, k) in out.iter_mut().zip(k) {
        *o += h * k;
    }
    out
}

/// Classical fixed-step RK4 for `n_steps` steps of `dt` weeks. Weekly
/// samples require `1/dt` to be a whole number of steps.
pub fn integrate(state0: &SeirState, params: &SeirParams, dt: f64, n_steps: usize) -> Result<Trajectory> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let per_week = (1.0 / dt).round();
    if per_week < 1.0 || ((per_week * dt) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("1/dt must be a whole number, got dt = {dt}")));
    }
    let per_week = per_week as usize;
    state0.validate()?;
    params.validate()?;

    let mut y: Augmented = [0.0; 12];
    y[..11].copy_from_slice(&state0.to_array());
    let mut states = vec![*state0];
    let mut cumulative = vec![0.0];
    let mut clamp_events = 0;

    for step in 1..=n_steps {
        let k1 = augmented_rhs(&y, params);
        let k2 = augmented_rhs(&axpy(&y, dt / 2.0, &k1), params);
        let k3 = augmented_rhs(&axpy(&y, dt / 2.0, &k2), params);
        let k4 = augmented_rhs(&axpy(&y, dt, &k3), params);
        for i in 0..12 {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        let mut clamped = false;
        for v in y[..11].iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
                clamped = true;
            }
        }
        let vectors = y[9] + y[10];
        if vectors > 1.0 {
            y[9] /= vectors;
            y[10] /= vectors;
            clamped = true;
        }
        clamp_events += clamped as usize;

        if step % per_week == 0 {
            let mut a = [0.0; 11];
            a.copy_from_slice(&y[..11]);
            states.push(SeirState::from_array(a));
            cumulative.push(y[11]);
        }
    }
    let mut a = [0.0; 11];
    a.copy_from_slice(&y[..11]);
    Ok(Trajectory {
        dt,
        states,
        cumulative_infections: cumulative,
        clamp_events,
        final_state: SeirState::from_array(a),
    })
}

/// New cases per week (starting at week 1): the population times the
/// infection flux integrated over each week, rounded.
pub fn weekly_incidence(trajectory: &Trajectory, population: f64) -> Result<IncidenceSeries> {
    if trajectory.cumulative_infections.len() < 2 {
        return Err(Error::InvalidArgument("trajectory must span at least one week".into()));
    }
    let counts = weekly_incidence_real(trajectory, population)
        .into_iter()
        .map(|x| x.round().max(0.0) as u64)
        .collect();
    IncidenceSeries::new(1, counts)
}

/// Unrounded weekly incidence.
pub fn weekly_incidence_real(trajectory: &Trajectory, population: f64) -> Vec<f64> {
    trajectory
        .cumulative_infections
        .windows(2)
        .map(|w| population * (w[1] - w[0]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeCheck {
    /// Coefficient of determination of the parabola, centred on mean incidence.
    pub r_squared: f64,
    /// `|δ_logistic − W·L0| / (W·L0)`.
    pub delta_rel_error: f64,
    pub icc: IccFit,
    pub logistic: LogisticFit,
}

/// Final three weeks all below 5% of the peak.
pub fn is_completed(weekly: &[f64]) -> bool {
    let peak = weekly.iter().copied().fold(0.0, f64::max);
    weekly.len() >= 4 && peak > 0.0 && weekly[weekly.len() - 3..].iter().all(|&x| x < 0.05 * peak)
}

/// Fits the ICC parabola and logistic to a completed outbreak and reports
/// how well the quadratic incidence law holds.
pub fn icc_shape_check(series: &IncidenceSeries) -> Result<ShapeCheck> {
    let weekly: Vec<f64> = series.new_cases().iter().map(|&x| x as f64).collect();
    icc_shape_check_real(series.start_week(), &weekly)
}

pub fn icc_shape_check_real(start_week: i64, weekly: &[f64]) -> Result<ShapeCheck> {
    if !is_completed(weekly) {
        return Err(Error::InvalidArgument(
            "outbreak is not completed: final 3 weeks must be below 5% of the peak".into(),
        ));
    }
    let mut c = 0.0;
    let points: Vec<IccPoint> = weekly
        .iter()
        .map(|&dc| {
            c += dc;
            IccPoint::new(c, dc)
        })
        .collect();
    let total = c;
    let icc = fit_parabola(&points, total)?;
    let mean = weekly.iter().sum::<f64>() / weekly.len() as f64;
    let tss: f64 = weekly.iter().map(|x| (x - mean).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - icc.rss / tss } else { 0.0 };

    let cumulative: Vec<f64> = points.iter().map(|p| p.c).collect();
    let logistic = fit_logistic_cumulative(start_week, &cumulative, icc.l0.max(total * (1.0 + 1e-9)))?;
    let delta_rel_error = (logistic.delta - icc.delta()).abs() / icc.delta();
    Ok(ShapeCheck {
        r_squared,
        delta_rel_error,
        icc,
        logistic,
    })
}

/// Everything needed to run one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: SeirParams,
    pub initial: SeirState,
    pub dt: f64,
    pub weeks: usize,
    pub population: f64,
}

impl Scenario {
    /// Single-strain reference outbreak: `b1 = 2`, `a1 = 1.5`, `γ = 0.7`,
    /// `μ_v = 0.5`, no human mortality, `v1(0) = 1e−4`, 40 weeks,
    /// population 1e5.
    pub fn benchmark() -> Self {
        Self {
            params: SeirParams {
                b1: 2.0,
                a1: 1.5,
                gamma: 0.7,
                mu_v: 0.5,
                ..SeirParams::default()
            },
            initial: SeirState {
                s: 1.0,
                v1: 1e-4,
                ..SeirState::default()
            },
            dt: 0.01,
            weeks: 40,
            population: 1e5,
        }
    }

    pub fn steps(&self) -> usize {
        (self.weeks as f64 / self.dt).round() as usize
    }

    pub fn run(&self) -> Result<Trajectory> {
        integrate(&self.initial, &self.params, self.dt, self.steps())
    }

    /// Parses `key = value` lines; `#` starts a comment. Every parameter,
    /// every compartment, `dt`, `weeks` and `population` must be present.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values: BTreeMap<String, f64> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::MalformedRow {
                row: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim().to_string();
            let value: f64 = value.trim().parse().map_err(|_| Error::MalformedRow {
                row: i + 1,
                message: format!("value for `{key}` is not a number"),
            })?;
            if values.insert(key.clone(), value).is_some() {
                return Err(Error::MalformedRow {
                    row: i + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        let mut take = |key: &str| {
            values
                .remove(key)
                .ok_or_else(|| Error::InvalidArgument(format!("scenario is missing `{key}`")))
        };
        let params = SeirParams {
            b1: take("b1")?,
            b2: take("b2")?,
            a1: take("a1")?,
            a2: take("a2")?,
            gamma: take("gamma")?,
            mu_h: take("mu_h")?,
            mu_v: take("mu_v")?,
            sigma1: take("sigma1")?,
            sigma2: take("sigma2")?,
            q: take("q")?,
        };
        let mut state = [0.0; 11];
        for (slot, name) in state.iter_mut().zip(COMPARTMENTS) {
            *slot = take(name)?;
        }
        let dt = take("dt")?;
        let weeks = take("weeks")?;
        let population = take("population")?;
        if let Some(extra) = values.keys().next() {
            return Err(Error::InvalidArgument(format!("unknown scenario key `{extra}`")));
        }
        if weeks < 1.0 || weeks.fract() != 0.0 {
            return Err(Error::InvalidArgument("weeks must be a positive integer".into()));
        }
        if !(population > 0.0) {
            return Err(Error::InvalidArgument("population must be positive".into()));
        }
        let scenario = Self {
            params,
            initial: SeirState::from_array(state),
            dt,
            weeks: weeks as usize,
            population,
        };
        scenario.params.validate()?;
        scenario.initial.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Key-value text accepted by [`Scenario::parse`].
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        for (k, v) in [
            ("b1", p.b1),
            ("b2", p.b2),
            ("a1", p.a1),
            ("a2", p.a2),
            ("gamma", p.gamma),
            ("mu_h", p.mu_h),
            ("mu_v", p.mu_v),
            ("sigma1", p.sigma1),
            ("sigma2", p.sigma2),
            ("q", p.q),
        ] {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (k, v) in COMPARTMENTS.iter().zip(self.initial.to_array()) {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str(&format!("dt = {}\nweeks = {}\npopulation = {}\n", self.dt, self.weeks, self.population));
        out
    }
}
