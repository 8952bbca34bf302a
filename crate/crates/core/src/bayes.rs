//! Bayesian forecasting with latent weekly counts.
//!
//! The reported counts `x` are noisy views of latent counts `o`, and the
//! final size `L` is uncertain. With priors
//!
//! * `o | x ~ N(x, δe·I)` restricted to `o ≥ 0`,
//! * `L ~ N(L̂0, δL)` restricted to `L ≥ S = Σ x`,
//!
//! and the logistic time-to-infection likelihood evaluated at the target
//! week `t`, the posterior of `(o, L)` is sampled by random-walk Metropolis
//! with reflection at the support boundaries. Each retained draw maps to a
//! predictive cumulative count `C_t` through the same logit-linear logistic
//! fit used by the point forecasts.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};

use crate::diagnostics::{diagnose, DiagnosticReport};
use crate::error::{Error, Result};
use crate::icc::{fit_logistic_cumulative, predict_cumulative, LogisticFit};
use crate::predictive::{fit_point_model, PointModelConfig};
use crate::timeseries::IncidenceSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesConfig {
    /// Observation-noise variance of the latent counts (cases²).
    pub delta_e: f64,
    /// Prior variance of the final size (cases²).
    pub delta_l: f64,
    pub chains: usize,
    /// Accepted draws discarded per chain before retention starts.
    pub burn_in: u64,
    pub thin: u64,
    /// Draws retained per chain after thinning.
    pub draws: usize,
    /// Proposal sd per latent count; derived from `delta_e` when unset.
    pub step_o: Option<f64>,
    /// Proposal sd for the final size; derived from `L̂0` when unset.
    pub step_l: Option<f64>,
    pub seed: u64,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            delta_e: 0.3,
            delta_l: 1e6,
            chains: 4,
            burn_in: 10_000,
            thin: 5,
            draws: 20_000,
            step_o: None,
            step_l: None,
            seed: 1,
        }
    }
}

impl BayesConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.delta_e > 0.0) || !(self.delta_l > 0.0) {
            return bad("variances must be positive");
        }
        if self.chains < 2 {
            return bad("at least two chains are required");
        }
        if self.thin < 1 || self.draws < 1 {
            return bad("thin and draws must be at least 1");
        }
        if matches!(self.step_o, Some(s) if !(s > 0.0)) || matches!(self.step_l, Some(s) if !(s > 0.0)) {
            return bad("step sizes must be positive");
        }
        Ok(())
    }
}

/// Latent counts `o` and final size `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    pub o: Vec<f64>,
    pub l: f64,
}

/// `lo + |v − lo|`: folds `v` back into `[lo, ∞)`.
pub fn reflect(v: f64, lo: f64) -> f64 {
    lo + (v - lo).abs()
}

fn ln_std_normal_upper(z: f64) -> f64 {
    // ln P(Z ≥ z)
    (0.5 * erfc(z / std::f64::consts::SQRT_2)).ln()
}

/// Everything the posterior kernel depends on besides the state.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub start_week: i64,
    pub observed: Vec<f64>,
    /// Target week `t` of the logistic likelihood.
    pub target_week: i64,
    /// Total reported cases `S`.
    pub total: f64,
    /// Prior mean of `L` (the ICC point estimate).
    pub l0_hat: f64,
    pub delta_e: f64,
    pub delta_l: f64,
}

impl Posterior {
    pub fn new(data: &IncidenceSeries, target_week: i64, l0_hat: f64, delta_e: f64, delta_l: f64) -> Result<Self> {
        if target_week <= data.end_week() {
            return Err(Error::InvalidArgument(format!(
                "target week {target_week} must follow the last data week {}",
                data.end_week()
            )));
        }
        Ok(Self {
            start_week: data.start_week(),
            observed: data.new_cases().iter().map(|&x| x as f64).collect(),
            target_week,
            total: data.total() as f64,
            l0_hat,
            delta_e,
            delta_l,
        })
    }

    /// Logistic `(μ, δ)` implied by the latent series and final size.
    pub fn logistic(&self, state: &PosteriorState) -> Result<LogisticFit> {
        let cum: Vec<f64> = state
            .o
            .iter()
            .scan(0.0, |acc, &x| {
                *acc += x;
                Some(*acc)
            })
            .collect();
        fit_logistic_cumulative(self.start_week, &cum, state.l)
    }

    /// Truncated-Gaussian log prior of the latent counts, normalised.
    pub fn ln_prior_latent(&self, o: &[f64]) -> f64 {
        if o.iter().any(|&v| v < 0.0) {
            return f64::NEG_INFINITY;
        }
        let sd = self.delta_e.sqrt();
        o.iter()
            .zip(&self.observed)
            .map(|(&v, &x)| {
                let r = v - x;
                -0.5 * (2.0 * PI * self.delta_e).ln() - r * r / (2.0 * self.delta_e) - ln_std_normal_upper(-x / sd)
            })
            .sum()
    }

    /// Truncated-Gaussian log prior of the final size, normalised.
    pub fn ln_prior_final_size(&self, l: f64) -> f64 {
        if l < self.total {
            return f64::NEG_INFINITY;
        }
        let r = l - self.l0_hat;
        -0.5 * (2.0 * PI * self.delta_l).ln()
            - r * r / (2.0 * self.delta_l)
            - ln_std_normal_upper((self.total - self.l0_hat) / self.delta_l.sqrt())
    }

    /// Log logistic density of the time to infection at the target week.
    pub fn ln_likelihood(&self, fit: &LogisticFit) -> f64 {
        let z = fit.delta * (self.target_week as f64 - fit.mu);
        // ln[δ e^{−z} / (1 + e^{−z})²] = ln δ − |z| − 2·ln(1 + e^{−|z|})
        fit.delta.ln() - z.abs() - 2.0 * (-z.abs()).exp().ln_1p()
    }

    /// Unnormalised log posterior; `−∞` outside the support or when the
    /// latent series does not identify a logistic.
    pub fn ln_density(&self, state: &PosteriorState) -> f64 {
        if state.o.len() != self.observed.len() || state.l < self.total || state.o.iter().any(|&v| v < 0.0) {
            return f64::NEG_INFINITY;
        }
        let fit = match self.logistic(state) {
            Ok(fit) => fit,
            Err(_) => return f64::NEG_INFINITY,
        };
        self.ln_likelihood(&fit) + self.ln_prior_latent(&state.o) + self.ln_prior_final_size(state.l)
    }
}

/// Random-walk Metropolis over `(o, L)` with reflecting boundaries.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    posterior: &'a Posterior,
    step_o: f64,
    step_l: f64,
    state: PosteriorState,
    ln_density: f64,
}

impl<'a> Sampler<'a> {
    pub fn new(posterior: &'a Posterior, state: PosteriorState, step_o: f64, step_l: f64) -> Self {
        let ln_density = posterior.ln_density(&state);
        Self {
            posterior,
            step_o,
            step_l,
            state,
            ln_density,
        }
    }

    pub fn state(&self) -> &PosteriorState {
        &self.state
    }

    pub fn ln_density(&self) -> f64 {
        self.ln_density
    }

    /// One Metropolis step. The reflected Gaussian kernel is symmetric,
    /// so the acceptance ratio is the posterior ratio alone.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let o: Vec<f64> = self
            .state
            .o
            .iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(rng);
                reflect(v + self.step_o * z, 0.0)
            })
            .collect();
        let z: f64 = StandardNormal.sample(rng);
        let l = reflect(self.state.l + self.step_l * z, self.posterior.total);
        let proposal = PosteriorState { o, l };
        let ln_new = self.posterior.ln_density(&proposal);
        let u: f64 = rng.random();
        let accept = ln_new > f64::NEG_INFINITY && (ln_new - self.ln_density >= 0.0 || u.ln() < ln_new - self.ln_density);
        if accept {
            self.state = proposal;
            self.ln_density = ln_new;
        }
        accept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub draws: Vec<PosteriorState>,
    /// Accepted proposals over all iterations, burn-in included.
    pub acceptance_rate: f64,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    pub posterior: Posterior,
    pub config: BayesConfig,
    pub step_o: f64,
    pub step_l: f64,
    pub chains: Vec<Chain>,
}

/// Default proposal scales: `√δe` shrunk by `2.38/√d` in `d = p + 1`
/// dimensions, and `max(1, 0.05·L̂0, 0.1·√δL)` capped at the prior sd of `L`.
pub fn default_steps(config: &BayesConfig, p: usize, l0_hat: f64) -> (f64, f64) {
    let dim = (p + 1) as f64;
    let step_o = config
        .step_o
        .unwrap_or_else(|| config.delta_e.sqrt() * (2.38 / dim.sqrt()).min(1.0));
    let step_l = config
        .step_l
        .unwrap_or_else(|| (0.05 * l0_hat).max(1.0).max(0.1 * config.delta_l.sqrt()).min(config.delta_l.sqrt()));
    (step_o, step_l)
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    rng
}

fn run_chain(posterior: &Posterior, config: &BayesConfig, step_o: f64, step_l: f64, index: usize) -> Result<Chain> {
    let mut rng = chain_rng(config.seed, index);
    let jitter_l = config.delta_l.sqrt() / 10.0;

    // Jitter shrinks after each rejected start, e.g. when the latent total
    // would exceed a tightly constrained L.
    let mut init = None;
    let mut scale = 1.0;
    for _ in 0..1000 {
        let o: Vec<f64> = posterior
            .observed
            .iter()
            .map(|&x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x + scale * z.abs()
            })
            .collect();
        let z: f64 = StandardNormal.sample(&mut rng);
        let l = (posterior.l0_hat + scale * jitter_l * z.abs()).max(posterior.total);
        let state = PosteriorState { o, l };
        if posterior.ln_density(&state).is_finite() {
            init = Some(state);
            break;
        }
        scale *= 0.9;
    }
    let init = init.ok_or(Error::StuckChain { chain: index, rate: 0.0 })?;

    let mut sampler = Sampler::new(posterior, init, step_o, step_l);
    let cap = config.burn_in.saturating_mul(100).max(1000);
    let mut iterations = 0u64;
    let mut accepted = 0u64;
    while accepted < config.burn_in {
        if iterations >= cap {
            let rate = accepted as f64 / iterations as f64;
            if rate < 0.01 {
                return Err(Error::StuckChain { chain: index, rate });
            }
            return Err(Error::IterationCap { chain: index, cap });
        }
        iterations += 1;
        if sampler.step(&mut rng) {
            accepted += 1;
        }
    }

    let mut draws = Vec::with_capacity(config.draws);
    for _ in 0..config.draws {
        for _ in 0..config.thin {
            iterations += 1;
            if sampler.step(&mut rng) {
                accepted += 1;
            }
        }
        draws.push(sampler.state().clone());
    }

    let acceptance_rate = accepted as f64 / iterations.max(1) as f64;
    if acceptance_rate < 0.01 {
        return Err(Error::StuckChain {
            chain: index,
            rate: acceptance_rate,
        });
    }
    Ok(Chain {
        draws,
        acceptance_rate,
        iterations,
    })
}

/// Samples the posterior for the target week with `config.chains`
/// independent chains. The prior mean of `L` is the point-model final size
/// fitted to `data`.
pub fn run_ensemble(data: &IncidenceSeries, target_week: i64, config: &BayesConfig) -> Result<ChainSet> {
    config.validate()?;
    if data.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: data.len(),
        });
    }
    let model = fit_point_model(data, PointModelConfig::default()).map_err(|e| e.at_week(data.end_week()))?;
    run_ensemble_with_prior(data, target_week, model.icc.l0, config)
}

pub fn run_ensemble_with_prior(
    data: &IncidenceSeries,
    target_week: i64,
    l0_hat: f64,
    config: &BayesConfig,
) -> Result<ChainSet> {
    config.validate()?;
    let posterior = Posterior::new(data, target_week, l0_hat, config.delta_e, config.delta_l)?;
    let (step_o, step_l) = default_steps(config, data.len(), l0_hat);
    let chains = (0..config.chains)
        .into_par_iter()
        .map(|i| run_chain(&posterior, config, step_o, step_l, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChainSet {
        posterior,
        config: *config,
        step_o,
        step_l,
        chains,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub chain: usize,
    pub iter: usize,
    pub l: f64,
    pub o: Vec<f64>,
}

impl ChainSet {
    /// Writes one JSON object per retained state.
    pub fn write_trace<W: Write>(&self, mut out: W) -> Result<()> {
        for (chain, c) in self.chains.iter().enumerate() {
            for (iter, s) in c.draws.iter().enumerate() {
                let line = TraceLine {
                    chain,
                    iter,
                    l: s.l,
                    o: s.o.clone(),
                };
                serde_json::to_writer(&mut out, &line)?;
                out.write_all(b"\n").map_err(|source| Error::Io {
                    path: "<trace>".into(),
                    source,
                })?;
            }
        }
        Ok(())
    }

    pub fn latent_series(&self, week_index: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.draws.iter().map(|s| s.o[week_index]).collect())
            .collect()
    }
}

/// Reads a trace written by [`ChainSet::write_trace`], grouped by chain.
pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<Vec<PosteriorState>>> {
    let mut chains: Vec<Vec<PosteriorState>> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: "<trace>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TraceLine = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            row: i + 1,
            message: e.to_string(),
        })?;
        if chains.len() <= t.chain {
            chains.resize_with(t.chain + 1, Vec::new);
        }
        chains[t.chain].push(PosteriorState { o: t.o, l: t.l });
    }
    Ok(chains)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSample {
    pub week: i64,
    /// Predictive values per chain, in draw order.
    pub per_chain: Vec<Vec<f64>>,
    /// States whose latent series did not identify a logistic.
    pub dropped: usize,
    pub mean: f64,
    pub median: f64,
    /// Equal-tailed central 99% range.
    pub q005: f64,
    pub q995: f64,
}

impl PredictiveSample {
    pub fn pooled(&self) -> Vec<f64> {
        self.per_chain.iter().flatten().copied().collect()
    }

    pub fn drop_fraction(&self) -> f64 {
        let kept: usize = self.per_chain.iter().map(Vec::len).sum();
        self.dropped as f64 / (kept + self.dropped).max(1) as f64
    }

    /// Set when more than 5% of states had to be dropped.
    pub fn warning(&self) -> Option<String> {
        (self.drop_fraction() > 0.05).then(|| {
            format!(
                "{} of {} posterior states failed the logistic refit",
                self.dropped,
                self.dropped + self.per_chain.iter().map(Vec::len).sum::<usize>()
            )
        })
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Maps every retained state to `C_t` at `week` and summarises the pool.
pub fn predictive_cumulative(set: &ChainSet, week: i64) -> Result<PredictiveSample> {
    predictive_from_states(&set.posterior, set.chains.iter().map(|c| c.draws.as_slice()), week)
}

pub fn predictive_from_states<'s>(
    posterior: &Posterior,
    chains: impl Iterator<Item = &'s [PosteriorState]>,
    week: i64,
) -> Result<PredictiveSample> {
    let mut dropped = 0;
    let per_chain: Vec<Vec<f64>> = chains
        .map(|draws| {
            draws
                .iter()
                .filter_map(|s| match posterior.logistic(s) {
                    Ok(fit) => Some(predict_cumulative(&fit, week as f64)),
                    Err(_) => {
                        dropped += 1;
                        None
                    }
                })
                .collect()
        })
        .collect();
    let mut pooled: Vec<f64> = per_chain.iter().flatten().copied().collect();
    if pooled.is_empty() {
        return Err(Error::EmptySeries);
    }
    pooled.sort_by(f64::total_cmp);
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    Ok(PredictiveSample {
        week,
        dropped,
        mean,
        median: quantile_sorted(&pooled, 0.5),
        q005: quantile_sorted(&pooled, 0.005),
        q995: quantile_sorted(&pooled, 0.995),
        per_chain,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub week: i64,
    pub mean: f64,
    pub median: f64,
    pub q005: f64,
    pub q995: f64,
    pub ess: f64,
    pub rhat: f64,
    pub geweke: Vec<f64>,
}

impl PosteriorSummary {
    pub fn new(sample: &PredictiveSample, report: &DiagnosticReport) -> Self {
        Self {
            week: sample.week,
            mean: sample.mean,
            median: sample.median,
            q005: sample.q005,
            q995: sample.q995,
            ess: report.ess_pooled,
            rhat: report.rhat,
            geweke: report.geweke_z.clone(),
        }
    }
}

/// Diagnostics for the predictive count and every latent weekly count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDiagnostics {
    pub predictive: DiagnosticReport,
    pub latent: Vec<DiagnosticReport>,
}

impl EnsembleDiagnostics {
    pub fn reports(&self) -> impl Iterator<Item = &DiagnosticReport> {
        std::iter::once(&self.predictive).chain(self.latent.iter())
    }
}

pub fn ensemble_diagnostics(set: &ChainSet, sample: &PredictiveSample) -> Result<EnsembleDiagnostics> {
    let predictive = diagnose(&sample.per_chain)?;
    let latent = (0..set.posterior.observed.len())
        .map(|i| diagnose(&set.latent_series(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleDiagnostics { predictive, latent })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub cases: i64,
    /// Fraction of draws that round to `cases`.
    pub histogram: f64,
    pub kde: f64,
}

/// Silverman's rule-of-thumb bandwidth.
pub fn silverman_bandwidth(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let sd = (sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Integer-resolution histogram plus Gaussian kernel density mass per
/// unit bin `[k − ½, k + ½)`.
pub fn density_table(sample: &[f64]) -> Vec<DensityRow> {
    if sample.is_empty() {
        return Vec::new();
    }
    let h = silverman_bandwidth(sample);
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = (lo - 5.0 * h - 0.5).floor().max(0.0) as i64;
    let last = (hi + 5.0 * h + 0.5).ceil() as i64;
    let n = sample.len() as f64;
    let mut counts = vec![0usize; (last - first + 1) as usize];
    for &x in sample {
        let k = x.round() as i64;
        if (first..=last).contains(&k) {
            counts[(k - first) as usize] += 1;
        }
    }
    (first..=last)
        .zip(counts)
        .map(|(cases, count)| {
            let kde = if h > 0.0 {
                let scale = h * std::f64::consts::SQRT_2;
                let lo = cases as f64 - 0.5;
                let hi = cases as f64 + 0.5;
                sample
                    .iter()
                    .map(|&x| 0.5 * (erf((hi - x) / scale) - erf((lo - x) / scale)))
                    .sum::<f64>()
                    / n
            } else {
                count as f64 / n
            };
            DensityRow {
                cases,
                histogram: count as f64 / n,
                kde,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn outbreak_posterior() -> Posterior {
        let data = fixtures::outbreak_one().through(18).unwrap();
        Posterior::new(&data, 19, 12.0, 0.3, 1e6).unwrap()
    }

    #[test]
    fn reflected_kernel_is_symmetric() {
        // Monte Carlo density of the folded proposal at y from x, and at x from y.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (lo, sd, h, n) = (0.0, 1.0, 0.02, 2_000_000);
        let density = |from: f64, at: f64, rng: &mut ChaCha8Rng| {
            let hits = (0..n)
                .filter(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    (reflect(from + sd * z, lo) - at).abs() < h / 2.0
                })
                .count();
            hits as f64 / (n as f64 * h)
        };
        let (x, y) = (0.2, 1.1);
        let forward = density(x, y, &mut rng);
        let backward = density(y, x, &mut rng);
        assert!((forward / backward - 1.0).abs() < 0.03, "{forward} vs {backward}");
    }

    #[test]
    fn reflection_folds_into_support() {
        for v in [-3.5, 0.0, 2.0, 7.25] {
            for lo in [0.0, 1.0, 5.0] {
                let r = reflect(v, lo);
                assert!(r >= lo);
                assert_eq!(reflect(r, lo), r.max(lo));
            }
        }
        // Reflection pairs: v and 2·lo − v map to the same point.
        assert_eq!(reflect(-1.0, 0.0), reflect(1.0, 0.0));
    }

    #[test]
    fn outside_support_is_minus_infinity() {
        let post = outbreak_posterior();
        let x = post.observed.clone();
        assert_eq!(post.ln_density(&PosteriorState { o: x.clone(), l: 5.0 }), f64::NEG_INFINITY);
        let mut neg = x.clone();
        neg[0] = -0.1;
        assert_eq!(post.ln_density(&PosteriorState { o: neg, l: 12.0 }), f64::NEG_INFINITY);
        assert!(post.ln_density(&PosteriorState { o: x, l: 12.0 }).is_finite());
    }

    #[test]
    fn latent_prior_is_quadratic() {
        let post = outbreak_posterior();
        let x = post.observed.clone();
        let base = post.ln_prior_latent(&x);
        let mut bumped = x.clone();
        bumped[3] += 1.0;
        assert!((base - post.ln_prior_latent(&bumped) - 1.0 / (2.0 * 0.3)).abs() < 1e-12);
    }

    #[test]
    fn failed_refit_is_rejected() {
        let post = outbreak_posterior();
        // Cumulative latent total above L makes the logistic unidentifiable.
        let state = PosteriorState {
            o: vec![0.0, 0.0, 1.0, 0.0, 0.0, 20.0],
            l: 12.0,
        };
        assert_eq!(post.ln_density(&state), f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_impossible_proposals() {
        let post = outbreak_posterior();
        let mut sampler = Sampler::new(
            &post,
            PosteriorState {
                o: post.observed.clone(),
                l: 12.0,
            },
            1e-3,
            1e-3,
        );
        let start = sampler.state().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // A single observed week never identifies a logistic.
        let mut blocked = post.clone();
        blocked.observed.truncate(1);
        let start = PosteriorState {
            o: vec![1.0],
            l: start.l,
        };
        let mut blocked_sampler = Sampler::new(&blocked, start.clone(), 1e-3, 1e-3);
        blocked_sampler.ln_density = 0.0;
        for _ in 0..50 {
            assert!(!blocked_sampler.step(&mut rng));
        }
        assert_eq!(blocked_sampler.state(), &start);

        // Tiny steps are nearly always accepted.
        let accepted = (0..2000).filter(|_| sampler.step(&mut rng)).count();
        assert!(accepted > 1900, "accepted {accepted}");
    }

    #[test]
    fn config_validation() {
        let ok = BayesConfig::default();
        assert!(ok.validate().is_ok());
        assert!(BayesConfig { chains: 1, ..ok }.validate().is_err());
        assert!(BayesConfig { delta_e: 0.0, ..ok }.validate().is_err());
        assert!(BayesConfig { thin: 0, ..ok }.validate().is_err());
        assert!(BayesConfig { step_l: Some(-1.0), ..ok }.validate().is_err());
    }

    #[test]
    fn identical_states_give_degenerate_sample() {
        let post = outbreak_posterior();
        let state = PosteriorState {
            o: post.observed.clone(),
            l: 12.0,
        };
        let chains = [vec![state.clone(); 5], vec![state; 5]];
        let sample = predictive_from_states(&post, chains.iter().map(Vec::as_slice), 19).unwrap();
        let pooled = sample.pooled();
        assert!(pooled.iter().all(|&v| v == pooled[0]));
        assert_eq!(sample.median, pooled[0]);
        assert_eq!(sample.dropped, 0);
        assert!(sample.warning().is_none());
    }

    #[test]
    fn drops_are_counted() {
        let post = outbreak_posterior();
        let good = PosteriorState {
            o: post.observed.clone(),
            l: 12.0,
        };
        let bad = PosteriorState {
            o: vec![0.0; 6],
            l: 12.0,
        };
        let chains = [vec![good.clone(), bad.clone()], vec![good, bad]];
        let sample = predictive_from_states(&post, chains.iter().map(Vec::as_slice), 19).unwrap();
        assert_eq!(sample.dropped, 2);
        assert!(sample.warning().is_some());
    }

    #[test]
    fn trace_round_trip() {
        let config = BayesConfig {
            burn_in: 200,
            draws: 20,
            chains: 2,
            ..BayesConfig::default()
        };
        let data = fixtures::outbreak_one().through(19).unwrap();
        let set = run_ensemble(&data, 20, &config).unwrap();
        let mut buf = Vec::new();
        set.write_trace(&mut buf).unwrap();
        let chains = read_trace(buf.as_slice()).unwrap();
        assert_eq!(chains.len(), 2);
        assert_eq!(chains[0], set.chains[0].draws);
        assert_eq!(chains[1], set.chains[1].draws);
    }

    #[test]
    fn density_table_normalised() {
        let sample: Vec<f64> = (0..500).map(|i| 10.0 + (i % 7) as f64 * 0.5).collect();
        let rows = density_table(&sample);
        let hist: f64 = rows.iter().map(|r| r.histogram).sum();
        let kde: f64 = rows.iter().map(|r| r.kde).sum();
        assert!((hist - 1.0).abs() < 1e-12);
        assert!((kde - 1.0).abs() < 0.02, "kde mass {kde}");
    }
}
