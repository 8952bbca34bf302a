//! Command-line front end: segmentation, point and Bayesian forecasts,
//! evaluation, SEIR simulation and lagged correlation.

mod report;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use icc_core::bayes::{
    density_table, ensemble_diagnostics, predictive_cumulative, run_ensemble, BayesConfig, PosteriorSummary,
};
use icc_core::eval::{
    default_anchors, evaluate_season, lagged_spearman, summarise_by_horizon, BinScheme, HorizonSummary, LagCorrelation,
    PValueMethod, ScoredForecast,
};
use icc_core::predictive::{rolling_forecast, LowerBound, PointModelConfig, MAX_HORIZON};
use icc_core::seir::{icc_shape_check_real, weekly_incidence_real, Scenario, COMPARTMENTS};
use icc_core::timeseries::{parse_weekly_csv, segment_seasons_with_splits, OutbreakSeason, SegmentConfig};
use icc_core::Error;

pub use report::{with_config, Reporter};

use report::f;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Core(_) => EXIT_DATA,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "icc", version, about = "Outbreak forecasting from incidence-vs-cumulative-cases curves")]
pub struct Cli {
    /// Worker threads for parallel MCMC chains (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split a weekly series into outbreak seasons.
    Segment(SegmentArgs),
    /// Rolling 1-4 week point forecasts with censored-Poisson intervals.
    Forecast(ForecastArgs),
    /// Bayesian posterior predictive forecasts by MCMC.
    Bayes(BayesArgs),
    /// Score rolling forecasts against the observed season.
    Evaluate(EvaluateArgs),
    /// Integrate a two-strain SEIR scenario and check the ICC shape.
    Simulate(SimulateArgs),
    /// Lagged Spearman correlation between risk and abundance.
    Correlate(CorrelateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct SeasonArgs {
    /// Weekly CSV with header `week,cases`.
    #[arg(long)]
    input: PathBuf,
    /// Consecutive quiet weeks that end a season.
    #[arg(long, default_value_t = 3)]
    quiet_weeks: usize,
    /// Weekly count at or below which a week is quiet.
    #[arg(long, default_value_t = 0)]
    quiet_level: u64,
    /// Force a new season at the first active week on or after this week.
    #[arg(long = "split-week")]
    split_weeks: Vec<i64>,
    /// 1-based season index; defaults to the season containing the anchor.
    #[arg(long, conflicts_with = "whole_series")]
    season: Option<usize>,
    /// Treat the whole input as one season, leading and trailing quiet weeks included.
    #[arg(long)]
    whole_series: bool,
}

impl SeasonArgs {
    fn segment(&self) -> CliResult<Vec<OutbreakSeason>> {
        let series = parse_weekly_csv(&self.input)?;
        if self.whole_series {
            return Ok(vec![OutbreakSeason {
                first_week: series.start_week(),
                last_week: series.end_week(),
                series,
            }]);
        }
        let cfg = SegmentConfig {
            quiet_weeks: self.quiet_weeks,
            quiet_level: self.quiet_level,
        };
        let seasons = segment_seasons_with_splits(&series, cfg, &self.split_weeks);
        info!("{} season(s) in {}", seasons.len(), self.input.display());
        Ok(seasons)
    }

    fn pick(&self, anchor: Option<i64>) -> CliResult<(usize, OutbreakSeason)> {
        let seasons = self.segment()?;
        if seasons.is_empty() {
            return Err(Error::EmptySeries.into());
        }
        let index = match (self.season, anchor) {
            (Some(k), _) => {
                if k == 0 || k > seasons.len() {
                    return Err(CliError::Usage(format!(
                        "--season {k} out of range: {} season(s) found",
                        seasons.len()
                    )));
                }
                k - 1
            }
            (None, Some(t0)) => seasons
                .iter()
                .position(|s| (s.first_week..=s.last_week).contains(&t0))
                .ok_or_else(|| CliError::Usage(format!("anchor week {t0} is not inside any season")))?,
            (None, None) if seasons.len() == 1 => 0,
            (None, None) => {
                return Err(CliError::Usage(format!(
                    "{} seasons found; choose one with --season",
                    seasons.len()
                )))
            }
        };
        Ok((index + 1, seasons.into_iter().nth(index).expect("index checked")))
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum LowerBoundArg {
    Live,
    Retrospective,
}

impl From<LowerBoundArg> for LowerBound {
    fn from(v: LowerBoundArg) -> Self {
        match v {
            LowerBoundArg::Live => LowerBound::Live,
            LowerBoundArg::Retrospective => LowerBound::Retrospective,
        }
    }
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[command(flatten)]
    season: SeasonArgs,
    /// Also write `seasons.json` into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[command(flatten)]
    season: SeasonArgs,
    /// Last week of data used for the fit.
    #[arg(long)]
    anchor: i64,
    #[arg(long, default_value_t = 4)]
    horizons: u32,
    #[arg(long, value_enum, default_value_t = LowerBoundArg::Live)]
    lower_bound: LowerBoundArg,
    /// Keep zero-incidence weeks in the parabola fit.
    #[arg(long)]
    keep_zero_weeks: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BayesArgs {
    #[command(flatten)]
    season: SeasonArgs,
    #[arg(long)]
    anchor: i64,
    /// One posterior per target week anchor+1 ..= anchor+horizons.
    #[arg(long, default_value_t = 1)]
    horizons: u32,
    #[arg(long, default_value_t = 0.3)]
    delta_e: f64,
    #[arg(long, default_value_t = 1e6)]
    delta_l: f64,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    #[arg(long, default_value_t = 10_000)]
    burn_in: u64,
    #[arg(long, default_value_t = 5)]
    thin: u64,
    /// Retained draws per chain.
    #[arg(long, default_value_t = 20_000)]
    draws: usize,
    #[arg(long)]
    step_o: Option<f64>,
    #[arg(long)]
    step_l: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Weekly CSV with header `week,cases`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 3)]
    quiet_weeks: usize,
    #[arg(long, default_value_t = 0)]
    quiet_level: u64,
    #[arg(long = "split-week")]
    split_weeks: Vec<i64>,
    /// 1-based season index; all seasons when omitted.
    #[arg(long, conflicts_with = "whole_series")]
    season: Option<usize>,
    /// Treat the whole input as one season, leading and trailing quiet weeks included.
    #[arg(long)]
    whole_series: bool,
    #[arg(long, default_value_t = 4)]
    horizons: u32,
    #[arg(long, value_enum, default_value_t = LowerBoundArg::Retrospective)]
    lower_bound: LowerBoundArg,
    /// Log-score bins: `WIDTH` or `WIDTH:OPEN_FROM`.
    #[arg(long, default_value = "1")]
    bins: String,
    /// Absolute errors at or above this value share one AVE bucket.
    #[arg(long)]
    ave_tail: Option<u64>,
    #[arg(long)]
    keep_zero_weeks: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario file of `key = value` lines; the built-in benchmark if omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PValueArg {
    T,
    Permutation,
}

#[derive(Debug, Args)]
struct CorrelateArgs {
    /// CSV with header `week,risk,abundance`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 10)]
    max_lag: usize,
    #[arg(long, value_enum, default_value_t = PValueArg::T)]
    p_value: PValueArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_bins(text: &str) -> CliResult<BinScheme> {
    let bad = || CliError::Usage(format!("invalid --bins '{text}': expected WIDTH or WIDTH:OPEN_FROM"));
    let (width, open) = match text.split_once(':') {
        Some((w, o)) => (w, Some(o)),
        None => (text, None),
    };
    let width: u64 = width.trim().parse().map_err(|_| bad())?;
    if width == 0 {
        return Err(bad());
    }
    let open_from = open.map(|o| o.trim().parse::<u64>()).transpose().map_err(|_| bad())?;
    Ok(BinScheme { width, open_from })
}

fn season_json(index: usize, season: &OutbreakSeason) -> serde_json::Value {
    json!({
        "index": index,
        "first_week": season.first_week,
        "last_week": season.last_week,
    })
}

fn segment(args: &SegmentArgs) -> CliResult<()> {
    let seasons: Vec<_> = args.season.segment()?.iter().map(OutbreakSeason::summary).collect();
    let text = serde_json::to_string_pretty(&seasons).map_err(Error::from)?;
    println!("{text}");
    if let Some(dir) = &args.out {
        let config = json!({ "command": "segment", "season": &args.season });
        let mut rep = Reporter::new(dir, config)?;
        rep.json("seasons.json", &json!({ "seasons": seasons }))?;
    }
    Ok(())
}

fn check_horizons(h: u32) -> CliResult<()> {
    if h == 0 || h > MAX_HORIZON {
        return Err(CliError::Usage(format!("--horizons must be in 1..={MAX_HORIZON}, got {h}")));
    }
    Ok(())
}

fn point_config(keep_zero_weeks: bool) -> PointModelConfig {
    PointModelConfig {
        skip_zero_weeks: !keep_zero_weeks,
    }
}

fn forecast(args: &ForecastArgs) -> CliResult<()> {
    check_horizons(args.horizons)?;
    let (index, season) = args.season.pick(Some(args.anchor))?;
    let model_cfg = point_config(args.keep_zero_weeks);
    let set = rolling_forecast(&season.series, args.anchor, args.horizons, args.lower_bound.into(), model_cfg)?;

    let config = json!({
        "command": "forecast",
        "input": &args.season.input,
        "quiet_weeks": args.season.quiet_weeks,
        "quiet_level": args.season.quiet_level,
        "split_weeks": &args.season.split_weeks,
        "whole_series": args.season.whole_series,
        "season": season_json(index, &season),
        "anchor": args.anchor,
        "horizons": args.horizons,
        "lower_bound": args.lower_bound,
        "point_model": model_cfg,
    });
    let mut rep = Reporter::new(&args.out, config)?;
    rep.json("forecasts.json", &set.record()?)?;
    rep.csv(
        "pmf_grid.csv",
        "week,cases,probability",
        set.pmf_grid().into_iter().map(|(w, n, p)| format!("{w},{n},{}", f(p))),
    )?;
    log_written(&rep);
    Ok(())
}

#[derive(Serialize)]
struct TargetReport {
    summary: PosteriorSummary,
    dropped: usize,
    acceptance_rates: Vec<f64>,
    warning: Option<String>,
}

fn bayes(args: &BayesArgs) -> CliResult<()> {
    check_horizons(args.horizons)?;
    let (index, season) = args.season.pick(Some(args.anchor))?;
    let history = season.series.through(args.anchor)?;
    let cfg = BayesConfig {
        delta_e: args.delta_e,
        delta_l: args.delta_l,
        chains: args.chains,
        burn_in: args.burn_in,
        thin: args.thin,
        draws: args.draws,
        step_o: args.step_o,
        step_l: args.step_l,
        seed: args.seed,
    };
    cfg.validate()?;

    let config = json!({
        "command": "bayes",
        "input": &args.season.input,
        "quiet_weeks": args.season.quiet_weeks,
        "quiet_level": args.season.quiet_level,
        "split_weeks": &args.season.split_weeks,
        "whole_series": args.season.whole_series,
        "season": season_json(index, &season),
        "anchor": args.anchor,
        "horizons": args.horizons,
        "bayes": cfg,
    });
    let mut rep = Reporter::new(&args.out, config)?;
    let mut targets = Vec::new();
    let mut diagnostics = Vec::new();
    for h in 1..=i64::from(args.horizons) {
        let week = args.anchor + h;
        info!("sampling posterior for week {week}");
        let set = run_ensemble(&history, week, &cfg)?;
        let mut trace = Vec::new();
        set.write_trace(&mut trace)?;
        rep.raw(&format!("trace_week{week}.jsonl"), &trace)?;

        let sample = predictive_cumulative(&set, week)?;
        if let Some(w) = sample.warning() {
            warn!("week {week}: {w}");
        }
        let diag = ensemble_diagnostics(&set, &sample)?;
        rep.csv(
            &format!("posterior_week{week}.csv"),
            "cases,histogram,kde",
            density_table(&sample.pooled())
                .into_iter()
                .map(|r| format!("{},{},{}", r.cases, f(r.histogram), f(r.kde))),
        )?;
        targets.push(TargetReport {
            summary: PosteriorSummary::new(&sample, &diag.predictive),
            dropped: sample.dropped,
            acceptance_rates: set.chains.iter().map(|c| c.acceptance_rate).collect(),
            warning: sample.warning(),
        });
        diagnostics.push(json!({
            "week": week,
            "step_o": set.step_o,
            "step_l": set.step_l,
            "predictive": diag.predictive,
            "latent": diag.latent,
        }));
    }
    rep.json("bayes_summary.json", &json!({ "targets": targets }))?;
    rep.json("diagnostics.json", &json!({ "targets": diagnostics }))?;
    log_written(&rep);
    Ok(())
}

#[derive(Serialize)]
struct EvaluationSummary {
    seasons: Vec<serde_json::Value>,
    #[serde(flatten)]
    headline: serde_json::Map<String, serde_json::Value>,
    horizons: Vec<HorizonSummary>,
}

fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    check_horizons(args.horizons)?;
    let bins = parse_bins(&args.bins)?;
    let season_args = SeasonArgs {
        input: args.input.clone(),
        quiet_weeks: args.quiet_weeks,
        quiet_level: args.quiet_level,
        split_weeks: args.split_weeks.clone(),
        season: args.season,
        whole_series: args.whole_series,
    };
    let chosen: Vec<(usize, OutbreakSeason)> = match args.season {
        Some(_) => vec![season_args.pick(None)?],
        None => season_args.segment()?.into_iter().enumerate().map(|(i, s)| (i + 1, s)).collect(),
    };
    let model_cfg = point_config(args.keep_zero_weeks);

    let mut scored: Vec<ScoredForecast> = Vec::new();
    let mut seasons = Vec::new();
    for (index, season) in &chosen {
        let anchors = default_anchors(&season.series);
        if anchors.is_empty() {
            warn!("season {index} is too short to evaluate");
            continue;
        }
        let (_, rows) = evaluate_season(
            &season.series,
            anchors,
            args.horizons,
            args.lower_bound.into(),
            model_cfg,
            bins,
        )?;
        scored.extend(rows);
        seasons.push(season_json(*index, season));
    }
    if scored.is_empty() {
        return Err(Error::EmptySeries.into());
    }
    let horizons = summarise_by_horizon(&scored, args.ave_tail)?;
    let mut headline = serde_json::Map::new();
    for h in &horizons {
        headline.insert(format!("rmse_{}wk", h.horizon), json!(h.rmse));
        headline.insert(format!("mean_log_score_{}wk", h.horizon), json!(h.mean_log_score));
    }

    let config = json!({
        "command": "evaluate",
        "input": &args.input,
        "quiet_weeks": args.quiet_weeks,
        "quiet_level": args.quiet_level,
        "split_weeks": &args.split_weeks,
        "season": args.season,
        "whole_series": args.whole_series,
        "horizons": args.horizons,
        "lower_bound": args.lower_bound,
        "bins": bins,
        "ave_tail": args.ave_tail,
        "point_model": model_cfg,
    });
    let mut rep = Reporter::new(&args.out, config)?;
    rep.csv(
        "forecast_scores.csv",
        "week,horizon,point,observed,abs_error,log_score",
        scored.iter().map(|s| {
            format!(
                "{},{},{},{},{},{}",
                s.week,
                s.horizon,
                s.point,
                s.observed,
                s.abs_error,
                f(s.log_score)
            )
        }),
    )?;
    rep.csv(
        "ave_distribution.csv",
        "horizon,error,tail,pmf,cdf",
        horizons.iter().flat_map(|h| {
            h.ave.buckets.iter().map(move |b| {
                format!("{},{},{},{},{}", h.horizon, b.error, b.tail, f(b.pmf), f(b.cdf))
            })
        }),
    )?;
    rep.json(
        "evaluation_summary.json",
        &EvaluationSummary {
            seasons,
            headline,
            horizons,
        },
    )?;
    log_written(&rep);
    Ok(())
}

fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let scenario = match &args.input {
        Some(path) => Scenario::load(path)?,
        None => Scenario::benchmark(),
    };
    let trajectory = scenario.run()?;
    if trajectory.clamp_events > 0 {
        warn!("{} integration steps clamped negative compartments", trajectory.clamp_events);
    }
    let weekly = weekly_incidence_real(&trajectory, scenario.population);

    let config = json!({
        "command": "simulate",
        "input": &args.input,
        "scenario": scenario,
    });
    let mut rep = Reporter::new(&args.out, config)?;
    let header = format!("week,{},new_cases", COMPARTMENTS.join(","));
    rep.csv(
        "trajectory.csv",
        &header,
        trajectory.states.iter().enumerate().map(|(week, state)| {
            let cells: Vec<String> = state.to_array().iter().map(|&x| f(x)).collect();
            let new_cases = if week == 0 { 0.0 } else { weekly[week - 1] };
            format!("{week},{},{}", cells.join(","), f(new_cases))
        }),
    )?;
    let shape = match icc_shape_check_real(1, &weekly) {
        Ok(check) => json!({ "completed": true, "check": check }),
        Err(e) => {
            warn!("ICC shape check skipped: {e}");
            json!({ "completed": false, "reason": e.to_string() })
        }
    };
    rep.json(
        "shape_check.json",
        &json!({ "clamp_events": trajectory.clamp_events, "shape": shape }),
    )?;
    log_written(&rep);
    Ok(())
}

#[derive(Debug, serde::Deserialize)]
struct RiskRow {
    week: i64,
    risk: f64,
    abundance: f64,
}

fn read_risk_csv(path: &Path) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut previous: Option<i64> = None;
    let (mut risk, mut abundance) = (Vec::new(), Vec::new());
    for (i, row) in reader.deserialize::<RiskRow>().enumerate() {
        let row = row.map_err(|e| Error::MalformedRow {
            row: i + 2,
            message: e.to_string(),
        })?;
        if let Some(p) = previous {
            if row.week != p + 1 {
                return Err(Error::MalformedRow {
                    row: i + 2,
                    message: format!("weeks must be consecutive: {p} then {}", row.week),
                }
                .into());
            }
        }
        previous = Some(row.week);
        risk.push(row.risk);
        abundance.push(row.abundance);
    }
    if risk.is_empty() {
        return Err(Error::EmptySeries.into());
    }
    Ok((risk, abundance))
}

fn correlate(args: &CorrelateArgs) -> CliResult<()> {
    let (risk, abundance) = read_risk_csv(&args.input)?;
    let method = match args.p_value {
        PValueArg::T => PValueMethod::TApprox,
        PValueArg::Permutation => PValueMethod::Permutation,
    };
    let table: Vec<LagCorrelation> = lagged_spearman(&risk, &abundance, args.max_lag, method)?;
    let opt = |x: Option<f64>| x.map(f).unwrap_or_else(|| "NA".into());
    let rows: Vec<String> = table
        .iter()
        .map(|r| format!("{},{},{},{}", r.lag, r.n, opt(r.rho), opt(r.p_value)))
        .collect();
    println!("lag,n,rho,p_value");
    for row in &rows {
        println!("{row}");
    }
    if let Some(dir) = &args.out {
        let config = json!({
            "command": "correlate",
            "input": &args.input,
            "max_lag": args.max_lag,
            "p_value": args.p_value,
        });
        let mut rep = Reporter::new(dir, config)?;
        rep.csv("lagged_spearman.csv", "lag,n,rho,p_value", rows)?;
        log_written(&rep);
    }
    Ok(())
}

fn log_written(rep: &Reporter) {
    for path in rep.written() {
        info!("wrote {}", path.display());
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Segment(a) => segment(a),
        Command::Forecast(a) => forecast(a),
        Command::Bayes(a) => bayes(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Simulate(a) => simulate(a),
        Command::Correlate(a) => correlate(a),
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("ICC_LOG", "warn");
    // A second call (e.g. from tests) keeps the first logger.
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(CliError::Usage(format!("cannot start {n} worker threads: {e}"))),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
