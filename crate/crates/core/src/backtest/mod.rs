//! Daily-rebalanced backtests: the minimum-distance strategy and its four
//! benchmarks, with leverage capping and proportional transaction costs.
//!
//! Accounting conventions: portfolio arithmetic applies target weights to
//! daily ln returns (`w' r`), costs are charged against the same day's
//! return, and wealth compounds as `wealth *= exp(net)`. Turnover compares
//! today's target weights to yesterday's target weights; the first trading
//! day pays the full establishment cost from a zero position.

pub mod metrics;

pub use metrics::{alpha_regression, compute_metrics, AlphaReport, MetricsReport};

use crate::data::{IngestError, ReturnPanel, ReturnSeries, RiskFreeSeries};
use crate::forecast::{
    build_dataset, fit_observable, predict, update_online, ForecastDataset, ForecastError,
    ForecastRecord, VarxMask, VarxModel,
};
use crate::frontier::{
    efficient_weights, interpretable_from_merton, merton_coefficients, rolling_coefficients,
    tangency_from_coefficients, tangency_numeric, FrontierError, FrontierPoint, RollingMoments,
    WeightVector,
};
use crate::mindist::{solve_min_distance, ProjectionError, ProjectionResult};
use chrono::NaiveDate;
use nalgebra::DVector;
use thiserror::Error;

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("weights must sum to 1 before leverage scaling (sum = {0})")]
    UnnormalizedWeights(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("data gap: {0}")]
    DataGap(String),
    #[error("missing index data: {0}")]
    MissingIndexData(String),
    #[error("need at least {required} observations, got {actual}")]
    TooFewObservations { required: usize, actual: usize },
    #[error("return variance is zero; Sharpe ratio undefined")]
    ZeroVariance,
    #[error("benchmark excess-return variance is zero; regression undefined")]
    ZeroBenchmarkVariance,
    #[error(transparent)]
    Frontier(#[from] FrontierError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Strategy and benchmark parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    /// Rolling window for the invested frontier and the forecast targets.
    pub lookback_len: usize,
    /// Forecast horizon in business days.
    pub forecast_horizon: usize,
    /// Rolling window for the forecaster's predictors.
    pub feature_window: usize,
    /// Gross-exposure cap `l`.
    pub max_leverage: f64,
    /// Proportional cost per unit of turnover.
    pub cost_rate: f64,
    /// Multiplier applied to net returns after costs (2.0 reproduces a
    /// twice-levered variant for reporting).
    pub post_hoc_leverage_multiplier: f64,
    /// Last in-sample date; trading starts strictly after it.
    pub in_sample_end: NaiveDate,
    /// Optional universe restriction (panel column subset, in this order).
    pub universe: Option<Vec<String>>,
    /// Rebalance cadence in business days (1 = daily).
    pub rebalance_every: usize,
}

impl StrategyConfig {
    pub fn new(in_sample_end: NaiveDate) -> Self {
        Self {
            lookback_len: 21,
            forecast_horizon: 21,
            feature_window: 252,
            max_leverage: 1.5,
            cost_rate: 0.01,
            post_hoc_leverage_multiplier: 1.0,
            in_sample_end,
            universe: None,
            rebalance_every: 1,
        }
    }

    pub fn validate(&self) -> Result<(), BacktestError> {
        if self.lookback_len < 2 || self.feature_window < 2 {
            return Err(BacktestError::InvalidConfig(
                "window lengths must be at least 2".to_string(),
            ));
        }
        if self.forecast_horizon == 0 {
            return Err(BacktestError::InvalidConfig(
                "forecast horizon must be at least 1".to_string(),
            ));
        }
        if !(self.max_leverage >= 1.0) {
            return Err(BacktestError::InvalidConfig(format!(
                "max leverage must be at least 1, got {}",
                self.max_leverage
            )));
        }
        if !(self.cost_rate >= 0.0) {
            return Err(BacktestError::InvalidConfig(format!(
                "cost rate must be non-negative, got {}",
                self.cost_rate
            )));
        }
        if !(self.post_hoc_leverage_multiplier > 0.0) {
            return Err(BacktestError::InvalidConfig(
                "post-hoc leverage multiplier must be positive".to_string(),
            ));
        }
        if self.rebalance_every == 0 {
            return Err(BacktestError::InvalidConfig(
                "rebalance cadence must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Caps gross exposure at `l` by scaling shorts to sum to `-(l-1)/2` and
/// longs to `(l-1)/2 + 1`, preserving signs and the unit budget.
pub fn scale_leverage(w: &WeightVector, max_leverage: f64) -> Result<WeightVector, BacktestError> {
    if !(max_leverage >= 1.0) {
        return Err(BacktestError::InvalidConfig(format!(
            "max leverage must be at least 1, got {max_leverage}"
        )));
    }
    let sum = w.sum();
    if (sum - 1.0).abs() > 1e-8 {
        return Err(BacktestError::UnnormalizedWeights(sum));
    }
    let gross = w.gross_exposure();
    if gross <= max_leverage {
        return Ok(w.clone());
    }
    let short_gross: f64 = w.0.iter().filter(|x| **x < 0.0).map(|x| x.abs()).sum();
    let long_sum: f64 = w.0.iter().filter(|x| **x > 0.0).sum();
    debug_assert!(short_gross > 0.0, "gross > l >= 1 requires short positions");
    let short_scale = ((max_leverage - 1.0) / 2.0) / short_gross;
    let long_scale = ((max_leverage - 1.0) / 2.0 + 1.0) / long_sum;
    let scaled = w.0.map(|x| {
        if x < 0.0 {
            x * short_scale
        } else if x > 0.0 {
            x * long_scale
        } else {
            0.0
        }
    });
    Ok(WeightVector(scaled))
}

/// Proportional cost of moving from `w_prev` to `w_new`.
pub fn transaction_cost(w_prev: &WeightVector, w_new: &WeightVector, rate: f64) -> f64 {
    assert_eq!(
        w_prev.len(),
        w_new.len(),
        "weight vectors must have equal lengths"
    );
    let turnover: f64 = w_prev
        .0
        .iter()
        .zip(w_new.0.iter())
        .map(|(a, b)| (b - a).abs())
        .sum();
    rate * turnover
}

/// Why a trading day fell back to holding the previous position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    DegenerateFrontier,
    NoTangency,
    ProjectionFailed,
    MissingFeatures,
    WeightsFailed,
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let code = match self {
            SkipReason::DegenerateFrontier => "degenerate_frontier",
            SkipReason::NoTangency => "no_tangency",
            SkipReason::ProjectionFailed => "projection_failed",
            SkipReason::MissingFeatures => "missing_features",
            SkipReason::WeightsFailed => "weights_failed",
        };
        write!(f, "{code}")
    }
}

/// One strategy or benchmark run: daily target weights, returns, costs, and
/// the wealth curve (which starts at 1.0 before the first row).
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub name: String,
    pub symbols: Vec<String>,
    /// Realization dates: row `k` holds the return earned on `dates[k]` by
    /// the weights decided the previous business day.
    pub dates: Vec<NaiveDate>,
    pub weights: Vec<DVector<f64>>,
    pub gross: Vec<f64>,
    pub cost: Vec<f64>,
    pub net: Vec<f64>,
    pub wealth: Vec<f64>,
    pub turnover: Vec<f64>,
    pub flags: Vec<Option<SkipReason>>,
}

impl BacktestResult {
    #[allow(clippy::too_many_arguments)]
    fn from_parts(
        name: String,
        symbols: Vec<String>,
        dates: Vec<NaiveDate>,
        weights: Vec<DVector<f64>>,
        gross: Vec<f64>,
        cost: Vec<f64>,
        net: Vec<f64>,
        turnover: Vec<f64>,
        flags: Vec<Option<SkipReason>>,
    ) -> Self {
        let mut wealth = Vec::with_capacity(net.len());
        let mut level = 1.0f64;
        for r in &net {
            level *= r.exp();
            wealth.push(level);
        }
        Self {
            name,
            symbols,
            dates,
            weights,
            gross,
            cost,
            net,
            wealth,
            turnover,
            flags,
        }
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn wealth_end(&self) -> f64 {
        self.wealth.last().copied().unwrap_or(1.0)
    }
}

/// Restricts the panel to the configured universe, if any.
fn apply_universe(
    config: &StrategyConfig,
    panel: &ReturnPanel,
) -> Result<ReturnPanel, BacktestError> {
    match &config.universe {
        None => Ok(panel.clone()),
        Some(symbols) => {
            let mut cols = Vec::with_capacity(symbols.len());
            for sym in symbols {
                let series = panel.column_series(sym)?;
                cols.push(series);
            }
            let dates = panel.dates().to_vec();
            let mut m = nalgebra::DMatrix::zeros(dates.len(), cols.len());
            for (j, series) in cols.iter().enumerate() {
                for (i, v) in series.values.iter().enumerate() {
                    m[(i, j)] = *v;
                }
            }
            Ok(ReturnPanel::new(dates, symbols.clone(), m)?)
        }
    }
}

/// Intersects the panel's dates with the risk-free series.
fn align_inputs(
    panel: &ReturnPanel,
    rf: &RiskFreeSeries,
) -> Result<(ReturnPanel, RiskFreeSeries), BacktestError> {
    let common: Vec<NaiveDate> = panel
        .dates()
        .iter()
        .copied()
        .filter(|d| rf.rate_on(*d).is_some())
        .collect();
    if common.len() < 2 {
        return Err(BacktestError::InsufficientData(
            "panel and risk-free series share fewer than 2 dates".to_string(),
        ));
    }
    let panel = panel.restrict_to(&common)?;
    let rf = rf.restrict_to(&common)?;
    Ok((panel, rf))
}

/// Decision-day index range shared by the strategy and all benchmarks:
/// `start..=last`, where each decision at `t` realizes the return of `t+1`.
fn decision_range(
    config: &StrategyConfig,
    dates: &[NaiveDate],
) -> Result<(usize, usize), BacktestError> {
    let warmup = config.lookback_len.max(config.feature_window) - 1;
    let after_in_sample = dates.partition_point(|d| *d <= config.in_sample_end);
    let start = warmup.max(after_in_sample);
    if start + 1 >= dates.len() {
        return Err(BacktestError::InsufficientData(format!(
            "no out-of-sample days: warmup needs index {warmup}, in-sample ends at index {after_in_sample}, panel has {} rows",
            dates.len()
        )));
    }
    Ok((start, dates.len() - 2))
}

/// Builds the forecast dataset for the configured windows and fits the
/// model through the in-sample end date.
pub fn prepare_forecaster(
    config: &StrategyConfig,
    panel: &ReturnPanel,
    rf: &RiskFreeSeries,
) -> Result<(ForecastDataset, VarxModel), BacktestError> {
    config.validate()?;
    let panel = apply_universe(config, panel)?;
    let (panel, _) = align_inputs(&panel, rf)?;
    let feature_series = rolling_coefficients(&panel, config.feature_window)?;
    let target_series = rolling_coefficients(&panel, config.lookback_len)?;
    let dataset = build_dataset(
        &feature_series,
        &target_series,
        &panel,
        config.forecast_horizon,
    )?;
    let model = fit_observable(&dataset, &VarxMask::standard(), config.in_sample_end)?;
    Ok((dataset, model))
}

/// One per-day projection diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionLogRow {
    pub date: NaiveDate,
    pub forecast: FrontierPoint,
    pub result: ProjectionResult,
}

/// Strategy output: the backtest plus the forecast and projection logs and
/// the final model state.
#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub result: BacktestResult,
    pub forecasts: Vec<ForecastRecord>,
    pub projections: Vec<ProjectionLogRow>,
    pub model: VarxModel,
}

/// Runs the minimum-distance strategy out-of-sample. Per decision day:
/// estimate the lookback-window frontier, update the forecaster with newly
/// observable targets, forecast the coefficients one horizon ahead, place
/// the forecasted tangency point, project it onto the current frontier,
/// extract weights at the projected return, and cap leverage. Days whose
/// frontier, tangency, or projection degenerates hold the previous weights
/// and are flagged.
pub fn run_strategy(
    config: &StrategyConfig,
    panel: &ReturnPanel,
    rf: &RiskFreeSeries,
    dataset: &ForecastDataset,
    mut model: VarxModel,
) -> Result<StrategyRun, BacktestError> {
    config.validate()?;
    let panel = apply_universe(config, panel)?;
    let (panel, rf) = align_inputs(&panel, rf)?;
    let engine = RollingMoments::new(&panel, config.lookback_len)?;
    let dates = panel.dates();
    let (start, last) = decision_range(config, dates)?;
    let n = panel.n_assets();

    let mut result_dates = Vec::with_capacity(last - start + 1);
    let mut weights = Vec::with_capacity(last - start + 1);
    let mut gross = Vec::new();
    let mut cost = Vec::new();
    let mut net = Vec::new();
    let mut turnover = Vec::new();
    let mut flags = Vec::new();
    let mut forecasts = Vec::new();
    let mut projections = Vec::new();

    let mut w_prev = DVector::zeros(n);
    for t in start..=last {
        let date = dates[t];
        let rf_t = rf
            .rate_on(date)
            .expect("aligned risk-free rate must exist");
        model = update_online(model, dataset, date)?;

        let mut flag = None;
        let w = if (t - start) % config.rebalance_every == 0 {
            match decide_day(config, &engine, dataset, &model, t, date, rf_t) {
                Ok((w, forecast, projection)) => {
                    forecasts.push(forecast);
                    projections.push(projection);
                    w
                }
                Err(reason) => {
                    flag = Some(reason);
                    WeightVector(w_prev.clone())
                }
            }
        } else {
            WeightVector(w_prev.clone())
        };

        let day_turnover: f64 = w
            .0
            .iter()
            .zip(w_prev.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        let day_cost = config.cost_rate * day_turnover;
        let realized = w.0.dot(&panel.returns().row(t + 1).transpose());
        let day_net = config.post_hoc_leverage_multiplier * (realized - day_cost);

        result_dates.push(dates[t + 1]);
        weights.push(w.0.clone());
        gross.push(realized);
        cost.push(day_cost);
        net.push(day_net);
        turnover.push(day_turnover);
        flags.push(flag);
        w_prev = w.0;
    }

    let result = BacktestResult::from_parts(
        "min_distance".to_string(),
        panel.symbols().to_vec(),
        result_dates,
        weights,
        gross,
        cost,
        net,
        turnover,
        flags,
    );
    Ok(StrategyRun {
        result,
        forecasts,
        projections,
        model,
    })
}

#[allow(clippy::too_many_arguments)]
fn decide_day(
    config: &StrategyConfig,
    engine: &RollingMoments,
    dataset: &ForecastDataset,
    model: &VarxModel,
    t: usize,
    date: NaiveDate,
    rf_t: f64,
) -> Result<(WeightVector, ForecastRecord, ProjectionLogRow), SkipReason> {
    let moments = engine.moments_at(t).map_err(|e| {
        log::debug!("{date}: moment estimation failed: {e}");
        SkipReason::DegenerateFrontier
    })?;
    let current = merton_coefficients(&moments)
        .and_then(|mc| interpretable_from_merton(&mc))
        .map_err(|e| {
            log::debug!("{date}: degenerate frontier: {e}");
            SkipReason::DegenerateFrontier
        })?;
    let row = dataset.row_on(date).ok_or_else(|| {
        log::debug!("{date}: no feature row");
        SkipReason::MissingFeatures
    })?;
    let forecast = predict(model, &row.features, date).map_err(|e| {
        log::debug!("{date}: prediction failed: {e}");
        SkipReason::MissingFeatures
    })?;
    let forecast_tp = tangency_from_coefficients(&forecast.coefficients, rf_t).map_err(|e| {
        log::debug!("{date}: no tangency for forecast: {e}");
        SkipReason::NoTangency
    })?;
    let projection = solve_min_distance(&current, &forecast_tp).map_err(|e| {
        log::debug!("{date}: projection failed: {e}");
        SkipReason::ProjectionFailed
    })?;
    let raw = efficient_weights(&moments, projection.point.ret).map_err(|e| {
        log::debug!("{date}: weight extraction failed: {e}");
        SkipReason::WeightsFailed
    })?;
    let capped = scale_leverage(&raw, config.max_leverage).map_err(|e| {
        log::debug!("{date}: leverage scaling failed: {e}");
        SkipReason::WeightsFailed
    })?;
    Ok((
        capped,
        forecast,
        ProjectionLogRow {
            date,
            forecast: forecast_tp,
            result: projection,
        },
    ))
}

/// The four benchmark runs over the same out-of-sample days as the
/// strategy.
#[derive(Debug, Clone)]
pub struct BenchmarkResults {
    pub tangency: BacktestResult,
    pub equal_weight: BacktestResult,
    pub index: BacktestResult,
    pub sixty_forty: BacktestResult,
}

impl BenchmarkResults {
    pub fn iter(&self) -> [(&'static str, &BacktestResult); 4] {
        [
            ("tangency", &self.tangency),
            ("equal_weight", &self.equal_weight),
            ("index", &self.index),
            ("sixty_forty", &self.sixty_forty),
        ]
    }
}

/// Runs the four benchmarks: the rolling-window tangency portfolio
/// (leverage-capped, with costs), the daily equal-weighted portfolio, the
/// index total-return pass-through, and a daily-rebalanced 60/40 blend of
/// the index and a bond series.
pub fn run_benchmarks(
    config: &StrategyConfig,
    panel: &ReturnPanel,
    rf: &RiskFreeSeries,
    index: &ReturnSeries,
    bond: &ReturnSeries,
) -> Result<BenchmarkResults, BacktestError> {
    config.validate()?;
    let panel = apply_universe(config, panel)?;
    let (panel, rf) = align_inputs(&panel, rf)?;
    let engine = RollingMoments::new(&panel, config.lookback_len)?;
    let dates = panel.dates();
    let (start, last) = decision_range(config, dates)?;
    let n = panel.n_assets();
    let realization_dates: Vec<NaiveDate> = (start..=last).map(|t| dates[t + 1]).collect();

    // --- tangency with rolling window, leverage cap, and costs
    let tangency = {
        let mut weights = Vec::new();
        let mut gross = Vec::new();
        let mut cost = Vec::new();
        let mut net = Vec::new();
        let mut turnover = Vec::new();
        let mut flags = Vec::new();
        let mut w_prev = DVector::zeros(n);
        for t in start..=last {
            let date = dates[t];
            let rf_t = rf.rate_on(date).expect("aligned rf");
            let mut flag = None;
            let w = if (t - start) % config.rebalance_every == 0 {
                match engine
                    .moments_at(t)
                    .and_then(|m| tangency_numeric(&m, rf_t).map(|(_, w)| w))
                    .map_err(BacktestError::from)
                    .and_then(|w| scale_leverage(&w, config.max_leverage))
                {
                    Ok(w) => w,
                    Err(e) => {
                        log::debug!("{date}: tangency benchmark degenerate: {e}");
                        flag = Some(SkipReason::NoTangency);
                        WeightVector(w_prev.clone())
                    }
                }
            } else {
                WeightVector(w_prev.clone())
            };
            let day_turnover: f64 = w
                .0
                .iter()
                .zip(w_prev.iter())
                .map(|(a, b)| (a - b).abs())
                .sum();
            let day_cost = config.cost_rate * day_turnover;
            let realized = w.0.dot(&panel.returns().row(t + 1).transpose());
            weights.push(w.0.clone());
            gross.push(realized);
            cost.push(day_cost);
            net.push(realized - day_cost);
            turnover.push(day_turnover);
            flags.push(flag);
            w_prev = w.0;
        }
        BacktestResult::from_parts(
            "tangency".to_string(),
            panel.symbols().to_vec(),
            realization_dates.clone(),
            weights,
            gross,
            cost,
            net,
            turnover,
            flags,
        )
    };

    // --- equal weighted: constant 1/n targets, establishment cost only
    let equal_weight = {
        let w = DVector::from_element(n, 1.0 / n as f64);
        let mut weights = Vec::new();
        let mut gross = Vec::new();
        let mut cost = Vec::new();
        let mut net = Vec::new();
        let mut turnover = Vec::new();
        for (k, t) in (start..=last).enumerate() {
            let day_turnover = if k == 0 { 1.0 } else { 0.0 };
            let day_cost = config.cost_rate * day_turnover;
            let realized = w.dot(&panel.returns().row(t + 1).transpose());
            weights.push(w.clone());
            gross.push(realized);
            cost.push(day_cost);
            net.push(realized - day_cost);
            turnover.push(day_turnover);
        }
        BacktestResult::from_parts(
            "equal_weight".to_string(),
            panel.symbols().to_vec(),
            realization_dates.clone(),
            weights,
            gross,
            cost,
            net,
            turnover,
            vec![None; realization_dates.len()],
        )
    };

    let lookup = |series: &ReturnSeries, date: NaiveDate| -> Result<f64, BacktestError> {
        series.value_on(date).ok_or_else(|| {
            BacktestError::MissingIndexData(format!("{} has no value on {date}", series.name))
        })
    };

    // --- index total return: pass-through, no trading costs
    let index_run = {
        let mut gross = Vec::new();
        for d in &realization_dates {
            gross.push(lookup(index, *d)?);
        }
        BacktestResult::from_parts(
            "index".to_string(),
            vec![index.name.clone()],
            realization_dates.clone(),
            vec![DVector::from_element(1, 1.0); realization_dates.len()],
            gross.clone(),
            vec![0.0; realization_dates.len()],
            gross,
            vec![0.0; realization_dates.len()],
            vec![None; realization_dates.len()],
        )
    };

    // --- 60/40: daily-rebalanced to fixed targets, establishment cost only
    let sixty_forty = {
        let targets = DVector::from_vec(vec![0.6, 0.4]);
        let mut gross = Vec::new();
        let mut cost = Vec::new();
        let mut net = Vec::new();
        let mut turnover = Vec::new();
        for (k, d) in realization_dates.iter().enumerate() {
            let idx = lookup(index, *d)?;
            let bnd = lookup(bond, *d)?;
            let day_turnover = if k == 0 { 1.0 } else { 0.0 };
            let day_cost = config.cost_rate * day_turnover;
            let realized = 0.6 * idx + 0.4 * bnd;
            gross.push(realized);
            cost.push(day_cost);
            net.push(realized - day_cost);
            turnover.push(day_turnover);
        }
        BacktestResult::from_parts(
            "sixty_forty".to_string(),
            vec![index.name.clone(), bond.name.clone()],
            realization_dates.clone(),
            vec![targets; realization_dates.len()],
            gross,
            cost,
            net,
            turnover,
            vec![None; realization_dates.len()],
        )
    };

    Ok(BenchmarkResults {
        tangency,
        equal_weight,
        index: index_run,
        sixty_forty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn wv(values: &[f64]) -> WeightVector {
        WeightVector(DVector::from_row_slice(values))
    }

    #[test]
    fn leverage_worked_example_is_exact() {
        let scaled = scale_leverage(&wv(&[1.8, -0.8]), 1.5).unwrap();
        assert_eq!(scaled.0[0], 1.25);
        assert_eq!(scaled.0[1], -0.25);
    }

    #[test]
    fn leverage_no_op_below_cap() {
        let w = wv(&[0.6, 0.4]);
        let scaled = scale_leverage(&w, 1.5).unwrap();
        assert_eq!(scaled, w);
    }

    #[test]
    fn leverage_preserves_zeros_and_budget() {
        let scaled = scale_leverage(&wv(&[2.0, -1.0, 0.0]), 1.5).unwrap();
        assert_eq!(scaled.0[2], 0.0);
        assert_relative_eq!(scaled.sum(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(scaled.gross_exposure(), 1.5, epsilon = 1e-12);
        assert_relative_eq!(scaled.0[0], 1.25, epsilon = 1e-12);
        assert_relative_eq!(scaled.0[1], -0.25, epsilon = 1e-12);
    }

    #[test]
    fn infinite_cap_never_scales() {
        let w = wv(&[5.0, -4.0]);
        let scaled = scale_leverage(&w, f64::INFINITY).unwrap();
        assert_eq!(scaled, w);
    }

    #[test]
    fn leverage_rejects_bad_inputs() {
        assert!(scale_leverage(&wv(&[1.0, 0.0]), 0.5).is_err());
        assert!(scale_leverage(&wv(&[0.7, 0.7]), 1.5).is_err());
    }

    #[test]
    fn transaction_cost_examples() {
        let rate = 0.01;
        assert_eq!(
            transaction_cost(&wv(&[0.5, 0.5]), &wv(&[0.5, 0.5]), rate),
            0.0
        );
        assert_relative_eq!(
            transaction_cost(&wv(&[0.5, 0.5]), &wv(&[0.6, 0.4]), rate),
            0.002,
            epsilon = 1e-15
        );
        // first day from an empty position pays the full establishment
        assert_relative_eq!(
            transaction_cost(&wv(&[0.0, 0.0]), &wv(&[0.5, 0.5]), rate),
            0.01,
            epsilon = 1e-15
        );
    }

    #[test]
    fn wealth_compounds_net_returns() {
        let net = vec![0.01f64, -0.02, 0.005];
        let result = BacktestResult::from_parts(
            "x".to_string(),
            vec!["A".to_string()],
            (0..3)
                .map(|i| NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Duration::days(i))
                .collect(),
            vec![DVector::from_element(1, 1.0); 3],
            net.clone(),
            vec![0.0; 3],
            net.clone(),
            vec![0.0; 3],
            vec![None; 3],
        );
        let product: f64 = net.iter().map(|r| r.exp()).product();
        assert_relative_eq!(result.wealth_end(), product, epsilon = 1e-15);
        for k in 1..3 {
            assert_eq!(result.wealth[k], result.wealth[k - 1] * net[k].exp());
        }
    }
}
