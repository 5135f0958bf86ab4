//! Online forecasting of the frontier coefficients with three small masked
//! lag-1 regressions.
//!
//! Each equation predicts one coefficient of the short-window frontier a
//! fixed horizon ahead from at most two long-window predictors:
//!
//! * `r_mvp`    from the long-window `r_mvp`;
//! * `sigma_mvp` from the long-window `sigma_mvp`;
//! * `u`        from the long-window `sigma_mvp` and the long-window
//!   equal-weighted return mean.
//!
//! Masked-out coefficients are pinned to exactly zero. Fits are ordinary
//! least squares over an expanding window of rows whose targets have become
//! observable; the expanding refit is maintained through exact moment
//! accumulators, so a daily online update equals a batch refit bit for bit.

use crate::data::ReturnPanel;
use crate::frontier::{CoefficientSeries, InterpretableCoefficients};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FEATURE_COUNT: usize = 4;
pub const EQUATION_COUNT: usize = 3;

/// Feature indices within a dataset row.
pub mod feature {
    pub const R_MVP: usize = 0;
    pub const SIGMA_MVP: usize = 1;
    pub const U: usize = 2;
    pub const EW_MEAN: usize = 3;
}

/// Equation indices (one per forecasted coefficient).
pub mod equation {
    pub const R_MVP: usize = 0;
    pub const SIGMA_MVP: usize = 1;
    pub const U: usize = 2;

    pub const NAMES: [&str; 3] = ["r_mvp", "sigma_mvp", "u"];
}

/// Floor applied to non-positive volatility forecasts.
pub const SIGMA_FORECAST_FLOOR: f64 = 1e-6;
/// Floor applied to non-positive curvature forecasts.
pub const U_FORECAST_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("insufficient overlap: dataset has {0} usable rows, need at least 2")]
    InsufficientOverlap(usize),
    #[error("equation {equation} needs {required} rows with observable targets, has {actual}")]
    InsufficientTraining {
        equation: usize,
        required: usize,
        actual: usize,
    },
    #[error("equation {equation} has a rank-deficient design (constant or collinear features)")]
    DegenerateFit { equation: usize },
    #[error("mask row {0} actives more than two predictors")]
    TooManyPredictors(usize),
    #[error("update date {new} is out of order (model fitted through {fitted})")]
    OutOfOrderUpdate { new: NaiveDate, fitted: NaiveDate },
    #[error("non-finite feature value at index {0}")]
    NonFiniteFeature(usize),
    #[error("series lengths differ: {0} vs {1} vs {2}")]
    LengthMismatch(usize, usize, usize),
    #[error("out-of-sample variance denominator is zero")]
    ZeroDenominator,
    #[error("dataset row for {0} not found")]
    MissingRow(NaiveDate),
}

/// Binary predictor mask: `active[equation][feature]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarxMask {
    active: [[bool; FEATURE_COUNT]; EQUATION_COUNT],
}

impl VarxMask {
    pub fn new(active: [[bool; FEATURE_COUNT]; EQUATION_COUNT]) -> Result<Self, ForecastError> {
        for (eq, row) in active.iter().enumerate() {
            if row.iter().filter(|a| **a).count() > 2 {
                return Err(ForecastError::TooManyPredictors(eq));
            }
        }
        Ok(Self { active })
    }

    /// The shipped feature selection: one lagged predictor for `r_mvp` and
    /// `sigma_mvp`, and (`sigma_mvp`, equal-weighted mean) for `u`.
    pub fn standard() -> Self {
        let mut active = [[false; FEATURE_COUNT]; EQUATION_COUNT];
        active[equation::R_MVP][feature::R_MVP] = true;
        active[equation::SIGMA_MVP][feature::SIGMA_MVP] = true;
        active[equation::U][feature::SIGMA_MVP] = true;
        active[equation::U][feature::EW_MEAN] = true;
        Self { active }
    }

    pub fn is_active(&self, eq: usize, feat: usize) -> bool {
        self.active[eq][feat]
    }

    pub fn active_features(&self, eq: usize) -> Vec<usize> {
        (0..FEATURE_COUNT)
            .filter(|f| self.active[eq][*f])
            .collect()
    }
}

/// One forecasting observation: features measured at `date`, and the target
/// coefficients realized `horizon` business days later (observable only once
/// that later date arrives).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub date: NaiveDate,
    pub features: [f64; FEATURE_COUNT],
    pub target: Option<[f64; EQUATION_COUNT]>,
    pub target_observable: Option<NaiveDate>,
}

/// Feature/target rows on the panel's business-day axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDataset {
    pub rows: Vec<DatasetRow>,
    pub horizon: usize,
}

impl ForecastDataset {
    pub fn row_on(&self, date: NaiveDate) -> Option<&DatasetRow> {
        self.rows
            .binary_search_by_key(&date, |r| r.date)
            .ok()
            .map(|i| &self.rows[i])
    }
}

/// Assembles the dataset from a long-window feature series, a short-window
/// target series, and the return panel (for the equal-weighted mean
/// feature). The horizon is counted in positions on the panel's date axis.
pub fn build_dataset(
    feature_series: &CoefficientSeries,
    target_series: &CoefficientSeries,
    panel: &ReturnPanel,
    horizon: usize,
) -> Result<ForecastDataset, ForecastError> {
    if horizon == 0 {
        return Err(ForecastError::ZeroHorizon);
    }
    let ew_window = feature_series.window_len.max(1);
    let t = panel.n_rows();
    let n = panel.n_assets() as f64;

    // prefix sums of the cross-sectional mean return
    let mut prefix = Vec::with_capacity(t + 1);
    prefix.push(0.0f64);
    for i in 0..t {
        let row_mean = panel.returns().row(i).sum() / n;
        prefix.push(prefix[i] + row_mean);
    }

    let mut rows = Vec::new();
    for i in 0..t {
        if i + 1 < ew_window {
            continue;
        }
        let date = panel.dates()[i];
        let Some(feat) = feature_series.record_on(date) else {
            continue;
        };
        let ew_mean = (prefix[i + 1] - prefix[i + 1 - ew_window]) / ew_window as f64;
        let features = [feat.r_mvp, feat.sigma_mvp, feat.u, ew_mean];
        let (target, target_observable) = match i.checked_add(horizon) {
            Some(j) if j < t => {
                let target_date = panel.dates()[j];
                match target_series.record_on(target_date) {
                    Some(rec) => (
                        Some([rec.r_mvp, rec.sigma_mvp, rec.u]),
                        Some(target_date),
                    ),
                    None => (None, None),
                }
            }
            _ => (None, None),
        };
        rows.push(DatasetRow {
            date,
            features,
            target,
            target_observable,
        });
    }
    if rows.len() < 2 {
        return Err(ForecastError::InsufficientOverlap(rows.len()));
    }
    Ok(ForecastDataset { rows, horizon })
}

/// Exact OLS moment accumulators for one equation (at most two predictors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EquationAccumulator {
    n: usize,
    sum_x: [f64; 2],
    sum_y: f64,
    sum_xx: [f64; 3], // packed symmetric: [xx00, xx01, xx11]
    sum_xy: [f64; 2],
}

impl EquationAccumulator {
    fn empty() -> Self {
        Self {
            n: 0,
            sum_x: [0.0; 2],
            sum_y: 0.0,
            sum_xx: [0.0; 3],
            sum_xy: [0.0; 2],
        }
    }

    fn add(&mut self, x: &[f64], y: f64) {
        self.n += 1;
        self.sum_y += y;
        for (i, xi) in x.iter().enumerate() {
            self.sum_x[i] += xi;
            self.sum_xy[i] += xi * y;
        }
        match x.len() {
            0 => {}
            1 => self.sum_xx[0] += x[0] * x[0],
            _ => {
                self.sum_xx[0] += x[0] * x[0];
                self.sum_xx[1] += x[0] * x[1];
                self.sum_xx[2] += x[1] * x[1];
            }
        }
    }

    /// Solves the centered normal equations. `k` is the active feature
    /// count.
    fn solve(&self, k: usize, eq: usize) -> Result<(f64, [f64; 2]), ForecastError> {
        if self.n < k + 1 {
            return Err(ForecastError::InsufficientTraining {
                equation: eq,
                required: k + 1,
                actual: self.n,
            });
        }
        let n = self.n as f64;
        let y_bar = self.sum_y / n;
        match k {
            0 => Ok((y_bar, [0.0, 0.0])),
            1 => {
                let x_bar = self.sum_x[0] / n;
                let sxx = self.sum_xx[0] - n * x_bar * x_bar;
                if sxx <= 1e-12 * self.sum_xx[0].max(1e-300) {
                    return Err(ForecastError::DegenerateFit { equation: eq });
                }
                let sxy = self.sum_xy[0] - n * x_bar * y_bar;
                let beta = sxy / sxx;
                Ok((y_bar - beta * x_bar, [beta, 0.0]))
            }
            _ => {
                let x0 = self.sum_x[0] / n;
                let x1 = self.sum_x[1] / n;
                let s00 = self.sum_xx[0] - n * x0 * x0;
                let s01 = self.sum_xx[1] - n * x0 * x1;
                let s11 = self.sum_xx[2] - n * x1 * x1;
                let sy0 = self.sum_xy[0] - n * x0 * y_bar;
                let sy1 = self.sum_xy[1] - n * x1 * y_bar;
                if s00 <= 1e-12 * self.sum_xx[0].max(1e-300)
                    || s11 <= 1e-12 * self.sum_xx[2].max(1e-300)
                {
                    return Err(ForecastError::DegenerateFit { equation: eq });
                }
                let det = s00 * s11 - s01 * s01;
                if det <= 1e-12 * s00 * s11 {
                    return Err(ForecastError::DegenerateFit { equation: eq });
                }
                let b0 = (s11 * sy0 - s01 * sy1) / det;
                let b1 = (s00 * sy1 - s01 * sy0) / det;
                Ok((y_bar - b0 * x0 - b1 * x1, [b0, b1]))
            }
        }
    }

    fn target_mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum_y / self.n as f64)
    }
}

/// One fitted equation: intercept plus a full-width coefficient vector with
/// masked entries pinned to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationFit {
    pub intercept: f64,
    pub beta: [f64; FEATURE_COUNT],
}

impl EquationFit {
    pub fn evaluate(&self, features: &[f64; FEATURE_COUNT]) -> f64 {
        let mut y = self.intercept;
        for (b, x) in self.beta.iter().zip(features) {
            y += b * x;
        }
        y
    }
}

/// The three fitted equations plus the expanding-fit state needed to keep
/// updating them online.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarxModel {
    mask: VarxMask,
    equations: [EquationFit; EQUATION_COUNT],
    accumulators: [EquationAccumulator; EQUATION_COUNT],
    last_fit: NaiveDate,
    rows_consumed: usize,
}

impl VarxModel {
    pub fn mask(&self) -> &VarxMask {
        &self.mask
    }

    pub fn equations(&self) -> &[EquationFit; EQUATION_COUNT] {
        &self.equations
    }

    pub fn last_fit(&self) -> NaiveDate {
        self.last_fit
    }

    pub fn rows_fitted(&self) -> usize {
        self.accumulators[0].n
    }

    /// Expanding mean of the targets observed so far (the training mean used
    /// by the out-of-sample R-squared convention).
    pub fn training_mean(&self, eq: usize) -> Option<f64> {
        self.accumulators[eq].target_mean()
    }
}

fn accumulate_row(
    mask: &VarxMask,
    accumulators: &mut [EquationAccumulator; EQUATION_COUNT],
    row: &DatasetRow,
    target: &[f64; EQUATION_COUNT],
) {
    for eq in 0..EQUATION_COUNT {
        let active = mask.active_features(eq);
        let mut x = [0.0f64; 2];
        for (slot, feat) in active.iter().enumerate() {
            x[slot] = row.features[*feat];
        }
        accumulators[eq].add(&x[..active.len()], target[eq]);
    }
}

fn solve_equations(
    mask: &VarxMask,
    accumulators: &[EquationAccumulator; EQUATION_COUNT],
) -> Result<[EquationFit; EQUATION_COUNT], ForecastError> {
    let mut equations = [
        EquationFit {
            intercept: 0.0,
            beta: [0.0; FEATURE_COUNT],
        },
        EquationFit {
            intercept: 0.0,
            beta: [0.0; FEATURE_COUNT],
        },
        EquationFit {
            intercept: 0.0,
            beta: [0.0; FEATURE_COUNT],
        },
    ];
    for eq in 0..EQUATION_COUNT {
        let active = mask.active_features(eq);
        let (intercept, packed) = accumulators[eq].solve(active.len(), eq)?;
        equations[eq].intercept = intercept;
        for (slot, feat) in active.iter().enumerate() {
            equations[eq].beta[*feat] = packed[slot];
        }
    }
    Ok(equations)
}

/// Fits on every dataset row whose target has become observable by `now`.
pub fn fit_observable(
    dataset: &ForecastDataset,
    mask: &VarxMask,
    now: NaiveDate,
) -> Result<VarxModel, ForecastError> {
    let mut accumulators = [
        EquationAccumulator::empty(),
        EquationAccumulator::empty(),
        EquationAccumulator::empty(),
    ];
    let mut cursor = 0usize;
    while cursor < dataset.rows.len() {
        let row = &dataset.rows[cursor];
        match (row.target.as_ref(), row.target_observable) {
            (Some(target), Some(observable)) if observable <= now => {
                accumulate_row(mask, &mut accumulators, row, target);
                cursor += 1;
            }
            (None, _) => cursor += 1, // never observable; skip permanently
            _ => break,
        }
    }
    let equations = solve_equations(mask, &accumulators)?;
    Ok(VarxModel {
        mask: mask.clone(),
        equations,
        accumulators,
        last_fit: now,
        rows_consumed: cursor,
    })
}

/// Fits on every dataset row that has a target, regardless of date.
pub fn fit(dataset: &ForecastDataset, mask: &VarxMask) -> Result<VarxModel, ForecastError> {
    let last = dataset
        .rows
        .iter()
        .filter_map(|r| r.target_observable)
        .next_back()
        .unwrap_or_else(|| {
            dataset
                .rows
                .last()
                .map(|r| r.date)
                .unwrap_or(NaiveDate::MIN)
        });
    fit_observable(dataset, mask, last)
}

/// Expands the fit with every row whose target became observable since the
/// last update, preserving exact batch-refit semantics.
pub fn update_online(
    mut model: VarxModel,
    dataset: &ForecastDataset,
    new_date: NaiveDate,
) -> Result<VarxModel, ForecastError> {
    if new_date < model.last_fit {
        return Err(ForecastError::OutOfOrderUpdate {
            new: new_date,
            fitted: model.last_fit,
        });
    }
    let mut changed = false;
    while model.rows_consumed < dataset.rows.len() {
        let row = &dataset.rows[model.rows_consumed];
        match (row.target.as_ref(), row.target_observable) {
            (Some(target), Some(observable)) if observable <= new_date => {
                accumulate_row(&model.mask, &mut model.accumulators, row, target);
                model.rows_consumed += 1;
                changed = true;
            }
            (None, _) => model.rows_consumed += 1,
            _ => break,
        }
    }
    if changed {
        model.equations = solve_equations(&model.mask, &model.accumulators)?;
    }
    model.last_fit = new_date;
    Ok(model)
}

/// A forecast issued at `as_of` for the coefficients one horizon ahead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub as_of: NaiveDate,
    pub coefficients: InterpretableCoefficients,
    pub sigma_floored: bool,
    pub u_floored: bool,
}

impl ForecastRecord {
    pub fn flags(&self) -> String {
        match (self.sigma_floored, self.u_floored) {
            (false, false) => String::new(),
            (true, false) => "sigma_floored".to_string(),
            (false, true) => "u_floored".to_string(),
            (true, true) => "sigma_floored;u_floored".to_string(),
        }
    }
}

/// Evaluates the three equations at the given features, flooring the
/// positive-only coefficients.
pub fn predict(
    model: &VarxModel,
    features: &[f64; FEATURE_COUNT],
    as_of: NaiveDate,
) -> Result<ForecastRecord, ForecastError> {
    if let Some(i) = features.iter().position(|f| !f.is_finite()) {
        return Err(ForecastError::NonFiniteFeature(i));
    }
    let r_mvp = model.equations[equation::R_MVP].evaluate(features);
    let raw_sigma = model.equations[equation::SIGMA_MVP].evaluate(features);
    let raw_u = model.equations[equation::U].evaluate(features);
    let sigma_floored = raw_sigma < SIGMA_FORECAST_FLOOR;
    let u_floored = raw_u < U_FORECAST_FLOOR;
    Ok(ForecastRecord {
        as_of,
        coefficients: InterpretableCoefficients {
            r_mvp,
            sigma_mvp: raw_sigma.max(SIGMA_FORECAST_FLOOR),
            u: raw_u.max(U_FORECAST_FLOOR),
        },
        sigma_floored,
        u_floored,
    })
}

/// Out-of-sample R-squared against the expanding training mean:
/// `1 - sum((y - yhat)^2) / sum((y - ybar_t)^2)`. May be negative.
pub fn oos_r2(
    predictions: &[f64],
    actuals: &[f64],
    training_means: &[f64],
) -> Result<f64, ForecastError> {
    if predictions.len() != actuals.len()
        || actuals.len() != training_means.len()
        || actuals.len() < 2
    {
        return Err(ForecastError::LengthMismatch(
            predictions.len(),
            actuals.len(),
            training_means.len(),
        ));
    }
    let mut sse = 0.0;
    let mut sst = 0.0;
    for ((p, y), m) in predictions.iter().zip(actuals).zip(training_means) {
        sse += (y - p) * (y - p);
        sst += (y - m) * (y - m);
    }
    if sst <= 0.0 {
        return Err(ForecastError::ZeroDenominator);
    }
    Ok(1.0 - sse / sst)
}

/// Result of walking the dataset forward with daily online updates.
#[derive(Debug, Clone)]
pub struct OnlineEvaluation {
    pub forecasts: Vec<ForecastRecord>,
    /// Per-equation out-of-sample R-squared over the scored horizon pairs.
    pub r2: [f64; EQUATION_COUNT],
    pub model: VarxModel,
}

/// Fits through `in_sample_end`, then walks every later dataset row: update
/// with newly observable targets, forecast, and score forecasts whose
/// targets eventually realize.
pub fn run_online_evaluation(
    dataset: &ForecastDataset,
    mask: &VarxMask,
    in_sample_end: NaiveDate,
) -> Result<OnlineEvaluation, ForecastError> {
    let mut model = fit_observable(dataset, mask, in_sample_end)?;
    let mut forecasts = Vec::new();
    let mut scored: [Vec<(f64, f64, f64)>; EQUATION_COUNT] =
        [Vec::new(), Vec::new(), Vec::new()];
    for row in &dataset.rows {
        if row.date <= in_sample_end {
            continue;
        }
        model = update_online(model, dataset, row.date)?;
        let record = predict(&model, &row.features, row.date)?;
        if let Some(target) = row.target {
            let predicted = [
                record.coefficients.r_mvp,
                record.coefficients.sigma_mvp,
                record.coefficients.u,
            ];
            for eq in 0..EQUATION_COUNT {
                let mean = model.training_mean(eq).unwrap_or(0.0);
                scored[eq].push((predicted[eq], target[eq], mean));
            }
        }
        forecasts.push(record);
    }
    let mut r2 = [0.0; EQUATION_COUNT];
    for eq in 0..EQUATION_COUNT {
        let preds: Vec<f64> = scored[eq].iter().map(|s| s.0).collect();
        let actuals: Vec<f64> = scored[eq].iter().map(|s| s.1).collect();
        let means: Vec<f64> = scored[eq].iter().map(|s| s.2).collect();
        r2[eq] = oos_r2(&preds, &actuals, &means)?;
    }
    Ok(OnlineEvaluation {
        forecasts,
        r2,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Duration::days(i)
    }

    /// Rows with the given feature/target functions; every target observable
    /// at its own date (tests that don't exercise availability).
    fn manual_rows(
        n: usize,
        features: impl Fn(usize) -> [f64; FEATURE_COUNT],
        target: impl Fn(usize, &[f64; FEATURE_COUNT]) -> [f64; EQUATION_COUNT],
    ) -> ForecastDataset {
        let rows = (0..n)
            .map(|i| {
                let f = features(i);
                let t = target(i, &f);
                DatasetRow {
                    date: day(i as i64),
                    features: f,
                    target: Some(t),
                    target_observable: Some(day(i as i64)),
                }
            })
            .collect();
        ForecastDataset { rows, horizon: 21 }
    }

    fn varied_features(i: usize) -> [f64; FEATURE_COUNT] {
        let x = i as f64;
        [
            0.01 * (x * 0.37).sin(),
            0.05 + 0.01 * (x * 0.73).cos(),
            0.2 + 0.03 * (x * 0.19).sin(),
            0.001 * (x * 1.31).cos(),
        ]
    }

    #[test]
    fn exact_linear_recovery() {
        let ds = manual_rows(40, varied_features, |_, f| {
            [
                2.0 * f[feature::R_MVP] + 1.0,
                0.5 * f[feature::SIGMA_MVP] + 0.2,
                0.3 * f[feature::SIGMA_MVP] + 0.7 * f[feature::EW_MEAN] + 0.05,
            ]
        });
        let model = fit(&ds, &VarxMask::standard()).unwrap();
        let eq = model.equations();
        assert_relative_eq!(eq[0].beta[feature::R_MVP], 2.0, epsilon = 1e-10);
        assert_relative_eq!(eq[0].intercept, 1.0, epsilon = 1e-10);
        assert_relative_eq!(eq[1].beta[feature::SIGMA_MVP], 0.5, epsilon = 1e-10);
        assert_relative_eq!(eq[1].intercept, 0.2, epsilon = 1e-10);
        assert_relative_eq!(eq[2].beta[feature::SIGMA_MVP], 0.3, epsilon = 1e-10);
        assert_relative_eq!(eq[2].beta[feature::EW_MEAN], 0.7, epsilon = 1e-10);
        assert_relative_eq!(eq[2].intercept, 0.05, epsilon = 1e-10);
    }

    #[test]
    fn constant_feature_is_rank_deficient() {
        let ds = manual_rows(
            20,
            |i| {
                let mut f = varied_features(i);
                f[feature::SIGMA_MVP] = 0.04; // constant
                f
            },
            |_, f| [f[0], 0.1, 0.2],
        );
        match fit(&ds, &VarxMask::standard()) {
            Err(ForecastError::DegenerateFit { equation }) => {
                assert_eq!(equation, equation::SIGMA_MVP)
            }
            other => panic!("expected degenerate fit, got {other:?}"),
        }
    }

    /// Independent normal-equations oracle: raw design matrix with intercept
    /// column, solved through the explicit cofactor inverse.
    fn oracle_ols(xs: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
        let k = xs[0].len() + 1;
        let mut xtx = vec![vec![0.0; k]; k];
        let mut xty = vec![0.0; k];
        for (row, y) in xs.iter().zip(ys) {
            let mut design = vec![1.0];
            design.extend_from_slice(row);
            for i in 0..k {
                xty[i] += design[i] * y;
                for j in 0..k {
                    xtx[i][j] += design[i] * design[j];
                }
            }
        }
        // explicit inverse via nalgebra only in test code
        let m = DMatrix::from_fn(k, k, |i, j| xtx[i][j]);
        let v = nalgebra::DVector::from_vec(xty);
        let sol = m.lu().solve(&v).unwrap();
        sol.iter().copied().collect()
    }

    #[test]
    fn fit_matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows = 100;
        let mut feats = Vec::new();
        for i in 0..rows {
            let mut f = varied_features(i);
            for v in f.iter_mut() {
                *v += rng.random_range(-0.01..0.01);
            }
            feats.push(f);
        }
        let targets: Vec<[f64; 3]> = feats
            .iter()
            .map(|f| {
                [
                    1.5 * f[0] + 0.3 + rng.random_range(-0.005..0.005),
                    -0.2 * f[1] + 0.1 + rng.random_range(-0.005..0.005),
                    0.4 * f[1] - 0.8 * f[3] + 0.02 + rng.random_range(-0.005..0.005),
                ]
            })
            .collect();
        let rows_vec: Vec<DatasetRow> = (0..rows)
            .map(|i| DatasetRow {
                date: day(i as i64),
                features: feats[i],
                target: Some(targets[i]),
                target_observable: Some(day(i as i64)),
            })
            .collect();
        let ds = ForecastDataset {
            rows: rows_vec,
            horizon: 21,
        };
        let model = fit(&ds, &VarxMask::standard()).unwrap();

        // equation 0: y ~ [1, f0]
        let x0: Vec<Vec<f64>> = feats.iter().map(|f| vec![f[0]]).collect();
        let y0: Vec<f64> = targets.iter().map(|t| t[0]).collect();
        let sol0 = oracle_ols(&x0, &y0);
        assert_relative_eq!(model.equations()[0].intercept, sol0[0], epsilon = 1e-8);
        assert_relative_eq!(model.equations()[0].beta[0], sol0[1], epsilon = 1e-8);

        // equation 2: y ~ [1, f1, f3]
        let x2: Vec<Vec<f64>> = feats.iter().map(|f| vec![f[1], f[3]]).collect();
        let y2: Vec<f64> = targets.iter().map(|t| t[2]).collect();
        let sol2 = oracle_ols(&x2, &y2);
        assert_relative_eq!(model.equations()[2].intercept, sol2[0], epsilon = 1e-8);
        assert_relative_eq!(model.equations()[2].beta[1], sol2[1], epsilon = 1e-8);
        assert_relative_eq!(model.equations()[2].beta[3], sol2[2], epsilon = 1e-8);
    }

    #[test]
    fn masked_coefficients_stay_exactly_zero() {
        let ds = manual_rows(30, varied_features, |_, f| [f[0], f[1], f[1] + f[3]]);
        let mask = VarxMask::standard();
        let mut model = fit_observable(&ds, &mask, day(10)).unwrap();
        for i in 11..30 {
            model = update_online(model, &ds, day(i)).unwrap();
        }
        for eq in 0..EQUATION_COUNT {
            for feat in 0..FEATURE_COUNT {
                if !mask.is_active(eq, feat) {
                    assert_eq!(model.equations()[eq].beta[feat], 0.0);
                }
            }
        }
    }

    #[test]
    fn prediction_identity_and_affine() {
        // identity forecast: beta 1, intercept 0
        let ds = manual_rows(20, varied_features, |_, f| [f[0], f[1], f[1]]);
        let mask = VarxMask::new([
            [true, false, false, false],
            [false, true, false, false],
            [false, true, false, false],
        ])
        .unwrap();
        let model = fit(&ds, &mask).unwrap();
        let features = [0.007, 0.06, 0.25, 0.002];
        let rec = predict(&model, &features, day(30)).unwrap();
        assert_relative_eq!(rec.coefficients.r_mvp, 0.007, epsilon = 1e-10);
        assert_relative_eq!(rec.coefficients.sigma_mvp, 0.06, epsilon = 1e-10);

        // affine: target = 2x + 1, feature 3 predicts 7
        let ds2 = manual_rows(20, varied_features, |_, f| {
            [2.0 * f[0] + 1.0, f[1], f[1]]
        });
        let model2 = fit(&ds2, &mask).unwrap();
        let rec2 = predict(&model2, &[3.0, 0.06, 0.25, 0.002], day(31)).unwrap();
        assert_relative_eq!(rec2.coefficients.r_mvp, 7.0, epsilon = 1e-8);
    }

    #[test]
    fn negative_volatility_forecast_is_floored() {
        // constant negative sigma target: intercept -0.01, slope irrelevant
        let ds = manual_rows(25, varied_features, |_, f| [f[0], -0.01, f[1]]);
        let model = fit(&ds, &VarxMask::standard()).unwrap();
        let rec = predict(&model, &varied_features(3), day(40)).unwrap();
        assert!(rec.sigma_floored);
        assert_eq!(rec.coefficients.sigma_mvp, SIGMA_FORECAST_FLOOR);
        assert!(!rec.u_floored);
    }

    #[test]
    fn sequential_updates_equal_batch_fit() {
        let ds = manual_rows(60, varied_features, |i, f| {
            let noise = ((i * 29 + 7) % 13) as f64 / 1000.0;
            [f[0] + noise, f[1], f[1] + f[3] + noise]
        });
        let mask = VarxMask::standard();
        let mut online = fit_observable(&ds, &mask, day(9)).unwrap();
        for i in 10..60 {
            online = update_online(online, &ds, day(i)).unwrap();
        }
        let batch = fit_observable(&ds, &mask, day(59)).unwrap();
        assert_eq!(online.equations(), batch.equations());
    }

    #[test]
    fn update_with_consistent_row_preserves_exact_fit() {
        let ds = manual_rows(30, varied_features, |_, f| {
            [2.0 * f[0] + 1.0, f[1], f[1]]
        });
        let mask = VarxMask::standard();
        let before = fit_observable(&ds, &mask, day(20)).unwrap();
        let after = update_online(before.clone(), &ds, day(21)).unwrap();
        for eq in 0..EQUATION_COUNT {
            assert_relative_eq!(
                after.equations()[eq].intercept,
                before.equations()[eq].intercept,
                epsilon = 1e-12
            );
            for feat in 0..FEATURE_COUNT {
                assert_relative_eq!(
                    after.equations()[eq].beta[feat],
                    before.equations()[eq].beta[feat],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn out_of_order_update_is_rejected() {
        let ds = manual_rows(30, varied_features, |_, f| [f[0], f[1], f[1]]);
        let model = fit_observable(&ds, &VarxMask::standard(), day(20)).unwrap();
        assert!(matches!(
            update_online(model, &ds, day(19)),
            Err(ForecastError::OutOfOrderUpdate { .. })
        ));
    }

    #[test]
    fn determinism_bit_identical_models() {
        let ds = manual_rows(45, varied_features, |i, f| {
            [f[0] + (i % 7) as f64 * 1e-4, f[1], f[1] + f[3]]
        });
        let a = fit(&ds, &VarxMask::standard()).unwrap();
        let b = fit(&ds, &VarxMask::standard()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn look_ahead_audit_future_targets_do_not_leak() {
        let mut ds = manual_rows(50, varied_features, |i, f| {
            [f[0] + (i % 5) as f64 * 1e-3, f[1], f[1] + f[3]]
        });
        // availability lags the row date by 21 days
        for (i, row) in ds.rows.iter_mut().enumerate() {
            row.target_observable = Some(day(i as i64 + 21));
        }
        let now = day(40);
        let clean = fit_observable(&ds, &VarxMask::standard(), now).unwrap();

        // corrupt every target that is not yet observable at `now`
        let mut corrupted = ds.clone();
        for row in corrupted.rows.iter_mut() {
            if row.target_observable.map(|d| d > now).unwrap_or(false) {
                row.target = Some([1e6, -1e6, 42.0]);
            }
        }
        let with_garbage = fit_observable(&corrupted, &VarxMask::standard(), now).unwrap();
        assert_eq!(clean.equations(), with_garbage.equations());

        // shifting availability by one day delays inclusion by exactly one day
        let mut shifted = ds.clone();
        for row in shifted.rows.iter_mut() {
            row.target_observable = row.target_observable.map(|d| d + chrono::Duration::days(1));
        }
        let shifted_fit = fit_observable(&shifted, &VarxMask::standard(), now).unwrap();
        let clean_yesterday = fit_observable(&ds, &VarxMask::standard(), day(39)).unwrap();
        assert_eq!(shifted_fit.equations(), clean_yesterday.equations());
    }

    #[test]
    fn oos_r2_conventions() {
        // perfect predictions
        let y = [1.0, 2.0, 3.0, 4.0];
        let means = [0.5, 1.0, 1.5, 2.0];
        assert_eq!(oos_r2(&y, &y, &means).unwrap(), 1.0);
        // predictions equal to the training mean give exactly zero
        assert_eq!(oos_r2(&means, &y, &means).unwrap(), 0.0);
        // constant actuals with matching means: zero denominator
        let c = [2.0, 2.0, 2.0];
        assert!(matches!(
            oos_r2(&c, &c, &c),
            Err(ForecastError::ZeroDenominator)
        ));
    }

    #[test]
    fn ar1_persistence_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let phi = 0.7;
        let n = 5000;
        let mut y = vec![0.0f64];
        for _ in 1..=n {
            let last = *y.last().unwrap();
            y.push(phi * last + rng.random_range(-0.1..0.1));
        }
        let rows: Vec<DatasetRow> = (0..n - 1)
            .map(|i| DatasetRow {
                date: day(i as i64),
                features: [y[i], y[i], y[i], rng.random_range(-0.1..0.1)],
                target: Some([y[i + 1], y[i + 1], y[i + 1]]),
                target_observable: Some(day(i as i64)),
            })
            .collect();
        let ds = ForecastDataset { rows, horizon: 1 };
        let model = fit(&ds, &VarxMask::standard()).unwrap();
        assert!(
            (model.equations()[0].beta[feature::R_MVP] - phi).abs() < 0.1,
            "fitted persistence {} too far from {phi}",
            model.equations()[0].beta[feature::R_MVP]
        );
    }

    #[test]
    fn model_round_trips_through_json() {
        let ds = manual_rows(30, varied_features, |_, f| [f[0], f[1], f[1] + f[3]]);
        let model = fit(&ds, &VarxMask::standard()).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: VarxModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
    }

    mod dataset_building {
        use super::*;
        use crate::frontier::rolling_coefficients;
        use crate::data::ReturnPanel;

        fn cyclic_panel(days: usize) -> ReturnPanel {
            let dates: Vec<NaiveDate> = (0..days as i64).map(day).collect();
            let mut flat = Vec::with_capacity(days * 2);
            for i in 0..days {
                let x = i as f64;
                flat.push(0.004 * (x * 0.61).sin() + 0.0007);
                flat.push(0.006 * (x * 1.13).cos() - 0.0002);
            }
            ReturnPanel::new(
                dates,
                vec!["A".to_string(), "B".to_string()],
                DMatrix::from_row_slice(days, 2, &flat),
            )
            .unwrap()
        }

        #[test]
        fn row_counting_and_alignment() {
            let panel = cyclic_panel(80);
            let feature_series = rolling_coefficients(&panel, 30).unwrap();
            let target_series = rolling_coefficients(&panel, 10).unwrap();
            let ds = build_dataset(&feature_series, &target_series, &panel, 21).unwrap();
            // features exist from index 29; targets need index + 21 <= 79
            assert_eq!(ds.rows[0].date, panel.dates()[29]);
            assert_eq!(ds.rows.len(), 80 - 29);
            let with_targets = ds.rows.iter().filter(|r| r.target.is_some()).count();
            assert_eq!(with_targets, 79 - 21 - 29 + 1);
            // the last rows cannot see a target
            assert!(ds.rows.last().unwrap().target.is_none());
            // observable dates are the panel date 21 positions ahead
            let row0 = &ds.rows[0];
            assert_eq!(row0.target_observable, Some(panel.dates()[29 + 21]));
        }

        #[test]
        fn equal_weighted_mean_of_constant_returns() {
            let days = 40;
            let dates: Vec<NaiveDate> = (0..days as i64).map(day).collect();
            let mut flat = Vec::new();
            for i in 0..days {
                // small cycle keeps the frontier non-degenerate
                let wiggle = 0.001 * ((i % 3) as f64 - 1.0);
                flat.push(0.01 + wiggle);
                flat.push(0.03 - wiggle);
            }
            let panel = ReturnPanel::new(
                dates,
                vec!["A".to_string(), "B".to_string()],
                DMatrix::from_row_slice(days, 2, &flat),
            )
            .unwrap();
            let feats = rolling_coefficients(&panel, 9).unwrap();
            let targets = rolling_coefficients(&panel, 6).unwrap();
            let ds = build_dataset(&feats, &targets, &panel, 5).unwrap();
            for row in &ds.rows {
                // cross-sectional mean is 0.02 every day, so any window mean is too
                assert_relative_eq!(row.features[feature::EW_MEAN], 0.02, epsilon = 1e-12);
            }
        }

        #[test]
        fn empty_overlap_is_rejected() {
            let panel = cyclic_panel(30);
            let series = rolling_coefficients(&panel, 5).unwrap();
            // a feature series whose dates never intersect the panel
            let far = CoefficientSeries::new(
                vec![day(1000), day(1001)],
                vec![series.records[0], series.records[1]],
                5,
            )
            .unwrap();
            assert!(matches!(
                build_dataset(&far, &series, &panel, 5),
                Err(ForecastError::InsufficientOverlap(_))
            ));
        }
    }
}
