//! Performance metrics and alpha regressions for backtest results.

use super::{BacktestError, BacktestResult, TRADING_DAYS_PER_YEAR};
use crate::data::RiskFreeSeries;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Annualized performance summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub sharpe: f64,
    /// `None` when the run had no downside days (the ratio is undefined).
    pub sortino: Option<f64>,
    /// Geometric annual return from the final wealth level.
    pub annual_return: f64,
    /// Worst decline from a running wealth maximum, in [-1, 0].
    pub max_drawdown: f64,
}

/// Annualized intercept, slope, and intercept p-value of a daily
/// excess-return regression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaReport {
    pub alpha: f64,
    pub beta: f64,
    pub p_value: f64,
}

fn excess_returns(
    result: &BacktestResult,
    rf: &RiskFreeSeries,
) -> Result<Vec<f64>, BacktestError> {
    result
        .dates
        .iter()
        .zip(&result.net)
        .map(|(date, net)| {
            rf.rate_on(*date)
                .map(|r| net - r)
                .ok_or_else(|| BacktestError::DataGap(format!("risk-free rate missing for {date}")))
        })
        .collect()
}

/// Sharpe, Sortino, geometric annual return, and max drawdown. The Sharpe
/// denominator is the sample standard deviation of net returns; the Sortino
/// denominator is the full-sample root mean square of negative excess
/// returns; the drawdown includes the unit starting wealth.
pub fn compute_metrics(
    result: &BacktestResult,
    rf: &RiskFreeSeries,
) -> Result<MetricsReport, BacktestError> {
    let n = result.net.len();
    if n < 2 {
        return Err(BacktestError::TooFewObservations {
            required: 2,
            actual: n,
        });
    }
    let excess = excess_returns(result, rf)?;
    let mean_excess: f64 = excess.iter().sum::<f64>() / n as f64;

    let mean_net: f64 = result.net.iter().sum::<f64>() / n as f64;
    let var_net: f64 = result
        .net
        .iter()
        .map(|r| (r - mean_net) * (r - mean_net))
        .sum::<f64>()
        / (n - 1) as f64;
    if var_net <= 0.0 {
        return Err(BacktestError::ZeroVariance);
    }
    let annualizer = TRADING_DAYS_PER_YEAR.sqrt();
    let sharpe = mean_excess / var_net.sqrt() * annualizer;

    let downside_ms: f64 = excess
        .iter()
        .map(|e| {
            let d = e.min(0.0);
            d * d
        })
        .sum::<f64>()
        / n as f64;
    let sortino = if downside_ms > 0.0 {
        Some(mean_excess / downside_ms.sqrt() * annualizer)
    } else {
        None
    };

    let annual_return = result
        .wealth_end()
        .powf(TRADING_DAYS_PER_YEAR / n as f64)
        - 1.0;

    let mut running_max = 1.0f64;
    let mut max_drawdown = 0.0f64;
    for w in &result.wealth {
        running_max = running_max.max(*w);
        max_drawdown = max_drawdown.min(w / running_max - 1.0);
    }

    Ok(MetricsReport {
        sharpe,
        sortino,
        annual_return,
        max_drawdown,
    })
}

/// OLS of the strategy's daily excess returns on a benchmark's, with the
/// intercept annualized and its two-sided t-test p-value.
pub fn alpha_regression(
    strategy: &BacktestResult,
    benchmark: &BacktestResult,
    rf: &RiskFreeSeries,
) -> Result<AlphaReport, BacktestError> {
    let mut pairs = Vec::new();
    let mut bi = 0usize;
    for (date, net) in strategy.dates.iter().zip(&strategy.net) {
        while bi < benchmark.dates.len() && benchmark.dates[bi] < *date {
            bi += 1;
        }
        if bi < benchmark.dates.len() && benchmark.dates[bi] == *date {
            let rf_t = rf.rate_on(*date).ok_or_else(|| {
                BacktestError::DataGap(format!("risk-free rate missing for {date}"))
            })?;
            pairs.push((benchmark.net[bi] - rf_t, net - rf_t));
        }
    }
    let n = pairs.len();
    if n < 3 {
        return Err(BacktestError::TooFewObservations {
            required: 3,
            actual: n,
        });
    }
    let nf = n as f64;
    let x_bar = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let y_bar = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut raw_xx = 0.0;
    for (x, y) in &pairs {
        sxx += (x - x_bar) * (x - x_bar);
        sxy += (x - x_bar) * (y - y_bar);
        raw_xx += x * x;
    }
    if sxx <= 1e-12 * raw_xx.max(1e-300) {
        return Err(BacktestError::ZeroBenchmarkVariance);
    }
    let beta = sxy / sxx;
    let alpha_daily = y_bar - beta * x_bar;

    let sse: f64 = pairs
        .iter()
        .map(|(x, y)| {
            let resid = y - alpha_daily - beta * x;
            resid * resid
        })
        .sum();
    let dof = nf - 2.0;
    let s2 = sse / dof;
    let se_alpha = (s2 * (1.0 / nf + x_bar * x_bar / sxx)).sqrt();
    let p_value = if se_alpha > 0.0 {
        let t = alpha_daily / se_alpha;
        let dist = StudentsT::new(0.0, 1.0, dof).expect("valid t-distribution parameters");
        2.0 * (1.0 - dist.cdf(t.abs()))
    } else if alpha_daily.abs() > 0.0 {
        0.0
    } else {
        1.0
    };

    Ok(AlphaReport {
        alpha: alpha_daily * TRADING_DAYS_PER_YEAR,
        beta,
        p_value,
    })
}
