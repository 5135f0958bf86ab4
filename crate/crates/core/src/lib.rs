//! Portfolio analytics around the geometry of rolling efficient frontiers:
//! decompose each frontier into three interpretable coefficients, forecast
//! the coefficients with small online regressions, derive the forecasted
//! tangency portfolio in closed form, and invest in the point on the current
//! frontier nearest to it. A backtester evaluates the strategy against
//! standard benchmarks with leverage capping and proportional transaction
//! costs.

pub mod backtest;
pub mod data;
pub mod fixtures;
pub mod forecast;
pub mod frontier;
pub mod mindist;
pub mod synthetic;
