//! Seeded synthetic market generation for fixtures and convergence checks.
//!
//! Returns are iid Gaussian with configurable means, volatilities, and a
//! common pairwise correlation, so every population quantity (tangency
//! weights, maximum Sharpe ratio) is known in closed form. Generation is
//! fully deterministic given the seed.

use crate::data::{ReturnPanel, ReturnSeries, RiskFreeSeries};
use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// Parameters of a synthetic market.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_days: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Daily ln-return means, one per asset.
    pub means: Vec<f64>,
    /// Daily volatilities, one per asset.
    pub vols: Vec<f64>,
    /// Common pairwise correlation.
    pub correlation: f64,
    /// Constant daily risk-free rate.
    pub rf_rate: f64,
    /// Mean and volatility of the separate index series.
    pub index_mean: f64,
    pub index_vol: f64,
}

impl SyntheticSpec {
    /// A small diversified default universe; asset `i` gets a mean and
    /// volatility interpolated across the configured ranges.
    pub fn new(n_assets: usize, n_days: usize, seed: u64) -> Self {
        let lerp = |lo: f64, hi: f64, i: usize| {
            if n_assets <= 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (n_assets - 1) as f64
            }
        };
        Self {
            n_days,
            seed,
            start_date: NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(),
            means: (0..n_assets).map(|i| lerp(2e-4, 6e-4, i)).collect(),
            vols: (0..n_assets).map(|i| lerp(0.008, 0.014, i)).collect(),
            correlation: 0.25,
            rf_rate: 1e-5,
            index_mean: 3e-4,
            index_vol: 0.01,
        }
    }

    pub fn n_assets(&self) -> usize {
        self.means.len()
    }

    /// Population covariance implied by the volatilities and the common
    /// correlation.
    pub fn true_cov(&self) -> DMatrix<f64> {
        let n = self.n_assets();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.vols[i] * self.vols[i]
            } else {
                self.correlation * self.vols[i] * self.vols[j]
            }
        })
    }

    pub fn true_mean(&self) -> DVector<f64> {
        DVector::from_vec(self.means.clone())
    }

    /// Population tangency weights `V^-1 (mu - rf e)`, normalized to sum 1.
    pub fn true_tangency_weights(&self) -> DVector<f64> {
        let cov = self.true_cov();
        let excess = self.true_mean().add_scalar(-self.rf_rate);
        let z = cov
            .cholesky()
            .expect("synthetic covariance is positive definite")
            .solve(&excess);
        let q = z.sum();
        z / q
    }

    /// Population maximum Sharpe ratio in daily units:
    /// `sqrt((mu - rf e)' V^-1 (mu - rf e))`.
    pub fn true_max_sharpe_daily(&self) -> f64 {
        let cov = self.true_cov();
        let excess = self.true_mean().add_scalar(-self.rf_rate);
        let z = cov
            .cholesky()
            .expect("synthetic covariance is positive definite")
            .solve(&excess);
        excess.dot(&z).sqrt()
    }
}

/// A generated market: the asset panel, a separate index series, and the
/// risk-free series, plus the population moments that produced them.
#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub panel: ReturnPanel,
    pub index: ReturnSeries,
    pub rf: RiskFreeSeries,
    pub spec: SyntheticSpec,
}

/// Draws the market. Dates are consecutive calendar days from the start
/// date; determinism is guaranteed by the ChaCha stream.
pub fn generate(spec: &SyntheticSpec) -> SyntheticMarket {
    let n = spec.n_assets();
    let t = spec.n_days;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let normal = StandardNormal;

    let chol = spec
        .true_cov()
        .cholesky()
        .expect("synthetic covariance is positive definite")
        .l();

    let dates: Vec<NaiveDate> = (0..t as i64)
        .map(|i| spec.start_date + chrono::Duration::days(i))
        .collect();

    let mut returns = DMatrix::zeros(t, n);
    let mut z = DVector::zeros(n);
    for i in 0..t {
        for k in 0..n {
            z[k] = normal.sample(&mut rng);
        }
        let shocked = &chol * &z;
        for j in 0..n {
            returns[(i, j)] = spec.means[j] + shocked[j];
        }
    }
    let symbols: Vec<String> = (1..=n).map(|i| format!("SYN{i}")).collect();
    let panel = ReturnPanel::new(dates.clone(), symbols, returns)
        .expect("generated panel satisfies invariants");

    let index_values: Vec<f64> = (0..t)
        .map(|_| {
            let shock: f64 = normal.sample(&mut rng);
            spec.index_mean + spec.index_vol * shock
        })
        .collect();
    let index = ReturnSeries {
        name: "INDEX".to_string(),
        dates: dates.clone(),
        values: index_values,
    };

    let rf = RiskFreeSeries::new(dates, vec![spec.rf_rate; t])
        .expect("constant risk-free series is valid");

    SyntheticMarket {
        panel,
        index,
        rf,
        spec: spec.clone(),
    }
}
