//! Price and return data: loading, alignment, and transforms.
//!
//! All prices are adjusted closes; all returns are daily natural-log returns.
//! Risk-free rates are stored as decimal fractions per day regardless of the
//! source file's convention.

mod csv_io;
pub mod fetch;

pub use csv_io::{load_price_csv, load_risk_free, CsvSchema};

use chrono::NaiveDate;
use nalgebra::DMatrix;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path} line {line}: {message}")]
    BadRow {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: missing required column '{column}'")]
    MissingColumn { path: String, column: String },
    #[error("duplicate date {date}")]
    DuplicateDate { date: NaiveDate },
    #[error("non-positive price {value} for {symbol} on {date}")]
    NonPositivePrice {
        symbol: String,
        date: NaiveDate,
        value: f64,
    },
    #[error("panels share no common dates")]
    EmptyIntersection,
    #[error("need at least {required} rows, got {actual}")]
    TooFewRows { required: usize, actual: usize },
    #[error("dates must be strictly increasing (violation at {date})")]
    UnsortedDates { date: NaiveDate },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("non-finite value for {symbol} on {date}")]
    NonFiniteValue { symbol: String, date: NaiveDate },
    #[error("no panels to align")]
    NoPanels,
    #[error("symbol '{0}' not present in panel")]
    UnknownSymbol(String),
    #[error("HTTP request for {symbol} failed: {message}")]
    Http { symbol: String, message: String },
    #[error("empty response for {symbol}")]
    EmptyResponse { symbol: String },
    #[error("all symbols failed to fetch: {0}")]
    AllSymbolsFailed(String),
}

/// Date-indexed matrix of adjusted closing prices, one column per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    symbols: Vec<String>,
    prices: DMatrix<f64>,
}

impl PricePanel {
    /// Builds a panel, enforcing strictly increasing dates, positive finite
    /// prices, and consistent dimensions.
    pub fn new(
        dates: Vec<NaiveDate>,
        symbols: Vec<String>,
        prices: DMatrix<f64>,
    ) -> Result<Self, IngestError> {
        if prices.nrows() != dates.len() || prices.ncols() != symbols.len() {
            return Err(IngestError::DimensionMismatch {
                context: format!(
                    "{} dates x {} symbols vs {}x{} price matrix",
                    dates.len(),
                    symbols.len(),
                    prices.nrows(),
                    prices.ncols()
                ),
            });
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(if w[1] == w[0] {
                    IngestError::DuplicateDate { date: w[1] }
                } else {
                    IngestError::UnsortedDates { date: w[1] }
                });
            }
        }
        for (i, date) in dates.iter().enumerate() {
            for (j, symbol) in symbols.iter().enumerate() {
                let p = prices[(i, j)];
                if !p.is_finite() {
                    return Err(IngestError::NonFiniteValue {
                        symbol: symbol.clone(),
                        date: *date,
                    });
                }
                if p <= 0.0 {
                    return Err(IngestError::NonPositivePrice {
                        symbol: symbol.clone(),
                        date: *date,
                        value: p,
                    });
                }
            }
        }
        Ok(Self {
            dates,
            symbols,
            prices,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.symbols.len()
    }
}

/// Date-indexed matrix of daily ln returns, one column per asset. Row `t`
/// holds the return realized from date `t-1`'s close to date `t`'s close and
/// is dated at the later date.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    symbols: Vec<String>,
    returns: DMatrix<f64>,
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        symbols: Vec<String>,
        returns: DMatrix<f64>,
    ) -> Result<Self, IngestError> {
        if returns.nrows() != dates.len() || returns.ncols() != symbols.len() {
            return Err(IngestError::DimensionMismatch {
                context: format!(
                    "{} dates x {} symbols vs {}x{} return matrix",
                    dates.len(),
                    symbols.len(),
                    returns.nrows(),
                    returns.ncols()
                ),
            });
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(if w[1] == w[0] {
                    IngestError::DuplicateDate { date: w[1] }
                } else {
                    IngestError::UnsortedDates { date: w[1] }
                });
            }
        }
        for (i, date) in dates.iter().enumerate() {
            for (j, symbol) in symbols.iter().enumerate() {
                if !returns[(i, j)].is_finite() {
                    return Err(IngestError::NonFiniteValue {
                        symbol: symbol.clone(),
                        date: *date,
                    });
                }
            }
        }
        Ok(Self {
            dates,
            symbols,
            returns,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.symbols.len()
    }

    /// Extracts one asset's return series by symbol.
    pub fn column_series(&self, symbol: &str) -> Result<ReturnSeries, IngestError> {
        let j = self
            .symbols
            .iter()
            .position(|s| s == symbol)
            .ok_or_else(|| IngestError::UnknownSymbol(symbol.to_string()))?;
        Ok(ReturnSeries {
            name: symbol.to_string(),
            dates: self.dates.clone(),
            values: self.returns.column(j).iter().copied().collect(),
        })
    }

    /// Restricts the panel to the given date subset (which must be a subset
    /// of the panel's dates, in increasing order).
    pub fn restrict_to(&self, dates: &[NaiveDate]) -> Result<ReturnPanel, IngestError> {
        let mut rows = Vec::with_capacity(dates.len());
        let mut cursor = 0usize;
        for d in dates {
            while cursor < self.dates.len() && self.dates[cursor] < *d {
                cursor += 1;
            }
            if cursor >= self.dates.len() || self.dates[cursor] != *d {
                return Err(IngestError::DimensionMismatch {
                    context: format!("date {d} not present in panel"),
                });
            }
            rows.push(cursor);
        }
        let mut m = DMatrix::zeros(rows.len(), self.n_assets());
        for (i, &r) in rows.iter().enumerate() {
            m.set_row(i, &self.returns.row(r));
        }
        ReturnPanel::new(dates.to_vec(), self.symbols.clone(), m)
    }
}

/// Single named daily return series (used for index benchmarks).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub name: String,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl ReturnSeries {
    pub fn value_on(&self, date: NaiveDate) -> Option<f64> {
        self.dates
            .binary_search(&date)
            .ok()
            .map(|i| self.values[i])
    }
}

/// Daily risk-free rate series, stored as decimal fractions per day.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskFreeSeries {
    dates: Vec<NaiveDate>,
    rates: Vec<f64>,
}

impl RiskFreeSeries {
    pub fn new(dates: Vec<NaiveDate>, rates: Vec<f64>) -> Result<Self, IngestError> {
        if dates.len() != rates.len() {
            return Err(IngestError::DimensionMismatch {
                context: format!("{} dates vs {} rates", dates.len(), rates.len()),
            });
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(if w[1] == w[0] {
                    IngestError::DuplicateDate { date: w[1] }
                } else {
                    IngestError::UnsortedDates { date: w[1] }
                });
            }
        }
        if let Some(i) = rates.iter().position(|r| !r.is_finite()) {
            return Err(IngestError::NonFiniteValue {
                symbol: "rf".to_string(),
                date: dates[i],
            });
        }
        Ok(Self { dates, rates })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn rate_on(&self, date: NaiveDate) -> Option<f64> {
        self.dates.binary_search(&date).ok().map(|i| self.rates[i])
    }

    pub fn restrict_to(&self, dates: &[NaiveDate]) -> Result<RiskFreeSeries, IngestError> {
        let mut rates = Vec::with_capacity(dates.len());
        for d in dates {
            match self.rate_on(*d) {
                Some(r) => rates.push(r),
                None => {
                    return Err(IngestError::DimensionMismatch {
                        context: format!("risk-free rate missing for {d}"),
                    })
                }
            }
        }
        RiskFreeSeries::new(dates.to_vec(), rates)
    }
}

/// Merges panels onto the strict intersection of their date sets. Column
/// order follows input order.
pub fn align_panels(panels: &[PricePanel]) -> Result<PricePanel, IngestError> {
    if panels.is_empty() {
        return Err(IngestError::NoPanels);
    }
    if panels.iter().any(|p| p.n_rows() == 0) {
        return Err(IngestError::TooFewRows {
            required: 1,
            actual: 0,
        });
    }
    let mut common: BTreeSet<NaiveDate> = panels[0].dates.iter().copied().collect();
    for p in &panels[1..] {
        let theirs: BTreeSet<NaiveDate> = p.dates.iter().copied().collect();
        common = common.intersection(&theirs).copied().collect();
    }
    if common.is_empty() {
        return Err(IngestError::EmptyIntersection);
    }
    let dates: Vec<NaiveDate> = common.into_iter().collect();
    let n_cols: usize = panels.iter().map(|p| p.n_assets()).sum();
    let mut symbols = Vec::with_capacity(n_cols);
    let mut prices = DMatrix::zeros(dates.len(), n_cols);
    let mut col = 0usize;
    for p in panels {
        for (j, sym) in p.symbols.iter().enumerate() {
            symbols.push(sym.clone());
            for (i, d) in dates.iter().enumerate() {
                // dates are a subset of p.dates, so the lookup cannot fail
                let row = p.dates.binary_search(d).expect("intersection date");
                prices[(i, col)] = p.prices[(row, j)];
            }
            col += 1;
        }
    }
    PricePanel::new(dates, symbols, prices)
}

/// Converts a price panel into daily ln returns, dated at the later date.
pub fn to_ln_returns(panel: &PricePanel) -> Result<ReturnPanel, IngestError> {
    if panel.n_rows() < 2 {
        return Err(IngestError::TooFewRows {
            required: 2,
            actual: panel.n_rows(),
        });
    }
    let t = panel.n_rows() - 1;
    let n = panel.n_assets();
    let mut returns = DMatrix::zeros(t, n);
    for i in 0..t {
        for j in 0..n {
            returns[(i, j)] = (panel.prices[(i + 1, j)] / panel.prices[(i, j)]).ln();
        }
    }
    ReturnPanel::new(
        panel.dates[1..].to_vec(),
        panel.symbols.clone(),
        returns,
    )
}
