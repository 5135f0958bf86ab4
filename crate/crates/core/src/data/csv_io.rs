//! CSV readers for price panels and risk-free series.

use super::{IngestError, PricePanel, RiskFreeSeries};
use chrono::NaiveDate;
use nalgebra::DMatrix;
use std::path::Path;

/// Column mapping for a price CSV. Wide files (`date,sym1,sym2,...`) need no
/// configuration beyond the defaults.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    /// Name of the date column.
    pub date_column: String,
    /// chrono format string; `None` means ISO-8601 (`%Y-%m-%d`).
    pub date_format: Option<String>,
    /// Subset of symbol columns to load, in the requested order. `None`
    /// loads every non-date column in header order.
    pub symbols: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            date_column: "date".to_string(),
            date_format: None,
            symbols: None,
        }
    }
}

fn parse_date(raw: &str, schema: &CsvSchema) -> Result<NaiveDate, String> {
    let fmt = schema.date_format.as_deref().unwrap_or("%Y-%m-%d");
    NaiveDate::parse_from_str(raw.trim(), fmt)
        .map_err(|e| format!("unparseable date '{raw}': {e}"))
}

/// Loads adjusted closing prices from a CSV file. Rows are sorted by date;
/// duplicate dates and non-positive prices are rejected.
pub fn load_price_csv(path: &Path, schema: &CsvSchema) -> Result<PricePanel, IngestError> {
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => IngestError::Io {
                path: path_str.clone(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => IngestError::Csv {
                path: path_str.clone(),
                source: e,
            },
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::Csv {
            path: path_str.clone(),
            source: e,
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let date_idx = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(&schema.date_column))
        .ok_or_else(|| IngestError::MissingColumn {
            path: path_str.clone(),
            column: schema.date_column.clone(),
        })?;

    let symbol_cols: Vec<(String, usize)> = match &schema.symbols {
        Some(wanted) => {
            let mut cols = Vec::with_capacity(wanted.len());
            for sym in wanted {
                let idx = headers.iter().position(|h| h == sym).ok_or_else(|| {
                    IngestError::MissingColumn {
                        path: path_str.clone(),
                        column: sym.clone(),
                    }
                })?;
                cols.push((sym.clone(), idx));
            }
            cols
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != date_idx)
            .map(|(i, h)| (h.clone(), i))
            .collect(),
    };
    if symbol_cols.is_empty() {
        return Err(IngestError::MissingColumn {
            path: path_str,
            column: "<any symbol>".to_string(),
        });
    }

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Csv {
            path: path_str.clone(),
            source: e,
        })?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(rows.len() as u64 + 2);
        let raw_date = record.get(date_idx).ok_or_else(|| IngestError::BadRow {
            path: path_str.clone(),
            line,
            message: "missing date field".to_string(),
        })?;
        let date = parse_date(raw_date, schema).map_err(|message| IngestError::BadRow {
            path: path_str.clone(),
            line,
            message,
        })?;
        let mut prices = Vec::with_capacity(symbol_cols.len());
        for (sym, idx) in &symbol_cols {
            let raw = record.get(*idx).ok_or_else(|| IngestError::BadRow {
                path: path_str.clone(),
                line,
                message: format!("missing value for {sym}"),
            })?;
            let value: f64 = raw.parse().map_err(|_| IngestError::BadRow {
                path: path_str.clone(),
                line,
                message: format!("unparseable price '{raw}' for {sym}"),
            })?;
            prices.push(value);
        }
        rows.push((date, prices));
    }

    rows.sort_by_key(|(d, _)| *d);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(IngestError::DuplicateDate { date: w[0].0 });
        }
    }

    let dates: Vec<NaiveDate> = rows.iter().map(|(d, _)| *d).collect();
    let flat: Vec<f64> = rows.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let symbols: Vec<String> = symbol_cols.into_iter().map(|(s, _)| s).collect();
    PricePanel::new(
        dates,
        symbols.clone(),
        DMatrix::from_row_slice(rows.len(), symbols.len(), &flat),
    )
}

/// Loads a `date,rf` CSV where `rf` is in percent per day (the French
/// data-library convention) and converts it to decimal fractions.
pub fn load_risk_free(path: &Path) -> Result<RiskFreeSeries, IngestError> {
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => IngestError::Io {
                path: path_str.clone(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => IngestError::Csv {
                path: path_str.clone(),
                source: e,
            },
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::Csv {
            path: path_str.clone(),
            source: e,
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let date_idx = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("date"))
        .ok_or_else(|| IngestError::MissingColumn {
            path: path_str.clone(),
            column: "date".to_string(),
        })?;
    let rf_idx = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("rf"))
        .ok_or_else(|| IngestError::MissingColumn {
            path: path_str.clone(),
            column: "rf".to_string(),
        })?;

    let schema = CsvSchema::default();
    let mut rows: Vec<(NaiveDate, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Csv {
            path: path_str.clone(),
            source: e,
        })?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(rows.len() as u64 + 2);
        let date = parse_date(
            record.get(date_idx).unwrap_or_default(),
            &schema,
        )
        .map_err(|message| IngestError::BadRow {
            path: path_str.clone(),
            line,
            message,
        })?;
        let raw = record.get(rf_idx).unwrap_or_default();
        let percent: f64 = raw.parse().map_err(|_| IngestError::BadRow {
            path: path_str.clone(),
            line,
            message: format!("unparseable rf '{raw}'"),
        })?;
        rows.push((date, percent / 100.0));
    }
    rows.sort_by_key(|(d, _)| *d);
    let dates: Vec<NaiveDate> = rows.iter().map(|(d, _)| *d).collect();
    let rates: Vec<f64> = rows.iter().map(|(_, r)| *r).collect();
    RiskFreeSeries::new(dates, rates)
}
