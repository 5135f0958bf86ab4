//! HTTP retrieval of daily adjusted-close bars, with on-disk caching.
//!
//! The provider is configurable: a base URL plus a query template, and a
//! pluggable parser for whatever payload the provider serves. Fetched
//! payloads are cached as CSV snapshots keyed by symbol and date range so a
//! backtest can be reproduced after the provider's data drifts.

use super::{align_panels, IngestError, PricePanel};
use chrono::NaiveDate;
use nalgebra::DMatrix;
use std::path::PathBuf;

/// Converts a provider response body into `(date, adjusted_close)` rows.
pub trait ResponseParser: Sync {
    fn parse(&self, symbol: &str, body: &str) -> Result<Vec<(NaiveDate, f64)>, IngestError>;
}

/// Parser for CSV payloads with a date column and a price column.
#[derive(Debug, Clone)]
pub struct CsvResponseParser {
    pub date_column: String,
    /// Tried in order; the first present column wins.
    pub price_columns: Vec<String>,
}

impl Default for CsvResponseParser {
    fn default() -> Self {
        Self {
            date_column: "date".to_string(),
            price_columns: vec!["adj_close".to_string(), "close".to_string()],
        }
    }
}

impl ResponseParser for CsvResponseParser {
    fn parse(&self, symbol: &str, body: &str) -> Result<Vec<(NaiveDate, f64)>, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| IngestError::Http {
                symbol: symbol.to_string(),
                message: format!("bad CSV header: {e}"),
            })?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let date_idx = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(&self.date_column))
            .ok_or_else(|| IngestError::MissingColumn {
                path: format!("<response for {symbol}>"),
                column: self.date_column.clone(),
            })?;
        let price_idx = self
            .price_columns
            .iter()
            .find_map(|want| headers.iter().position(|h| h.eq_ignore_ascii_case(want)))
            .ok_or_else(|| IngestError::MissingColumn {
                path: format!("<response for {symbol}>"),
                column: self.price_columns.join("|"),
            })?;
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| IngestError::Http {
                symbol: symbol.to_string(),
                message: format!("bad CSV row {}: {e}", i + 2),
            })?;
            let date = NaiveDate::parse_from_str(
                record.get(date_idx).unwrap_or_default(),
                "%Y-%m-%d",
            )
            .map_err(|e| IngestError::BadRow {
                path: format!("<response for {symbol}>"),
                line: i as u64 + 2,
                message: format!("unparseable date: {e}"),
            })?;
            let price: f64 = record
                .get(price_idx)
                .unwrap_or_default()
                .parse()
                .map_err(|_| IngestError::BadRow {
                    path: format!("<response for {symbol}>"),
                    line: i as u64 + 2,
                    message: "unparseable price".to_string(),
                })?;
            rows.push((date, price));
        }
        Ok(rows)
    }
}

/// A daily-bar HTTP provider: base URL, query template, payload parser, and
/// an optional cache directory.
pub struct HttpProvider<P: ResponseParser = CsvResponseParser> {
    pub base_url: String,
    /// Query template with `{symbol}`, `{start}`, `{end}` placeholders,
    /// appended to the base URL.
    pub query_template: String,
    pub parser: P,
    pub cache_dir: Option<PathBuf>,
}

impl HttpProvider<CsvResponseParser> {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            query_template: "?symbol={symbol}&start={start}&end={end}".to_string(),
            parser: CsvResponseParser::default(),
            cache_dir: None,
        }
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }
}

/// Outcome of a multi-symbol fetch: the merged panel of every symbol that
/// succeeded, plus per-symbol failures.
#[derive(Debug)]
pub struct FetchOutcome {
    pub panel: PricePanel,
    pub failures: Vec<(String, IngestError)>,
}

impl<P: ResponseParser> HttpProvider<P> {
    fn url_for(&self, symbol: &str, start: NaiveDate, end: NaiveDate) -> String {
        let query = self
            .query_template
            .replace("{symbol}", symbol)
            .replace("{start}", &start.format("%Y-%m-%d").to_string())
            .replace("{end}", &end.format("%Y-%m-%d").to_string());
        format!("{}{}", self.base_url, query)
    }

    fn cache_path(&self, symbol: &str, start: NaiveDate, end: NaiveDate) -> Option<PathBuf> {
        self.cache_dir
            .as_ref()
            .map(|dir| dir.join(format!("{symbol}_{start}_{end}.csv")))
    }

    fn fetch_body(
        &self,
        symbol: &str,
        start: NaiveDate,
        end: NaiveDate,
    ) -> Result<String, IngestError> {
        if let Some(path) = self.cache_path(symbol, start, end) {
            if path.exists() {
                return std::fs::read_to_string(&path).map_err(|e| IngestError::Io {
                    path: path.display().to_string(),
                    source: e,
                });
            }
        }
        let url = self.url_for(symbol, start, end);
        let mut response = ureq::get(&url).call().map_err(|e| IngestError::Http {
            symbol: symbol.to_string(),
            message: e.to_string(),
        })?;
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| IngestError::Http {
                symbol: symbol.to_string(),
                message: format!("failed to read body: {e}"),
            })?;
        if body.trim().is_empty() {
            return Err(IngestError::EmptyResponse {
                symbol: symbol.to_string(),
            });
        }
        if let Some(path) = self.cache_path(symbol, start, end) {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| IngestError::Io {
                    path: parent.display().to_string(),
                    source: e,
                })?;
            }
            std::fs::write(&path, &body).map_err(|e| IngestError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        }
        Ok(body)
    }

    fn fetch_one(
        &self,
        symbol: &str,
        start: NaiveDate,
        end: NaiveDate,
    ) -> Result<PricePanel, IngestError> {
        let body = self.fetch_body(symbol, start, end)?;
        let mut rows = self.parser.parse(symbol, &body)?;
        if rows.is_empty() {
            return Err(IngestError::EmptyResponse {
                symbol: symbol.to_string(),
            });
        }
        rows.sort_by_key(|(d, _)| *d);
        let dates: Vec<NaiveDate> = rows.iter().map(|(d, _)| *d).collect();
        let prices: Vec<f64> = rows.iter().map(|(_, p)| *p).collect();
        PricePanel::new(
            dates,
            vec![symbol.to_string()],
            DMatrix::from_column_slice(prices.len(), 1, &prices),
        )
    }
}

/// Fetches each symbol concurrently and merges the successes onto their
/// common dates (columns in the requested symbol order). Fails only when
/// every symbol fails.
pub fn fetch_prices<P: ResponseParser>(
    provider: &HttpProvider<P>,
    symbols: &[String],
    start: NaiveDate,
    end: NaiveDate,
) -> Result<FetchOutcome, IngestError> {
    let results: Vec<Result<PricePanel, IngestError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = symbols
            .iter()
            .map(|sym| scope.spawn(move || provider.fetch_one(sym, start, end)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fetch thread panicked"))
            .collect()
    });

    let mut panels = Vec::new();
    let mut failures = Vec::new();
    for (sym, result) in symbols.iter().zip(results) {
        match result {
            Ok(panel) => panels.push(panel),
            Err(e) => failures.push((sym.clone(), e)),
        }
    }
    if panels.is_empty() {
        let summary = failures
            .iter()
            .map(|(s, e)| format!("{s}: {e}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(IngestError::AllSymbolsFailed(summary));
    }
    let panel = align_panels(&panels)?;
    Ok(FetchOutcome { panel, failures })
}
