//! Readers for the three input tables: balances, prices and price caps.
//!
//! Row-level problems (bad values, duplicates, negative numbers) are
//! reported as [`Diagnostic`]s and the row is dropped. Structural problems
//! (missing or wrong header, wrong column count) abort the parse.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::model::{BalanceRecord, Date, Price, PriceObservation, Quantity};

pub const BALANCES_HEADER: [&str; 5] = ["date", "wallet", "account", "token", "balance"];
pub const PRICES_HEADER: [&str; 3] = ["timestamp", "token", "price"];
pub const CAPS_HEADER: [&str; 2] = ["token", "max_price"];

/// Timestamp layout of the price table.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{table}: missing header, expected `{expected}`")]
    MissingHeader { table: &'static str, expected: String },
    #[error("{table}: header `{found}` does not match `{expected}`")]
    WrongHeader {
        table: &'static str,
        found: String,
        expected: String,
    },
    #[error("{table} line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        table: &'static str,
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("caps line {line}: duplicate cap for token `{token}`")]
    DuplicateCap { line: u64, token: String },
    #[error("caps line {line}: cap for `{token}` must be a positive number, got `{value}`")]
    InvalidCap { line: u64, token: String, value: String },
    #[error("{table}: {source}")]
    Csv {
        table: &'static str,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DiagnosticKind {
    Unparseable,
    NegativeValue,
    DuplicateKey,
    UnpricedToken,
    RecordsAfterEnd,
    LedgerSkipped,
    UnmatchedSell,
    Summary,
}

impl DiagnosticKind {
    pub fn label(self) -> &'static str {
        match self {
            DiagnosticKind::Unparseable => "unparseable",
            DiagnosticKind::NegativeValue => "negative-value",
            DiagnosticKind::DuplicateKey => "duplicate-key",
            DiagnosticKind::UnpricedToken => "unpriced-token",
            DiagnosticKind::RecordsAfterEnd => "after-end",
            DiagnosticKind::LedgerSkipped => "ledger-skipped",
            DiagnosticKind::UnmatchedSell => "unmatched-sell",
            DiagnosticKind::Summary => "summary",
        }
    }
}

/// A data-quality note. `line` is the 1-based physical line in the source
/// file when the note concerns a single row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub table: &'static str,
    pub line: Option<u64>,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    pub fn row(table: &'static str, line: u64, kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            table,
            line: Some(line),
            kind,
            message: message.into(),
        }
    }

    pub fn general(table: &'static str, kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            table,
            line: None,
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "[{}] {}:{}: {}", self.kind.label(), self.table, line, self.message),
            None => write!(f, "[{}] {}: {}", self.kind.label(), self.table, self.message),
        }
    }
}

/// Accepted rows of one table plus the diagnostics for every dropped row.
///
/// `records.len() + rejected == rows_read` always holds; each rejected row
/// has exactly one diagnostic.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub diagnostics: Vec<Diagnostic>,
    pub rows_read: usize,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed {
            records: Vec::new(),
            diagnostics: Vec::new(),
            rows_read: 0,
        }
    }
}

impl<T> Parsed<T> {
    pub fn rejected(&self) -> usize {
        self.diagnostics.len()
    }
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(source)
}

/// Reads the header row and then hands every data row (with its line
/// number) to `row`.
fn for_each_row<R, F>(source: R, table: &'static str, header: &[&str], mut row: F) -> Result<usize, IngestError>
where
    R: Read,
    F: FnMut(u64, &csv::StringRecord),
{
    let mut rdr = reader(source);
    let mut record = csv::StringRecord::new();
    let expected = header.join(",");
    let has_header = rdr
        .read_record(&mut record)
        .map_err(|source| IngestError::Csv { table, source })?;
    if !has_header {
        return Err(IngestError::MissingHeader { table, expected });
    }
    // Tolerate a UTF-8 byte order mark on the first field.
    let found: Vec<&str> = record
        .iter()
        .enumerate()
        .map(|(i, f)| if i == 0 { f.trim_start_matches('\u{feff}') } else { f })
        .collect();
    if found != header {
        return Err(IngestError::WrongHeader {
            table,
            found: found.join(","),
            expected,
        });
    }

    let mut rows = 0;
    loop {
        let more = rdr
            .read_record(&mut record)
            .map_err(|source| IngestError::Csv { table, source })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record.get(0) == Some("") {
            // Blank line.
            continue;
        }
        if record.len() != header.len() {
            return Err(IngestError::ColumnCount {
                table,
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        rows += 1;
        row(line, &record);
    }
    Ok(rows)
}

/// Parse `date,wallet,account,token,balance`.
///
/// Output is sorted by (wallet, account, token, date). When the same key
/// appears more than once the last occurrence wins and each earlier row is
/// reported as a duplicate.
pub fn parse_balances<R: Read>(source: R) -> Result<Parsed<BalanceRecord>, IngestError> {
    const TABLE: &str = "balances";
    let mut out = Parsed::default();
    let mut rows: Vec<(u64, BalanceRecord)> = Vec::new();

    out.rows_read = for_each_row(source, TABLE, &BALANCES_HEADER, |line, rec| {
        let date = match rec[0].parse::<Date>() {
            Ok(d) => d,
            Err(_) => {
                out.diagnostics.push(Diagnostic::row(
                    TABLE,
                    line,
                    DiagnosticKind::Unparseable,
                    format!("bad date `{}`", &rec[0]),
                ));
                return;
            }
        };
        if rec[1].is_empty() || rec[2].is_empty() || rec[3].is_empty() {
            out.diagnostics.push(Diagnostic::row(
                TABLE,
                line,
                DiagnosticKind::Unparseable,
                "empty wallet, account or token",
            ));
            return;
        }
        let balance = match Quantity::parse(&rec[4]) {
            Ok(q) => q,
            Err(e) => {
                out.diagnostics
                    .push(Diagnostic::row(TABLE, line, DiagnosticKind::Unparseable, e.to_string()));
                return;
            }
        };
        if balance.is_sign_negative() {
            out.diagnostics.push(Diagnostic::row(
                TABLE,
                line,
                DiagnosticKind::NegativeValue,
                format!("negative balance {}", balance),
            ));
            return;
        }
        rows.push((
            line,
            BalanceRecord {
                date,
                wallet: rec[1].to_string(),
                account: rec[2].to_string(),
                token: rec[3].to_string(),
                balance,
            },
        ));
    })?;

    // Stable sort keeps file order within equal keys, so the last of a run is the last occurrence.
    rows.sort_by(|(_, a), (_, b)| {
        (&a.wallet, &a.account, &a.token, a.date).cmp(&(&b.wallet, &b.account, &b.token, b.date))
    });
    let mut records: Vec<BalanceRecord> = Vec::with_capacity(rows.len());
    let mut last_line: Option<u64> = None;
    for (line, rec) in rows {
        if let (Some(prev), Some(prev_line)) = (records.last_mut(), last_line) {
            if prev.wallet == rec.wallet && prev.account == rec.account && prev.token == rec.token && prev.date == rec.date
            {
                out.diagnostics.push(Diagnostic::row(
                    TABLE,
                    prev_line,
                    DiagnosticKind::DuplicateKey,
                    format!(
                        "duplicate ({}, {}, {}, {}); superseded by line {}",
                        rec.wallet, rec.account, rec.token, rec.date, line
                    ),
                ));
                *prev = rec;
                last_line = Some(line);
                continue;
            }
        }
        records.push(rec);
        last_line = Some(line);
    }
    out.records = records;
    out.diagnostics.sort_by_key(|d| d.line);
    Ok(out)
}

/// Parse `timestamp,token,price`. Output is sorted by (token, timestamp);
/// observations sharing a timestamp are all kept.
pub fn parse_prices<R: Read>(source: R) -> Result<Parsed<PriceObservation>, IngestError> {
    const TABLE: &str = "prices";
    let mut out = Parsed::default();
    let mut records = Vec::new();

    out.rows_read = for_each_row(source, TABLE, &PRICES_HEADER, |line, rec| {
        let timestamp = match NaiveDateTime::parse_from_str(&rec[0], TIMESTAMP_FORMAT) {
            Ok(t) => t,
            Err(_) => {
                out.diagnostics.push(Diagnostic::row(
                    TABLE,
                    line,
                    DiagnosticKind::Unparseable,
                    format!("bad timestamp `{}`", &rec[0]),
                ));
                return;
            }
        };
        if rec[1].is_empty() {
            out.diagnostics
                .push(Diagnostic::row(TABLE, line, DiagnosticKind::Unparseable, "empty token"));
            return;
        }
        let price = match Price::parse(&rec[2]) {
            Ok(p) => p,
            Err(e) => {
                out.diagnostics
                    .push(Diagnostic::row(TABLE, line, DiagnosticKind::Unparseable, e.to_string()));
                return;
            }
        };
        if price.is_sign_negative() {
            out.diagnostics.push(Diagnostic::row(
                TABLE,
                line,
                DiagnosticKind::NegativeValue,
                format!("negative price {}", price),
            ));
            return;
        }
        records.push(PriceObservation {
            timestamp,
            token: rec[1].to_string(),
            price,
        });
    })?;

    records.sort_by(|a, b| (&a.token, a.timestamp).cmp(&(&b.token, b.timestamp)));
    out.records = records;
    Ok(out)
}

/// Per-token upper bound on admissible price observations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CapTable(BTreeMap<String, Price>);

impl CapTable {
    pub fn new() -> Self {
        CapTable::default()
    }

    pub fn get(&self, token: &str) -> Option<Price> {
        self.0.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Price)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl FromIterator<(String, Price)> for CapTable {
    fn from_iter<I: IntoIterator<Item = (String, Price)>>(iter: I) -> Self {
        CapTable(iter.into_iter().collect())
    }
}

/// Parse `token,max_price`. Any bad row is fatal: an ambiguous or
/// non-positive cap would silently change every median for that token.
pub fn parse_caps<R: Read>(source: R) -> Result<CapTable, IngestError> {
    const TABLE: &str = "caps";
    let mut caps = BTreeMap::new();
    let mut failure = None;
    for_each_row(source, TABLE, &CAPS_HEADER, |line, rec| {
        if failure.is_some() {
            return;
        }
        let token = rec[0].to_string();
        let cap = match Price::parse(&rec[1]) {
            Ok(p) if !p.is_zero() && !p.is_sign_negative() => p,
            _ => {
                failure = Some(IngestError::InvalidCap {
                    line,
                    token,
                    value: rec[1].to_string(),
                });
                return;
            }
        };
        if caps.insert(token.clone(), cap).is_some() {
            failure = Some(IngestError::DuplicateCap { line, token });
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(CapTable(caps)),
    }
}

/// Counts and cross-table checks over a parsed dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSummary {
    pub n_balance_records: usize,
    pub n_price_observations: usize,
    pub n_wallets: usize,
    pub n_accounts: usize,
    pub n_tokens: usize,
    pub n_priced_tokens: usize,
    pub n_caps: usize,
    pub balance_span: Option<(Date, Date)>,
    pub price_span: Option<(Date, Date)>,
    pub diagnostics: Vec<Diagnostic>,
}

impl DatasetSummary {
    /// Tokens held in the balance table that have no price observations.
    pub fn unpriced_tokens(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.kind == DiagnosticKind::UnpricedToken)
    }
}

pub fn validate_dataset(
    balances: &Parsed<BalanceRecord>,
    prices: &Parsed<PriceObservation>,
    caps: &CapTable,
) -> DatasetSummary {
    let wallets: BTreeSet<&str> = balances.records.iter().map(|r| r.wallet.as_str()).collect();
    let accounts: BTreeSet<(&str, &str)> = balances
        .records
        .iter()
        .map(|r| (r.wallet.as_str(), r.account.as_str()))
        .collect();
    let tokens: BTreeSet<&str> = balances.records.iter().map(|r| r.token.as_str()).collect();
    let priced: BTreeSet<&str> = prices.records.iter().map(|r| r.token.as_str()).collect();

    let span = |mut dates: Box<dyn Iterator<Item = Date> + '_>| {
        let first = dates.next()?;
        Some(dates.fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d))))
    };
    let balance_span = span(Box::new(balances.records.iter().map(|r| r.date)));
    let price_span = span(Box::new(prices.records.iter().map(|r| r.date())));

    let mut diagnostics = balances.diagnostics.clone();
    diagnostics.extend(prices.diagnostics.iter().cloned());
    for token in tokens.difference(&priced) {
        diagnostics.push(Diagnostic::general(
            "balances",
            DiagnosticKind::UnpricedToken,
            format!("token `{token}` has balances but no price observations; its ledgers are skipped"),
        ));
    }
    if wallets.is_empty() {
        diagnostics.push(Diagnostic::general("balances", DiagnosticKind::Summary, "zero wallets in balance table"));
    }

    DatasetSummary {
        n_balance_records: balances.records.len(),
        n_price_observations: prices.records.len(),
        n_wallets: wallets.len(),
        n_accounts: accounts.len(),
        n_tokens: tokens.len(),
        n_priced_tokens: priced.len(),
        n_caps: caps.len(),
        balance_span,
        price_span,
        diagnostics,
    }
}

/// Inverse of [`parse_balances`] for accepted records.
pub fn write_balances<W: std::io::Write>(records: &[BalanceRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BALANCES_HEADER)?;
    for r in records {
        w.write_record([
            r.date.to_string(),
            r.wallet.clone(),
            r.account.clone(),
            r.token.clone(),
            r.balance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`parse_prices`] for accepted observations.
pub fn write_prices<W: std::io::Write>(records: &[PriceObservation], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PRICES_HEADER)?;
    for r in records {
        w.write_record([
            r.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            r.token.clone(),
            r.price.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`parse_caps`].
pub fn write_caps<W: std::io::Write>(caps: &CapTable, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CAPS_HEADER)?;
    for (token, cap) in caps.iter() {
        w.write_record([token.to_string(), cap.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
