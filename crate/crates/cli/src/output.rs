//! Output file formats and their readers.
//!
//! Money is written with exactly six decimals, rounded half-to-even. JSON
//! money fields are numbers carrying that same literal text.

use std::borrow::Cow;
use std::fmt::{self, Write as _};
use std::io::Read;
use std::str::FromStr;

use dailypnl::analytics::{BenchmarkReport, ConcentrationReport, SummaryStats, TokenBenchmark};
use dailypnl::model::{format_money, round_money, MONEY_PLACES};
use dailypnl::{Date, Diagnostic, LedgerResult, Money, Price, Quantity};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::Number;

use crate::{CliError, Result};

pub const LEDGERS_FILE: &str = "ledgers.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.txt";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONCENTRATION_FILE: &str = "concentration.json";
pub const TREASURY_FILE: &str = "treasury.csv";
pub const DIST_FILE: &str = "dist.csv";
pub const BENCHMARK_FILE: &str = "benchmark.json";

pub const LEDGER_HEADER: [&str; 9] = [
    "wallet",
    "token",
    "date",
    "quantity",
    "price",
    "cost_basis",
    "realized_cum",
    "unrealized",
    "total",
];
pub const DIST_HEADER: [&str; 4] = ["platform", "date", "bucket_label", "share"];
pub const TREASURY_HEADER: [&str; 3] = ["platform", "date", "aum"];

/// Money at six decimals without an intermediate allocation.
struct Fixed(Money);

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.*}", MONEY_PLACES as usize, round_money(self.0, MONEY_PLACES).value())
    }
}

fn csv_field(s: &str) -> Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        Cow::Owned(format!("\"{}\"", s.replace('"', "\"\"")))
    } else {
        Cow::Borrowed(s)
    }
}

pub fn ledger_header() -> String {
    let mut s = LEDGER_HEADER.join(",");
    s.push('\n');
    s
}

/// Append one CSV row per ledger day.
pub fn push_ledger_rows(out: &mut String, ledger: &LedgerResult) {
    let wallet = csv_field(&ledger.key.wallet);
    let token = csv_field(&ledger.key.token);
    for p in &ledger.points {
        writeln!(
            out,
            "{wallet},{token},{},{},{},{},{},{},{}",
            p.date,
            p.quantity,
            p.price,
            Fixed(p.cost_basis),
            Fixed(p.realized_cum),
            Fixed(p.unrealized),
            Fixed(p.total)
        )
        .expect("writing to a String");
    }
}

/// A parsed `ledgers.csv` row.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct LedgerRow {
    pub wallet: String,
    pub token: String,
    pub date: Date,
    #[serde(deserialize_with = "from_text")]
    pub quantity: Quantity,
    #[serde(deserialize_with = "from_text")]
    pub price: Price,
    #[serde(deserialize_with = "from_text")]
    pub cost_basis: Money,
    #[serde(deserialize_with = "from_text")]
    pub realized_cum: Money,
    #[serde(deserialize_with = "from_text")]
    pub unrealized: Money,
    #[serde(deserialize_with = "from_text")]
    pub total: Money,
}

fn from_text<'de, D, T>(d: D) -> std::result::Result<T, D::Error>
where
    D: serde::Deserializer<'de>,
    T: FromStr,
    T::Err: fmt::Display,
{
    let s: Cow<'de, str> = Deserialize::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(source: R, header: &[&str], name: &str) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_reader(source);
    let found = reader.headers().map_err(|e| CliError::Input(format!("{name}: {e}")))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::Input(format!("{name}: unexpected header")));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(|e| CliError::Input(format!("{name}: {e}"))))
        .collect()
}

pub fn read_ledgers<R: Read>(source: R) -> Result<Vec<LedgerRow>> {
    read_csv(source, &LEDGER_HEADER, LEDGERS_FILE)
}

pub fn money_number(value: Money) -> Number {
    Number::from_str(&format_money(value)).expect("fixed-point text is a JSON number")
}

fn exact_number(value: Decimal) -> Number {
    Number::from_str(&value.normalize().to_string()).expect("decimal text is a JSON number")
}

/// One `summary.json` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub platform: String,
    pub users: usize,
    pub mean: Number,
    pub median: Number,
    pub min: Number,
    pub max: Number,
    pub pct_profitable: f64,
    pub pct_loss: f64,
    pub pct_zero: f64,
}

impl SummaryRecord {
    pub fn new(platform: &str, s: &SummaryStats) -> Self {
        SummaryRecord {
            platform: platform.to_string(),
            users: s.users,
            mean: money_number(s.mean),
            median: money_number(s.median),
            min: money_number(s.min),
            max: money_number(s.max),
            pct_profitable: s.pct_profitable,
            pct_loss: s.pct_loss,
            pct_zero: s.pct_zero,
        }
    }
}

/// One `concentration.json` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRecord {
    pub platform: String,
    pub winners: usize,
    pub top_fraction: Number,
    pub top_count: usize,
    pub top_sum: Number,
    pub winners_sum: Number,
    pub top_share: Option<f64>,
    pub share_defined: bool,
}

impl ConcentrationRecord {
    pub fn new(platform: &str, c: &ConcentrationReport) -> Self {
        ConcentrationRecord {
            platform: platform.to_string(),
            winners: c.winners,
            top_fraction: exact_number(c.top_fraction),
            top_count: c.top_count,
            top_sum: money_number(c.top_sum),
            winners_sum: money_number(c.winners_sum),
            top_share: c.top_share,
            share_defined: c.top_share.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub token: String,
    pub first: Date,
    pub last: Date,
    pub max_drawdown: f64,
    pub decline_from_ath: f64,
    pub ath_date: Date,
}

impl From<&TokenBenchmark> for TokenRecord {
    fn from(t: &TokenBenchmark) -> Self {
        TokenRecord {
            token: t.token.clone(),
            first: t.first,
            last: t.last,
            max_drawdown: t.max_drawdown,
            decline_from_ath: t.decline_from_ath,
            ath_date: t.ath_date,
        }
    }
}

/// `benchmark.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkFile {
    pub benchmark: TokenRecord,
    pub average_decline: Option<f64>,
    pub tokens: Vec<TokenRecord>,
    pub skipped: Vec<String>,
}

impl From<&BenchmarkReport> for BenchmarkFile {
    fn from(r: &BenchmarkReport) -> Self {
        BenchmarkFile {
            benchmark: (&r.benchmark).into(),
            average_decline: r.average_decline,
            tokens: r.tokens.iter().map(TokenRecord::from).collect(),
            skipped: r.skipped.clone(),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report values serialize");
    bytes.push(b'\n');
    bytes
}

pub fn from_json<T: for<'de> Deserialize<'de>, R: Read>(source: R, name: &str) -> Result<T> {
    serde_json::from_reader(source).map_err(|e| CliError::Input(format!("{name}: {e}")))
}

/// A parsed `dist.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistRow {
    pub platform: String,
    pub date: Date,
    pub bucket_label: String,
    pub share: f64,
}

pub fn write_dist(rows: &[DistRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DIST_HEADER).expect("writing to memory");
    for r in rows {
        w.serialize((&r.platform, r.date, &r.bucket_label, r.share)).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

pub fn read_dist<R: Read>(source: R) -> Result<Vec<DistRow>> {
    read_csv(source, &DIST_HEADER, DIST_FILE)
}

pub fn write_treasury(rows: &[(String, Date, Money)]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TREASURY_HEADER).expect("writing to memory");
    for (platform, date, aum) in rows {
        w.write_record([platform.clone(), date.to_string(), format_money(*aum)])
            .expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

/// Row counts per input table, then one line per diagnostic.
pub fn diagnostics_text(header: &[String], diagnostics: &[Diagnostic]) -> String {
    let mut out = String::new();
    for line in header {
        writeln!(out, "# {line}").expect("writing to a String");
    }
    for d in diagnostics {
        writeln!(out, "{d}").expect("writing to a String");
    }
    out
}
