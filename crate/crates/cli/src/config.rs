use std::path::PathBuf;

use dailypnl::analytics::default_boundaries;
use dailypnl::{Date, Money};
use rust_decimal::Decimal;

use crate::{CliError, Result};

/// Everything a report command needs to know.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub balances: Option<PathBuf>,
    pub prices: PathBuf,
    pub caps: Option<PathBuf>,
    pub group: Option<PathBuf>,
    pub out: PathBuf,
    /// Analysis end date; defaults to the last date present in the inputs.
    pub snapshot: Option<Date>,
    pub buckets: Vec<Money>,
    pub top_fraction: Decimal,
    pub benchmark: Option<String>,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
}

impl RunConfig {
    pub fn new(prices: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            balances: None,
            prices: prices.into(),
            caps: None,
            group: None,
            out: out.into(),
            snapshot: None,
            buckets: default_boundaries(),
            top_fraction: Decimal::new(1, 2),
            benchmark: None,
            threads: 0,
        }
    }

    /// Run `f` on a pool of the configured size.
    pub fn in_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// Comma-separated, strictly increasing USD boundaries.
pub fn parse_buckets(text: &str) -> Result<Vec<Money>> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let values = text
        .split(',')
        .map(|s| Money::parse(s).map_err(|e| CliError::Config(format!("--buckets: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config("--buckets: boundaries must be strictly increasing".into()));
    }
    Ok(values)
}

pub fn parse_top_fraction(text: &str) -> Result<Decimal> {
    let f: Decimal = text
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("--top-fraction: `{text}` is not a decimal number")))?;
    if f <= Decimal::ZERO || f > Decimal::ONE {
        return Err(CliError::Config(format!("--top-fraction: {f} is outside (0, 1]")));
    }
    Ok(f)
}
