//! Loading, planning and per-ledger execution.
//!
//! Ledgers are ordered by (platform, wallet, token) and cut into chunks that
//! never split a wallet's ledgers within one platform. Chunks run on the
//! current rayon pool a batch at a time, and their outputs are handed to a
//! sequential sink in chunk order. Output therefore never depends on the
//! number of threads, and memory stays bounded by the batch size.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::ops::Range;
use std::path::Path;

use dailypnl::grid::{self, DailySeries};
use dailypnl::ingest::{self, CapTable, DatasetSummary, Parsed};
use dailypnl::model::{BalanceRecord, PriceObservation};
use dailypnl::pnl::compute_ledger;
use dailypnl::{Date, Diagnostic, DiagnosticKind, LedgerKey, LedgerResult, Price};
use rayon::prelude::*;

use crate::groups::Groups;
use crate::{CliError, Result, RunConfig};

/// Ledgers per chunk before looking for the next wallet boundary.
const CHUNK_LEDGERS: usize = 256;

pub struct Inputs {
    pub balances: Parsed<BalanceRecord>,
    pub prices: Parsed<PriceObservation>,
    pub caps: CapTable,
    pub groups: Groups,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn ingest_error(path: &Path, e: ingest::IngestError) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

/// Read the configured input files. Balances are optional only when
/// `need_balances` is false.
pub fn load_inputs(cfg: &RunConfig, need_balances: bool) -> Result<Inputs> {
    let balances = match &cfg.balances {
        Some(path) => ingest::parse_balances(open(path)?).map_err(|e| ingest_error(path, e))?,
        None if need_balances => return Err(CliError::Config("--balances is required for this command".into())),
        None => Parsed::default(),
    };
    let prices = ingest::parse_prices(open(&cfg.prices)?).map_err(|e| ingest_error(&cfg.prices, e))?;
    let caps = match &cfg.caps {
        Some(path) => ingest::parse_caps(open(path)?).map_err(|e| ingest_error(path, e))?,
        None => CapTable::new(),
    };
    let groups = match &cfg.group {
        Some(path) => Groups::parse(open(path)?).map_err(|e| match e {
            CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
            other => other,
        })?,
        None => Groups::all(),
    };
    Ok(Inputs {
        balances,
        prices,
        caps,
        groups,
    })
}

struct Task {
    platform: Option<usize>,
    key: LedgerKey,
    /// Record ranges, one per account holding the token.
    accounts: Vec<Range<usize>>,
}

/// A computed ledger with its reporting context.
pub struct PlacedLedger<'a> {
    /// Platform of the token; `None` when the group file does not list it.
    pub platform: Option<&'a str>,
    /// Platform whose treasury holds this ledger, if any.
    pub treasury: Option<&'a str>,
    pub ledger: LedgerResult,
}

pub struct Plan {
    /// Last analysis day; `None` for a dataset without dates.
    pub end: Option<Date>,
    /// First balance day.
    pub start: Option<Date>,
    pub groups: Groups,
    pub summary: DatasetSummary,
    /// Capped daily median per priced token, filled through `end`.
    pub prices: BTreeMap<String, DailySeries<Price>>,
    /// Dataset-level diagnostics, in input order.
    pub diagnostics: Vec<Diagnostic>,
    platforms: Vec<String>,
    balances: Vec<BalanceRecord>,
    tasks: Vec<Task>,
    chunks: Vec<Range<usize>>,
}

fn after_end<T>(records: &mut Vec<T>, end: Date, date: impl Fn(&T) -> Date, table: &'static str) -> Option<Diagnostic> {
    let before = records.len();
    records.retain(|r| date(r) <= end);
    let dropped = before - records.len();
    (dropped > 0).then(|| {
        Diagnostic::general(
            table,
            DiagnosticKind::RecordsAfterEnd,
            format!("{dropped} records after the analysis end {end} ignored"),
        )
    })
}

impl Plan {
    pub fn build(inputs: Inputs, snapshot: Option<Date>) -> Result<Plan> {
        let Inputs {
            mut balances,
            mut prices,
            caps,
            groups,
        } = inputs;

        let dates = balances
            .records
            .iter()
            .map(|r| r.date)
            .chain(prices.records.iter().map(|r| r.date()));
        let span = dates.fold(None, |acc: Option<(Date, Date)>, d| match acc {
            None => Some((d, d)),
            Some((lo, hi)) => Some((lo.min(d), hi.max(d))),
        });
        if let (Some(s), Some((first, _))) = (snapshot, span) {
            if s < first {
                return Err(CliError::Config(format!(
                    "--snapshot {s} is before the first date in the inputs ({first})"
                )));
            }
        }
        let end = snapshot.or(span.map(|(_, last)| last));

        let mut late = Vec::new();
        if let Some(end) = end {
            late.extend(after_end(&mut balances.records, end, |r| r.date, "balances"));
            late.extend(after_end(&mut prices.records, end, |r| r.date(), "prices"));
        }
        let summary = ingest::validate_dataset(&balances, &prices, &caps);
        let mut diagnostics = summary.diagnostics.clone();
        diagnostics.extend(late);

        let mut price_series = BTreeMap::new();
        if let Some(end) = end {
            for obs in prices.records.chunk_by(|a, b| a.token == b.token) {
                let token = &obs[0].token;
                let medians = grid::daily_median_price(obs, caps.get(token));
                if medians.is_empty() {
                    diagnostics.push(Diagnostic::general(
                        "prices",
                        DiagnosticKind::UnpricedToken,
                        format!("every observation of token `{token}` is above its cap; its ledgers are skipped"),
                    ));
                    continue;
                }
                let series = grid::fill_price_series(&medians, end).expect("medians end on or before the analysis end");
                price_series.insert(token.clone(), series);
            }
        }

        let platforms: Vec<String> = groups.platforms().into_iter().map(String::from).collect();
        let platform_index = |token: &str| {
            groups
                .token_platform(token)
                .map(|p| platforms.binary_search_by(|x| x.as_str().cmp(p)).expect("platform is listed"))
        };
        let records = balances.records;
        let mut grouped: BTreeMap<(Option<usize>, &str, &str), Vec<Range<usize>>> = BTreeMap::new();
        let mut offset = 0;
        for run in records.chunk_by(|a, b| (&a.wallet, &a.account, &a.token) == (&b.wallet, &b.account, &b.token)) {
            let r = &run[0];
            if price_series.contains_key(&r.token) {
                grouped
                    .entry((platform_index(&r.token), &r.wallet, &r.token))
                    .or_default()
                    .push(offset..offset + run.len());
            }
            offset += run.len();
        }
        let tasks: Vec<Task> = grouped
            .into_iter()
            .map(|((platform, wallet, token), accounts)| Task {
                platform,
                key: LedgerKey::new(wallet, token).expect("ingest rejects empty ids"),
                accounts,
            })
            .collect();

        let mut chunks = Vec::new();
        let mut begin = 0;
        for i in 1..=tasks.len() {
            let boundary = i == tasks.len()
                || (i - begin >= CHUNK_LEDGERS
                    && (tasks[i].platform, &tasks[i].key.wallet) != (tasks[i - 1].platform, &tasks[i - 1].key.wallet));
            if boundary {
                chunks.push(begin..i);
                begin = i;
            }
        }

        Ok(Plan {
            end,
            start: summary.balance_span.map(|(first, _)| first),
            groups,
            summary,
            prices: price_series,
            diagnostics,
            platforms,
            balances: records,
            tasks,
            chunks,
        })
    }

    pub fn ledger_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn platforms(&self) -> &[String] {
        &self.platforms
    }

    fn compute(&self, task: &Task) -> std::result::Result<LedgerResult, Diagnostic> {
        let end = self.end.expect("tasks exist only with an end date");
        let skipped = |why: String| Diagnostic::general("ledgers", DiagnosticKind::LedgerSkipped, format!("{}: {why}", task.key));
        let accounts = task
            .accounts
            .iter()
            .map(|r| grid::fill_account_series(&self.balances[r.clone()], end))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| skipped(e.to_string()))?;
        let quantity = grid::aggregate_wallet_balances(&accounts).map_err(|e| skipped(e.to_string()))?;
        let price = &self.prices[&task.key.token];
        let input = grid::align(task.key.clone(), &quantity, price, end).map_err(|e| skipped(e.to_string()))?;
        Ok(compute_ledger(&input))
    }

    fn compute_chunk(&self, range: &Range<usize>) -> (Vec<PlacedLedger<'_>>, Vec<Diagnostic>) {
        let mut ledgers = Vec::with_capacity(range.len());
        let mut diagnostics = Vec::new();
        for task in &self.tasks[range.clone()] {
            match self.compute(task) {
                Ok(ledger) => {
                    if !ledger.unmatched_sell_quantity.is_zero() {
                        diagnostics.push(Diagnostic::general(
                            "ledgers",
                            DiagnosticKind::UnmatchedSell,
                            format!("{}: {} sold without an earlier buy", ledger.key, ledger.unmatched_sell_quantity),
                        ));
                    }
                    ledgers.push(PlacedLedger {
                        platform: task.platform.map(|i| self.platforms[i].as_str()),
                        treasury: self.groups.treasury_platform(&task.key.wallet),
                        ledger,
                    });
                }
                Err(d) => diagnostics.push(d),
            }
        }
        (ledgers, diagnostics)
    }

    /// Compute every ledger, apply `map` to each chunk on the current pool,
    /// and feed the results to `sink` in ledger order. Returns the
    /// ledger-level diagnostics.
    pub fn run<T, M, S>(&self, map: M, mut sink: S) -> Result<Vec<Diagnostic>>
    where
        T: Send,
        M: Fn(&[PlacedLedger<'_>]) -> T + Sync,
        S: FnMut(T) -> Result<()>,
    {
        let batch = rayon::current_num_threads().max(1) * 4;
        let mut diagnostics = Vec::new();
        for group in self.chunks.chunks(batch) {
            let outputs: Vec<(T, Vec<Diagnostic>)> = group
                .par_iter()
                .map(|range| {
                    let (ledgers, diags) = self.compute_chunk(range);
                    (map(&ledgers), diags)
                })
                .collect();
            for (out, diags) in outputs {
                sink(out)?;
                diagnostics.extend(diags);
            }
        }
        Ok(diagnostics)
    }

    /// Every ledger, in output order. Meant for small datasets.
    pub fn ledgers(&self) -> (Vec<LedgerResult>, Vec<Diagnostic>) {
        let mut all = Vec::new();
        let diagnostics = self
            .run(
                |chunk| chunk.iter().map(|p| p.ledger.clone()).collect::<Vec<_>>(),
                |ledgers| {
                    all.extend(ledgers);
                    Ok(())
                },
            )
            .expect("collecting cannot fail");
        (all, diagnostics)
    }
}
