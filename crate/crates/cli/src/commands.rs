//! One function per subcommand. Each returns the number of ledgers or
//! records it produced so callers can report progress.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dailypnl::analytics::{
    aggregate_series, benchmark_report, concentration, summary_stats, BucketCounter, BucketScheme, WalletTotal,
};
use dailypnl::grid::{sum_forward_filled, DailySeries};
use dailypnl::model::date_range;
use dailypnl::synth::{self, ScenarioParams};
use dailypnl::{Date, Diagnostic, Money};
use serde::Serialize;
use serde_json::Number;

use crate::output::{self, BenchmarkFile, ConcentrationRecord, DistRow, SummaryRecord};
use crate::pipeline::{load_inputs, Plan};
use crate::{CliError, Result, RunConfig};

/// Bytes of ledger rows buffered before a write.
const WRITE_BUFFER: usize = 1 << 20;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    create_dir(dir)?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn create_file(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    create_dir(dir)?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    Ok((path, BufWriter::with_capacity(WRITE_BUFFER, file)))
}

pub fn plan(cfg: &RunConfig, need_balances: bool) -> Result<Plan> {
    Plan::build(load_inputs(cfg, need_balances)?, cfg.snapshot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComputeStats {
    pub ledgers: usize,
    pub rows: usize,
    pub diagnostics: usize,
}

/// Write `ledgers.csv` and `diagnostics.txt`.
pub fn cmd_compute(cfg: &RunConfig) -> Result<ComputeStats> {
    cfg.in_pool(|| {
        let plan = plan(cfg, true)?;
        let (path, mut out) = create_file(&cfg.out, output::LEDGERS_FILE)?;
        let io = |e| CliError::io(&path, e);
        out.write_all(output::ledger_header().as_bytes()).map_err(io)?;
        let mut stats = ComputeStats {
            ledgers: 0,
            rows: 0,
            diagnostics: 0,
        };
        let run_diagnostics = plan.run(
            |chunk| {
                let mut text = String::new();
                let mut rows = 0;
                for placed in chunk {
                    output::push_ledger_rows(&mut text, &placed.ledger);
                    rows += placed.ledger.points.len();
                }
                (text, chunk.len(), rows)
            },
            |(text, ledgers, rows)| {
                stats.ledgers += ledgers;
                stats.rows += rows;
                out.write_all(text.as_bytes()).map_err(io)
            },
        )?;
        out.flush().map_err(io)?;

        let mut diagnostics = plan.diagnostics.clone();
        diagnostics.extend(run_diagnostics);
        stats.diagnostics = diagnostics.len();
        let s = &plan.summary;
        let header = vec![
            format!(
                "balances: {} records, {} wallets, {} accounts, {} tokens",
                s.n_balance_records, s.n_wallets, s.n_accounts, s.n_tokens
            ),
            format!(
                "prices: {} observations, {} priced tokens, {} caps",
                s.n_price_observations, s.n_priced_tokens, s.n_caps
            ),
            format!(
                "ledgers: {} computed, end {}",
                stats.ledgers,
                plan.end.map_or("none".to_string(), |d| d.to_string())
            ),
        ];
        write_file(&cfg.out, output::DIAGNOSTICS_FILE, output::diagnostics_text(&header, &diagnostics).as_bytes())?;
        Ok(stats)
    })?
}

/// Per-platform user totals, bucket counts and treasury value.
struct Aggregates {
    totals: BTreeMap<String, Vec<WalletTotal>>,
    buckets: BTreeMap<String, BucketCounter>,
    aum: BTreeMap<String, DailySeries<Money>>,
}

fn merge_series(into: &mut BTreeMap<String, DailySeries<Money>>, platform: &str, series: DailySeries<Money>) {
    let merged = match into.remove(platform) {
        Some(existing) => sum_forward_filled(&[&existing, &series]).expect("non-empty"),
        None => series,
    };
    into.insert(platform.to_string(), merged);
}

fn aggregate(plan: &Plan, buckets: Option<(&BucketScheme, &[Date])>) -> Result<(Aggregates, Vec<Diagnostic>)> {
    let mut agg = Aggregates {
        totals: BTreeMap::new(),
        buckets: BTreeMap::new(),
        aum: BTreeMap::new(),
    };
    let Some(end) = plan.end else {
        return Ok((agg, Vec::new()));
    };
    let diagnostics = plan.run(
        |chunk| {
            let mut part = Aggregates {
                totals: BTreeMap::new(),
                buckets: BTreeMap::new(),
                aum: BTreeMap::new(),
            };
            for group in chunk.chunk_by(|a, b| (a.platform, &a.ledger.key.wallet) == (b.platform, &b.ledger.key.wallet)) {
                let wallet = &group[0].ledger.key.wallet;
                if let Some(treasury) = group[0].treasury {
                    for placed in group {
                        merge_series(&mut part.aum, treasury, placed.ledger.market_value_series());
                    }
                    continue;
                }
                let Some(platform) = group[0].platform else {
                    continue;
                };
                let series: Vec<DailySeries<Money>> = group.iter().map(|p| p.ledger.total_series()).collect();
                let wallet_series = aggregate_series(&series).expect("group is non-empty");
                part.totals.entry(platform.to_string()).or_default().push(WalletTotal {
                    wallet: wallet.clone(),
                    group: platform.to_string(),
                    total: wallet_series.at_or_before(end).copied().unwrap_or_default(),
                });
                if let Some((scheme, dates)) = buckets {
                    part.buckets
                        .entry(platform.to_string())
                        .or_insert_with(|| BucketCounter::new(scheme.clone(), dates))
                        .add(&wallet_series);
                }
            }
            part
        },
        |part| {
            for (platform, totals) in part.totals {
                agg.totals.entry(platform).or_default().extend(totals);
            }
            for (platform, counter) in part.buckets {
                match agg.buckets.get_mut(&platform) {
                    Some(existing) => existing.merge(&counter),
                    None => {
                        agg.buckets.insert(platform, counter);
                    }
                }
            }
            for (platform, series) in part.aum {
                merge_series(&mut agg.aum, &platform, series);
            }
            Ok(())
        },
    )?;
    Ok((agg, diagnostics))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportStats {
    pub platforms: usize,
    pub users: usize,
}

/// Write `summary.json`, `concentration.json` and, when the group file
/// names treasury wallets, `treasury.csv`.
pub fn cmd_report(cfg: &RunConfig) -> Result<ReportStats> {
    cfg.in_pool(|| {
        let plan = plan(cfg, true)?;
        let (agg, _) = aggregate(&plan, None)?;
        let mut summaries = Vec::new();
        let mut concentrations = Vec::new();
        let mut users = 0;
        for (platform, totals) in &agg.totals {
            let stats = summary_stats(totals).expect("platforms with users only");
            users += stats.users;
            summaries.push(SummaryRecord::new(platform, &stats));
            let c = concentration(totals, cfg.top_fraction).map_err(|e| CliError::Config(e.to_string()))?;
            concentrations.push(ConcentrationRecord::new(platform, &c));
        }
        write_file(&cfg.out, output::SUMMARY_FILE, &output::to_json(&summaries))?;
        write_file(&cfg.out, output::CONCENTRATION_FILE, &output::to_json(&concentrations))?;
        if plan.groups.has_treasuries() {
            let rows: Vec<(String, Date, Money)> = agg
                .aum
                .iter()
                .flat_map(|(platform, series)| series.iter().map(|(d, v)| (platform.clone(), d, *v)))
                .collect();
            write_file(&cfg.out, output::TREASURY_FILE, &output::write_treasury(&rows))?;
        }
        Ok(ReportStats {
            platforms: summaries.len(),
            users,
        })
    })?
}

/// Write `dist.csv`: the share of each platform's users per PnL bucket on
/// every day from the first balance to the analysis end.
pub fn cmd_dist(cfg: &RunConfig) -> Result<usize> {
    let scheme = BucketScheme::new(&cfg.buckets).map_err(|e| CliError::Config(format!("--buckets: {e}")))?;
    cfg.in_pool(|| {
        let plan = plan(cfg, true)?;
        let dates = match (plan.start, plan.end) {
            (Some(start), Some(end)) if start <= end => date_range(start, end).expect("start <= end"),
            _ => Vec::new(),
        };
        let (agg, _) = aggregate(&plan, Some((&scheme, &dates)))?;
        let labels = scheme.labels();
        let mut rows = Vec::new();
        for (platform, counter) in agg.buckets {
            let matrix = counter.finish_populated();
            for (date, shares) in matrix.dates.iter().zip(&matrix.shares) {
                for (label, share) in labels.iter().zip(shares) {
                    rows.push(DistRow {
                        platform: platform.clone(),
                        date: *date,
                        bucket_label: label.clone(),
                        share: *share,
                    });
                }
            }
        }
        write_file(&cfg.out, output::DIST_FILE, &output::write_dist(&rows))?;
        Ok(rows.len())
    })?
}

/// Write `benchmark.json`, comparing every token's price path with the
/// benchmark token's.
pub fn cmd_bench(cfg: &RunConfig) -> Result<usize> {
    let benchmark = cfg
        .benchmark
        .as_deref()
        .ok_or_else(|| CliError::Config("--benchmark is required for bench".into()))?;
    let plan = plan(cfg, false)?;
    let series = plan
        .prices
        .get(benchmark)
        .ok_or_else(|| CliError::Input(format!("benchmark token `{benchmark}` has no usable price observations")))?;
    let report = benchmark_report(&plan.prices, benchmark, series)
        .map_err(|e| CliError::Input(format!("benchmark token `{benchmark}`: {e}")))?;
    write_file(&cfg.out, output::BENCHMARK_FILE, &output::to_json(&BenchmarkFile::from(&report)))?;
    Ok(report.tokens.len())
}

pub const SYNTH_FILES: [&str; 5] = ["balances.csv", "prices.csv", "caps.csv", "trades.csv", "oracle.json"];

#[derive(Serialize)]
struct OracleSellRecord {
    timestamp: String,
    quantity: Number,
    price: Number,
    realized: Number,
}

#[derive(Serialize)]
struct OracleRecord {
    wallet: String,
    token: String,
    quantity: Number,
    cost_basis: Number,
    realized: Number,
    unrealized: Number,
    total: Number,
    netting_bound: Number,
    sells: Vec<OracleSellRecord>,
}

fn exact(text: impl ToString) -> Number {
    text.to_string().parse().expect("decimal text is a JSON number")
}

/// Generate a scenario and write its input tables, the raw trade tape and
/// the oracle's per-ledger ground truth.
pub fn cmd_synth(params_path: &Path, seed: u64, out: &Path) -> Result<usize> {
    let text = fs::read_to_string(params_path).map_err(|e| CliError::io(params_path, e))?;
    let params = ScenarioParams::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", params_path.display())))?;
    let tape = synth::generate_scenario(&params, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let snapshot = synth::collapse_to_daily(&tape);

    let [balances, prices, caps, trades, oracle] = SYNTH_FILES;
    let (path, mut w) = create_file(out, balances)?;
    dailypnl::ingest::write_balances(&snapshot.balances, &mut w).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let (path, mut w) = create_file(out, prices)?;
    dailypnl::ingest::write_prices(&snapshot.prices, &mut w).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let (path, mut w) = create_file(out, caps)?;
    dailypnl::ingest::write_caps(&snapshot.caps, &mut w).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    drop(snapshot);

    let (path, w) = create_file(out, trades)?;
    let mut csv_out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| CliError::Input(format!("{}: {e}", path.display()));
    csv_out
        .write_record(["timestamp", "wallet", "account", "token", "side", "quantity", "price", "round_trip"])
        .map_err(csv_err)?;
    for t in &tape.trades {
        csv_out
            .write_record([
                t.timestamp.format(dailypnl::ingest::TIMESTAMP_FORMAT).to_string(),
                synth::wallet_name(t.wallet),
                synth::account_name(t.wallet, t.account),
                synth::token_name(t.token),
                match t.side {
                    dailypnl::pnl::Side::Buy => "buy".to_string(),
                    dailypnl::pnl::Side::Sell => "sell".to_string(),
                },
                t.quantity.to_string(),
                t.price.to_string(),
                t.round_trip.to_string(),
            ])
            .map_err(csv_err)?;
    }
    csv_out.flush().map_err(|e| CliError::io(&path, e))?;

    let (path, mut w) = create_file(out, oracle)?;
    let io = |e| CliError::io(&path, e);
    write!(w, "{{\"seed\":{seed},\"ledgers\":[").map_err(io)?;
    let mut count = 0;
    for trades in tape.ledgers() {
        let l = synth::oracle_ledger(&tape.params, trades, &tape.reference);
        let last = l.last();
        let record = OracleRecord {
            wallet: l.wallet.clone(),
            token: l.token.clone(),
            quantity: exact(last.quantity),
            cost_basis: exact(last.cost_basis),
            realized: exact(last.realized_cum),
            unrealized: exact(last.unrealized),
            total: exact(last.total),
            netting_bound: exact(last.netting_bound),
            sells: l
                .sells
                .iter()
                .map(|s| OracleSellRecord {
                    timestamp: s.timestamp.format(dailypnl::ingest::TIMESTAMP_FORMAT).to_string(),
                    quantity: exact(s.quantity),
                    price: exact(s.price),
                    realized: exact(s.realized),
                })
                .collect(),
        };
        if count > 0 {
            w.write_all(b",").map_err(io)?;
        }
        w.write_all(b"\n").map_err(io)?;
        serde_json::to_writer(&mut w, &record).map_err(|e| CliError::Input(e.to_string()))?;
        count += 1;
    }
    w.write_all(b"\n]}\n").map_err(io)?;
    w.flush().map_err(io)?;
    Ok(count)
}
