//! Synthetic scenarios with known ground truth.
//!
//! A scenario is a tape of atomic, timestamped trades. It is collapsed into
//! the same sparse daily balance and price tables the engine ingests, and
//! replayed through a queue-based FIFO simulator that never looks at daily
//! snapshots. Comparing the two isolates the cost of netting intraday flows.
//!
//! Base trades execute at the token's reference price for the day. Only
//! same-day round trips are jittered, symmetrically around the reference,
//! so the daily median stays on the reference path.

use std::collections::VecDeque;

use chrono::{NaiveDateTime, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rust_decimal::prelude::{FromPrimitive, ToPrimitive};
use rust_decimal::{Decimal, RoundingStrategy};
use serde::Deserialize;
use thiserror::Error;

use crate::ingest::{self, CapTable};
use crate::model::{BalanceRecord, Date, Money, Price, PriceObservation, Quantity};
use crate::pnl::Side;

const QUANTITY_PLACES: u32 = 6;
const PRICE_PLACES: u32 = 8;
const SECONDS_PER_DAY: u32 = 86_400;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("cannot read scenario parameters: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Scenario knobs, read from a flat `key = value` file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub wallets: usize,
    pub tokens: usize,
    pub days: usize,
    pub start: Date,
    /// Probability that a wallet trades a given token on a given day.
    pub intensity: f64,
    /// Probability that a wallet ever holds a given token.
    pub participation: f64,
    /// Daily standard deviation of log returns of the reference path.
    pub volatility: f64,
    /// Probability of an extra same-day buy-then-sell on a trading day.
    pub round_trip_prob: f64,
    /// Maximum relative distance of round-trip legs from the reference.
    pub jitter: f64,
    pub initial_price: f64,
    /// Reference-price prints per token per day.
    pub obs_per_day: usize,
    /// Probability that a wallet splits a token across two accounts.
    pub multi_account_prob: f64,
    /// Cap on trading days per wallet-token; 0 means unlimited.
    pub max_trades: usize,
    /// Probability that a sell day sells the whole position.
    pub liquidation_prob: f64,
    /// Probability of a burst of absurd prints on a token-day.
    pub outlier_prob: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            wallets: 50,
            tokens: 3,
            days: 30,
            start: Date::from_ymd_opt(2024, 11, 1).expect("valid date"),
            intensity: 0.2,
            participation: 0.6,
            volatility: 0.05,
            round_trip_prob: 0.0,
            jitter: 0.02,
            initial_price: 1.0,
            obs_per_day: 3,
            multi_account_prob: 0.2,
            max_trades: 0,
            liquidation_prob: 0.1,
            outlier_prob: 0.0,
        }
    }
}

fn invalid(name: &'static str, reason: impl Into<String>) -> SynthError {
    SynthError::InvalidParam {
        name,
        reason: reason.into(),
    }
}

fn check_probability(name: &'static str, p: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(name, format!("{p} is not in [0, 1]")))
    }
}

impl ScenarioParams {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let params: ScenarioParams = toml::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, v) in [("wallets", self.wallets), ("tokens", self.tokens), ("days", self.days), ("obs_per_day", self.obs_per_day)] {
            if v == 0 {
                return Err(invalid(name, "must be positive"));
            }
        }
        if self.wallets > 999_999 || self.tokens > 999 {
            return Err(invalid("wallets", "at most 999999 wallets and 999 tokens"));
        }
        for (name, p) in [
            ("intensity", self.intensity),
            ("participation", self.participation),
            ("round_trip_prob", self.round_trip_prob),
            ("multi_account_prob", self.multi_account_prob),
            ("liquidation_prob", self.liquidation_prob),
            ("outlier_prob", self.outlier_prob),
        ] {
            check_probability(name, p)?;
        }
        if !(self.volatility.is_finite() && self.volatility >= 0.0) {
            return Err(invalid("volatility", "must be finite and non-negative"));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(invalid("jitter", "must be in [0, 0.5)"));
        }
        if !(self.initial_price.is_finite() && self.initial_price >= 0.001) {
            return Err(invalid("initial_price", "must be at least 0.001"));
        }
        if self.start.checked_add_days(chrono::Days::new(self.days as u64)).is_none() {
            return Err(invalid("days", "date range overflows"));
        }
        Ok(())
    }

    pub fn dates(&self) -> Vec<Date> {
        self.start.iter_days().take(self.days).collect()
    }

    pub fn end(&self) -> Date {
        self.start + chrono::Days::new(self.days as u64 - 1)
    }
}

pub fn wallet_name(index: u32) -> String {
    format!("W{index:06}")
}

pub fn token_name(index: u16) -> String {
    format!("T{index:03}")
}

pub fn account_name(wallet: u32, account: u8) -> String {
    format!("{}-{account}", wallet_name(wallet))
}

/// One atomic trade. Names are kept as indices to keep large tapes small.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trade {
    pub timestamp: NaiveDateTime,
    pub wallet: u32,
    pub token: u16,
    pub account: u8,
    pub side: Side,
    pub quantity: Quantity,
    pub price: Price,
    /// Leg of a same-day buy-then-sell pair.
    pub round_trip: bool,
}

impl Trade {
    pub fn date(&self) -> Date {
        self.timestamp.date()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeTape {
    pub params: ScenarioParams,
    pub seed: u64,
    /// Sorted by (wallet, token, timestamp).
    pub trades: Vec<Trade>,
    /// Reference price per token per day.
    pub reference: Vec<Vec<Price>>,
    /// Prints far above the reference, which the caps must reject.
    pub outliers: Vec<PriceObservation>,
}

impl TradeTape {
    /// Trades grouped by wallet-token, in tape order.
    pub fn ledgers(&self) -> impl Iterator<Item = &[Trade]> {
        self.trades.chunk_by(|a, b| (a.wallet, a.token) == (b.wallet, b.token))
    }

    /// Caps at ten times each token's highest reference price.
    pub fn caps(&self) -> CapTable {
        self.reference
            .iter()
            .enumerate()
            .map(|(k, path)| {
                let top = path.iter().map(|p| p.value()).max().unwrap_or(Decimal::ONE);
                (token_name(k as u16), Price::new(top * Decimal::TEN))
            })
            .collect()
    }
}

fn at(date: Date, second: u32) -> NaiveDateTime {
    date.and_time(NaiveTime::from_num_seconds_from_midnight_opt(second, 0).expect("second within day"))
}

fn rounded_price(value: Decimal) -> Price {
    let p = value.round_dp_with_strategy(PRICE_PLACES, RoundingStrategy::MidpointNearestEven);
    Price::new(p.max(Decimal::new(1, 3)))
}

fn random_quantity(rng: &mut ChaCha8Rng) -> Decimal {
    Decimal::new(rng.random_range(1_000_000..=1_000_000_000), QUANTITY_PLACES)
}

fn reference_path(params: &ScenarioParams, rng: &mut ChaCha8Rng) -> Vec<Price> {
    let mut level = params.initial_price;
    let mut path = Vec::with_capacity(params.days);
    for day in 0..params.days {
        if day > 0 && params.volatility > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            level = (level * (params.volatility * z).exp()).max(0.001);
        }
        path.push(rounded_price(Decimal::from_f64(level).unwrap_or(Decimal::ONE)));
    }
    path
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct LedgerState {
    accounts: Vec<Decimal>,
    trading_days: usize,
}

impl LedgerState {
    fn total(&self) -> Decimal {
        self.accounts.iter().sum()
    }
}

/// Split `quantity` into `parts` positive pieces on the quantity grid.
fn split(quantity: Decimal, parts: usize) -> Vec<Decimal> {
    let tick = Decimal::new(1, QUANTITY_PLACES);
    let ticks = (quantity / tick).to_usize().unwrap_or(usize::MAX);
    let parts = parts.min(ticks).max(1);
    let piece = (quantity / Decimal::from(parts)).round_dp_with_strategy(QUANTITY_PLACES, RoundingStrategy::ToZero);
    let mut out = vec![piece; parts - 1];
    out.push(quantity - piece * Decimal::from(parts - 1));
    out
}

#[allow(clippy::too_many_arguments)]
fn trade_day(
    params: &ScenarioParams,
    rng: &mut ChaCha8Rng,
    state: &mut LedgerState,
    wallet: u32,
    token: u16,
    date: Date,
    price: Price,
    out: &mut Vec<Trade>,
) {
    let day_start = out.len();
    let push = |out: &mut Vec<Trade>, second: u32, account: usize, side: Side, quantity: Decimal, price: Price, round_trip: bool| {
        out.push(Trade {
            timestamp: at(date, second),
            wallet,
            token,
            account: account as u8,
            side,
            quantity: Quantity::new(quantity),
            price,
            round_trip,
        })
    };
    let n = rng.random_range(1..=3usize);
    let holding = state.total();
    let buy = holding.is_zero() || rng.random_bool(0.5);
    if buy {
        for _ in 0..n {
            let q = random_quantity(rng);
            let account = rng.random_range(0..state.accounts.len());
            state.accounts[account] += q;
            let second = rng.random_range(0..SECONDS_PER_DAY);
            push(out, second, account, Side::Buy, q, price, false);
        }
    } else {
        let amount = if rng.random_bool(params.liquidation_prob) {
            holding
        } else {
            let f = Decimal::from_f64(rng.random_range(0.05..1.0)).unwrap_or(Decimal::ONE);
            (holding * f)
                .round_dp_with_strategy(QUANTITY_PLACES, RoundingStrategy::ToZero)
                .clamp(Decimal::new(1, QUANTITY_PLACES), holding)
        };
        for piece in split(amount, n) {
            // Drain accounts in order; a piece spanning two accounts becomes two trades.
            let mut left = piece;
            let second = rng.random_range(0..SECONDS_PER_DAY);
            for account in 0..state.accounts.len() {
                if left.is_zero() {
                    break;
                }
                let take = left.min(state.accounts[account]);
                if take.is_zero() {
                    continue;
                }
                state.accounts[account] -= take;
                left -= take;
                push(out, second, account, Side::Sell, take, price, false);
            }
        }
    }
    if params.round_trip_prob > 0.0 && rng.random_bool(params.round_trip_prob) {
        let r = random_quantity(rng);
        let delta = Decimal::from_f64(params.jitter * rng.random_range(0.1..=1.0)).unwrap_or(Decimal::ZERO);
        let low = rounded_price(price.value() * (Decimal::ONE - delta));
        let high = rounded_price(price.value() * (Decimal::ONE + delta));
        let t1 = rng.random_range(0..SECONDS_PER_DAY - 1);
        let t2 = rng.random_range(t1 + 1..SECONDS_PER_DAY);
        push(out, t1, 0, Side::Buy, r, low, true);
        push(out, t2, 0, Side::Sell, r, high, true);
    }
    out[day_start..].sort_by_key(|t| t.timestamp);
}

/// Deterministic scenario for `(params, seed)`. Every wallet-token uses
/// its own random stream, so a ledger's trades do not depend on how many
/// other ledgers exist.
pub fn generate_scenario(params: &ScenarioParams, seed: u64) -> Result<TradeTape, SynthError> {
    params.validate()?;
    let dates = params.dates();
    let reference: Vec<Vec<Price>> = (0..params.tokens)
        .map(|k| reference_path(params, &mut stream_rng(seed, u64::MAX - k as u64)))
        .collect();

    let mut outliers = Vec::new();
    if params.outlier_prob > 0.0 {
        let mut rng = stream_rng(seed, u64::MAX - 1_000_000);
        for (k, path) in reference.iter().enumerate() {
            for (date, price) in dates.iter().zip(path) {
                if !rng.random_bool(params.outlier_prob) {
                    continue;
                }
                for _ in 0..2 * params.obs_per_day {
                    outliers.push(PriceObservation {
                        timestamp: at(*date, rng.random_range(0..SECONDS_PER_DAY)),
                        token: token_name(k as u16),
                        price: Price::new(price.value() * Decimal::from(1000)),
                    });
                }
            }
        }
    }

    let mut trades = Vec::new();
    for wallet in 0..params.wallets as u32 {
        for token in 0..params.tokens as u16 {
            let mut rng = stream_rng(seed, wallet as u64 * params.tokens as u64 + token as u64);
            if !rng.random_bool(params.participation) {
                continue;
            }
            let accounts = if rng.random_bool(params.multi_account_prob) { 2 } else { 1 };
            let mut state = LedgerState {
                accounts: vec![Decimal::ZERO; accounts],
                trading_days: 0,
            };
            for (day, date) in dates.iter().enumerate() {
                if !rng.random_bool(params.intensity) {
                    continue;
                }
                if params.max_trades > 0 && state.trading_days >= params.max_trades {
                    break;
                }
                state.trading_days += 1;
                let price = reference[token as usize][day];
                trade_day(params, &mut rng, &mut state, wallet, token, *date, price, &mut trades);
            }
        }
    }
    Ok(TradeTape {
        params: params.clone(),
        seed,
        trades,
        reference,
        outliers,
    })
}

/// The scenario as the engine sees it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailySnapshot {
    pub balances: Vec<BalanceRecord>,
    pub prices: Vec<PriceObservation>,
    pub caps: CapTable,
}

impl DailySnapshot {
    /// `(balances, prices, caps)` in the ingest CSV formats.
    pub fn to_csv(&self) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let mut b = Vec::new();
        let mut p = Vec::new();
        let mut c = Vec::new();
        ingest::write_balances(&self.balances, &mut b).expect("writing to memory");
        ingest::write_prices(&self.prices, &mut p).expect("writing to memory");
        ingest::write_caps(&self.caps, &mut c).expect("writing to memory");
        (b, p, c)
    }
}

/// End-of-day balances per account, emitted only on days the balance
/// changes, and price prints from every trade plus the reference path.
pub fn collapse_to_daily(tape: &TradeTape) -> DailySnapshot {
    let mut balances = Vec::new();
    for ledger in tape.ledgers() {
        let (wallet, token) = (ledger[0].wallet, ledger[0].token);
        let accounts = ledger.iter().map(|t| t.account).max().unwrap_or(0) as usize + 1;
        let mut current = vec![Decimal::ZERO; accounts];
        for day in ledger.chunk_by(|a, b| a.date() == b.date()) {
            let before = current.clone();
            for t in day {
                match t.side {
                    Side::Buy => current[t.account as usize] += t.quantity.value(),
                    Side::Sell => current[t.account as usize] -= t.quantity.value(),
                }
            }
            for a in 0..accounts {
                if current[a] != before[a] {
                    balances.push(BalanceRecord {
                        date: day[0].date(),
                        wallet: wallet_name(wallet),
                        account: account_name(wallet, a as u8),
                        token: token_name(token),
                        balance: Quantity::new(current[a].normalize()),
                    });
                }
            }
        }
    }
    // Same order the balance reader produces.
    balances.sort_by(|x, y| {
        (&x.wallet, &x.account, &x.token, x.date).cmp(&(&y.wallet, &y.account, &y.token, y.date))
    });

    let params = &tape.params;
    let mut prices: Vec<PriceObservation> = Vec::new();
    for (k, path) in tape.reference.iter().enumerate() {
        let token = token_name(k as u16);
        for (date, price) in params.dates().into_iter().zip(path) {
            for j in 0..params.obs_per_day {
                let second = (j as u32 + 1) * SECONDS_PER_DAY / (params.obs_per_day as u32 + 1);
                prices.push(PriceObservation {
                    timestamp: at(date, second),
                    token: token.clone(),
                    price: *price,
                });
            }
        }
    }
    prices.extend(tape.trades.iter().map(|t| PriceObservation {
        timestamp: t.timestamp,
        token: token_name(t.token),
        price: t.price,
    }));
    prices.extend(tape.outliers.iter().cloned());
    prices.sort_by(|a, b| a.token.cmp(&b.token).then(a.timestamp.cmp(&b.timestamp)).then(a.price.cmp(&b.price)));

    DailySnapshot {
        balances,
        prices,
        caps: tape.caps(),
    }
}

/// One day of a replayed ledger, marked at that day's reference price.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OraclePoint {
    pub date: Date,
    pub quantity: Quantity,
    pub realized_cum: Money,
    pub cost_basis: Money,
    pub unrealized: Money,
    pub total: Money,
    /// Running sum of round-trip quantity times the ledger's intraday
    /// trade price range, an upper bound on the netting error.
    pub netting_bound: Money,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSell {
    pub timestamp: NaiveDateTime,
    pub quantity: Quantity,
    pub price: Price,
    pub realized: Money,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleLedger {
    pub wallet: String,
    pub token: String,
    pub sells: Vec<OracleSell>,
    /// From the first trade day through the scenario end.
    pub points: Vec<OraclePoint>,
    /// Sold quantity with no lot to match. Zero for generated tapes.
    pub unmatched: Quantity,
}

impl OracleLedger {
    pub fn last(&self) -> &OraclePoint {
        self.points.last().expect("ledger has a trade")
    }

    pub fn realized(&self) -> Money {
        self.last().realized_cum
    }

    pub fn cost_basis(&self) -> Money {
        self.last().cost_basis
    }

    pub fn unrealized(&self) -> Money {
        self.last().unrealized
    }

    pub fn total(&self) -> Money {
        self.last().total
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    /// Sorted by (wallet, token).
    pub ledgers: Vec<OracleLedger>,
}

impl OracleResult {
    pub fn get(&self, wallet: &str, token: &str) -> Option<&OracleLedger> {
        self.ledgers
            .binary_search_by(|l| (l.wallet.as_str(), l.token.as_str()).cmp(&(wallet, token)))
            .ok()
            .map(|i| &self.ledgers[i])
    }
}

/// Lot queue over atomic trades.
#[derive(Debug, Default)]
struct FifoQueue {
    lots: VecDeque<(Decimal, Decimal)>,
    cost: Decimal,
    quantity: Decimal,
}

impl FifoQueue {
    fn buy(&mut self, quantity: Decimal, price: Decimal) {
        self.lots.push_back((quantity, price));
        self.cost += quantity * price;
        self.quantity += quantity;
    }

    /// Returns (realized, unmatched quantity).
    fn sell(&mut self, quantity: Decimal, price: Decimal) -> (Decimal, Decimal) {
        let mut left = quantity;
        let mut realized = Decimal::ZERO;
        while !left.is_zero() {
            let Some(front) = self.lots.front_mut() else {
                break;
            };
            let take = left.min(front.0);
            realized += take * (price - front.1);
            self.cost -= take * front.1;
            self.quantity -= take;
            front.0 -= take;
            left -= take;
            if front.0.is_zero() {
                self.lots.pop_front();
            }
        }
        (realized, left)
    }
}

/// Replay every wallet-token of `tape` through a FIFO lot queue. Positions
/// are marked daily at `marks[token][day]`.
pub fn oracle_pnl(tape: &TradeTape, marks: &[Vec<Price>]) -> OracleResult {
    OracleResult {
        ledgers: tape.ledgers().map(|t| oracle_ledger(&tape.params, t, marks)).collect(),
    }
}

/// Replay one wallet-token's trades, which must be in timestamp order.
pub fn oracle_ledger(params: &ScenarioParams, trades: &[Trade], marks: &[Vec<Price>]) -> OracleLedger {
    let start = params.start;
    let (wallet, token) = (trades[0].wallet, trades[0].token);
    let first_day = (trades[0].date() - start).num_days() as usize;
    let mut queue = FifoQueue::default();
    let mut realized = Decimal::ZERO;
    let mut bound = Decimal::ZERO;
    let mut unmatched = Decimal::ZERO;
    let mut sells = Vec::new();
    let mut points = Vec::with_capacity(params.days - first_day);
    let mut rest = trades;
    for day in first_day..params.days {
        let date = start + chrono::Days::new(day as u64);
        let n = rest.iter().take_while(|t| t.date() == date).count();
        let (today, later) = rest.split_at(n);
        rest = later;
        for t in today {
            let (q, p) = (t.quantity.value(), t.price.value());
            match t.side {
                Side::Buy => queue.buy(q, p),
                Side::Sell => {
                    let (r, left) = queue.sell(q, p);
                    realized += r;
                    unmatched += left;
                    sells.push(OracleSell {
                        timestamp: t.timestamp,
                        quantity: t.quantity,
                        price: t.price,
                        realized: Money::new(r),
                    });
                }
            }
        }
        let round_trip: Decimal = today
            .iter()
            .filter(|t| t.round_trip && t.side == Side::Buy)
            .map(|t| t.quantity.value())
            .sum();
        if !round_trip.is_zero() {
            let hi = today.iter().map(|t| t.price).max().expect("non-empty");
            let lo = today.iter().map(|t| t.price).min().expect("non-empty");
            bound += round_trip * (hi - lo).value();
        }
        let mark = marks[token as usize][day].value();
        let unrealized = queue.quantity * mark - queue.cost;
        points.push(OraclePoint {
            date,
            quantity: Quantity::new(queue.quantity),
            realized_cum: Money::new(realized),
            cost_basis: Money::new(queue.cost),
            unrealized: Money::new(unrealized),
            total: Money::new(realized + unrealized),
            netting_bound: Money::new(bound),
        });
    }
    OracleLedger {
        wallet: wallet_name(wallet),
        token: token_name(token),
        sells,
        points,
        unmatched: Quantity::new(unmatched),
    }
}
