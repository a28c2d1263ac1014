//! FIFO realized and mark-to-market unrealized PnL for one wallet-token ledger.
//!
//! Trades are inferred from day-over-day balance changes: a net increase is a
//! buy at that day's price, a net decrease a sell. Sells are matched to buys
//! by intersecting cumulative quantity ranges. A sell lot covering
//! `[S[s-1], S[s]]` takes from the buy lot covering `[B[b-1], B[b]]`
//!
//! ```text
//! m(s, b) = max(0, min(B[b], S[s]) - max(B[b-1], S[s-1]))
//! ```
//!
//! which is exactly first-in first-out consumption. From the matches:
//!
//! * realized PnL of a sell is `sum_b m(s, b) * (sell price - buy price of b)`,
//!   accumulated over sell dates;
//! * cost basis is cumulative buy notional minus cumulative FIFO cost of the
//!   sold quantity, floored at zero;
//! * unrealized PnL is `quantity * price - cost basis`;
//! * total PnL is cumulative realized plus unrealized.

use crate::grid::{AlignedLedgerInput, DailySeries};
use crate::model::{days_between, Date, LedgerKey, Money, Price, Quantity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

/// One day's net flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferredTrade {
    pub date: Date,
    pub side: Side,
    pub quantity: Quantity,
    pub price: Price,
}

/// A buy or sell lot with its running cumulative quantity. Indices are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lot {
    pub index: usize,
    pub date: Date,
    pub quantity: Quantity,
    pub price: Price,
    pub cumulative: Quantity,
}

impl Lot {
    /// Lower end of the lot's cumulative range.
    pub fn start(&self) -> Quantity {
        self.cumulative - self.quantity
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LotMatch {
    pub sell: usize,
    pub buy: usize,
    pub quantity: Quantity,
    pub sell_price: Price,
    pub buy_price: Price,
}

impl LotMatch {
    pub fn realized(&self) -> Money {
        self.quantity * (self.sell_price - self.buy_price)
    }

    pub fn cost(&self) -> Money {
        self.quantity * self.buy_price
    }
}

/// One row of a ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnlPoint {
    pub date: Date,
    pub quantity: Quantity,
    pub price: Price,
    pub buy_notional_cum: Money,
    pub sold_cost_cum: Money,
    pub cost_basis: Money,
    pub realized_cum: Money,
    pub unrealized: Money,
    pub total: Money,
}

/// The three additive PnL components of one day.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PnlTotals {
    pub realized: Money,
    pub unrealized: Money,
    pub total: Money,
}

impl std::ops::AddAssign for PnlTotals {
    fn add_assign(&mut self, rhs: PnlTotals) {
        self.realized += rhs.realized;
        self.unrealized += rhs.unrealized;
        self.total += rhs.total;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerResult {
    pub key: LedgerKey,
    pub points: Vec<PnlPoint>,
    pub buys: Vec<Lot>,
    pub sells: Vec<Lot>,
    pub matches: Vec<LotMatch>,
    /// Sold quantity that found no earlier buy. Zero on consistent data.
    pub unmatched_sell_quantity: Quantity,
}

impl LedgerResult {
    pub fn first(&self) -> Date {
        self.points[0].date
    }

    pub fn last_point(&self) -> &PnlPoint {
        self.points.last().expect("ledger has at least one day")
    }

    pub fn totals(&self) -> DailySeries<PnlTotals> {
        let values = self
            .points
            .iter()
            .map(|p| PnlTotals {
                realized: p.realized_cum,
                unrealized: p.unrealized,
                total: p.total,
            })
            .collect();
        DailySeries::new(self.first(), values).expect("non-empty")
    }

    pub fn total_series(&self) -> DailySeries<Money> {
        DailySeries::new(self.first(), self.points.iter().map(|p| p.total).collect()).expect("non-empty")
    }

    /// Mark-to-market value of the position, `quantity * price`, per day.
    pub fn market_value_series(&self) -> DailySeries<Money> {
        DailySeries::new(self.first(), self.points.iter().map(|p| p.quantity * p.price).collect())
            .expect("non-empty")
    }
}

/// Daily net flows, with the opening balance counted as a buy on day one.
pub fn infer_trades(input: &AlignedLedgerInput) -> Vec<InferredTrade> {
    let mut trades = Vec::new();
    let mut previous = Quantity::ZERO;
    for ((date, qty), price) in input.quantity.iter().zip(input.price.values()) {
        let delta = qty.delta_from(previous);
        if !delta.is_zero() {
            trades.push(InferredTrade {
                date,
                side: if delta.is_sign_positive() { Side::Buy } else { Side::Sell },
                quantity: Quantity::new(delta.abs()),
                price: *price,
            });
        }
        previous = *qty;
    }
    trades
}

/// Split trades into buy and sell lots with running cumulative quantities.
pub fn build_lots(trades: &[InferredTrade]) -> (Vec<Lot>, Vec<Lot>) {
    let (mut buys, mut sells) = (Vec::new(), Vec::new());
    let (mut bought, mut sold) = (Quantity::ZERO, Quantity::ZERO);
    for t in trades {
        let (lots, cumulative) = match t.side {
            Side::Buy => (&mut buys, &mut bought),
            Side::Sell => (&mut sells, &mut sold),
        };
        *cumulative += t.quantity;
        lots.push(Lot {
            index: lots.len() + 1,
            date: t.date,
            quantity: t.quantity,
            price: t.price,
            cumulative: *cumulative,
        });
    }
    (buys, sells)
}

/// Overlap of sell lot `s` with buy lot `b` per the cumulative-range rule.
pub fn overlap(sell: &Lot, buy: &Lot) -> Quantity {
    let hi = sell.cumulative.min(buy.cumulative);
    let lo = sell.start().max(buy.start());
    if hi > lo {
        hi - lo
    } else {
        Quantity::ZERO
    }
}

/// All positive-overlap (sell, buy) pairs in (sell, buy) order.
///
/// Both lot lists tile their cumulative axis, so a single merge pass over
/// the two lists visits every pair whose ranges can intersect.
pub fn fifo_match(buys: &[Lot], sells: &[Lot]) -> Vec<LotMatch> {
    let mut matches = Vec::new();
    let (mut b, mut s) = (0, 0);
    while b < buys.len() && s < sells.len() {
        let (buy, sell) = (&buys[b], &sells[s]);
        let m = overlap(sell, buy);
        if !m.is_zero() {
            matches.push(LotMatch {
                sell: sell.index,
                buy: buy.index,
                quantity: m,
                sell_price: sell.price,
                buy_price: buy.price,
            });
        }
        if buy.cumulative <= sell.cumulative {
            b += 1;
        } else {
            s += 1;
        }
    }
    matches
}

/// Realized PnL of each sell lot, indexed like `sells`.
pub fn realized_pnl(matches: &[LotMatch], sells: &[Lot]) -> Vec<Money> {
    let mut out = vec![Money::ZERO; sells.len()];
    for m in matches {
        out[m.sell - 1] += m.realized();
    }
    out
}

fn day_offset(first: Date, date: Date, days: usize) -> usize {
    let i = days_between(first, date);
    assert!(i >= 0 && (i as usize) < days, "{date} outside ledger range");
    i as usize
}

/// Running sum of per-sell realized PnL over `days` days from `first`.
pub fn cumulative_realized(per_sell: &[Money], sells: &[Lot], first: Date, days: usize) -> DailySeries<Money> {
    let mut daily = vec![Money::ZERO; days];
    for (pnl, sell) in per_sell.iter().zip(sells) {
        daily[day_offset(first, sell.date, days)] += *pnl;
    }
    running_sum(first, daily)
}

fn running_sum(first: Date, mut daily: Vec<Money>) -> DailySeries<Money> {
    let mut acc = Money::ZERO;
    for v in daily.iter_mut() {
        acc += *v;
        *v = acc;
    }
    DailySeries::new(first, daily).expect("ledger has at least one day")
}

/// Cumulative buy notional, cumulative FIFO cost of sold quantity, and the
/// remaining cost basis per day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostBasisSeries {
    pub buy_notional_cum: DailySeries<Money>,
    pub sold_cost_cum: DailySeries<Money>,
    pub cost_basis: DailySeries<Money>,
}

pub fn cost_basis_series(buys: &[Lot], sells: &[Lot], matches: &[LotMatch], first: Date, days: usize) -> CostBasisSeries {
    let mut bought = vec![Money::ZERO; days];
    for b in buys {
        bought[day_offset(first, b.date, days)] += b.quantity * b.price;
    }
    let mut sold = vec![Money::ZERO; days];
    for m in matches {
        let date = sells[m.sell - 1].date;
        sold[day_offset(first, date, days)] += m.cost();
    }
    let buy_notional_cum = running_sum(first, bought);
    let sold_cost_cum = running_sum(first, sold);
    let cost_basis = DailySeries::new(
        first,
        buy_notional_cum
            .values()
            .iter()
            .zip(sold_cost_cum.values())
            .map(|(b, s)| (*b - *s).max(Money::ZERO))
            .collect(),
    )
    .expect("non-empty");
    CostBasisSeries {
        buy_notional_cum,
        sold_cost_cum,
        cost_basis,
    }
}

pub fn unrealized_pnl(quantity: Quantity, price: Price, cost_basis: Money) -> Money {
    quantity * price - cost_basis
}

/// Full daily ledger for one aligned wallet-token input.
pub fn compute_ledger(input: &AlignedLedgerInput) -> LedgerResult {
    let first = input.first();
    let days = input.len();
    let trades = infer_trades(input);
    let (buys, sells) = build_lots(&trades);
    let matches = fifo_match(&buys, &sells);

    let per_sell = realized_pnl(&matches, &sells);
    let realized = cumulative_realized(&per_sell, &sells, first, days);
    let basis = cost_basis_series(&buys, &sells, &matches, first, days);

    let points = input
        .dates()
        .enumerate()
        .map(|(i, date)| {
            let quantity = input.quantity.values()[i];
            let price = input.price.values()[i];
            let cost_basis = basis.cost_basis.values()[i];
            let realized_cum = realized.values()[i];
            let unrealized = unrealized_pnl(quantity, price, cost_basis);
            PnlPoint {
                date,
                quantity,
                price,
                buy_notional_cum: basis.buy_notional_cum.values()[i],
                sold_cost_cum: basis.sold_cost_cum.values()[i],
                cost_basis,
                realized_cum,
                unrealized,
                total: realized_cum + unrealized,
            }
        })
        .collect();

    let sold: Quantity = sells.iter().map(|s| s.quantity).sum();
    let matched: Quantity = matches.iter().map(|m| m.quantity).sum();

    LedgerResult {
        key: input.key.clone(),
        points,
        buys,
        sells,
        matches,
        unmatched_sell_quantity: sold - matched,
    }
}
