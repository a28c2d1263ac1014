//! Dense daily series built from sparse observations.
//!
//! Balances are forward-filled per token account, then summed per wallet.
//! Prices are reduced to a capped daily median and forward-filled. Nothing is
//! ever filled backwards: a series starts on its first real observation.

use std::collections::BTreeMap;
use std::ops::AddAssign;

use thiserror::Error;

use crate::model::{days_between, BalanceRecord, Date, LedgerKey, Price, PriceObservation, Quantity};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("no observations to build a series from")]
    Empty,
    #[error("records are not sorted by date or repeat a date ({0})")]
    Unsorted(Date),
    #[error("records mix different keys")]
    MixedKeys,
    #[error("end date {end} precedes last observation {last}")]
    EndBeforeData { end: Date, last: Date },
    #[error("balance history ends {balance_last} before prices begin {price_first}")]
    Disjoint { balance_last: Date, price_first: Date },
    #[error("price series starts {price_first}, after the analysis end {end}")]
    StartsAfterEnd { price_first: Date, end: Date },
}

/// One value per consecutive day starting at `first`. Never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailySeries<T> {
    first: Date,
    values: Vec<T>,
}

impl<T> DailySeries<T> {
    pub fn new(first: Date, values: Vec<T>) -> Result<Self, GridError> {
        if values.is_empty() {
            return Err(GridError::Empty);
        }
        Ok(DailySeries { first, values })
    }

    pub fn first(&self) -> Date {
        self.first
    }

    pub fn last(&self) -> Date {
        self.first + chrono::Duration::days(self.values.len() as i64 - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn dates(&self) -> impl Iterator<Item = Date> + '_ {
        self.first.iter_days().take(self.values.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = (Date, &T)> + '_ {
        self.dates().zip(self.values.iter())
    }

    /// Value on `date` if it lies inside the series.
    pub fn get(&self, date: Date) -> Option<&T> {
        let i = days_between(self.first, date);
        if i < 0 {
            return None;
        }
        self.values.get(i as usize)
    }

    /// Value on `date`, carrying the last value forward past the end.
    /// `None` before the first day.
    pub fn at_or_before(&self, date: Date) -> Option<&T> {
        let i = days_between(self.first, date);
        if i < 0 {
            return None;
        }
        self.values.get(i as usize).or_else(|| self.values.last())
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> DailySeries<U> {
        DailySeries {
            first: self.first,
            values: self.values.iter().map(f).collect(),
        }
    }
}

impl<T: Clone> DailySeries<T> {
    /// Restrict to `[from, to]`, forward-filling past the current end.
    /// Returns `None` when `from` precedes the first day or `from > to`.
    pub fn window(&self, from: Date, to: Date) -> Option<DailySeries<T>> {
        if from < self.first || from > to {
            return None;
        }
        let values = from
            .iter_days()
            .take_while(|d| *d <= to)
            .map(|d| self.at_or_before(d).cloned().expect("within series"))
            .collect();
        Some(DailySeries { first: from, values })
    }
}

/// Element-wise sum over the union of the date ranges. Each series counts as
/// zero before its first day and keeps its last value after its last day.
pub fn sum_forward_filled<T>(series: &[&DailySeries<T>]) -> Option<DailySeries<T>>
where
    T: Copy + Default + AddAssign,
{
    let first = series.iter().map(|s| s.first()).min()?;
    let last = series.iter().map(|s| s.last()).max()?;
    let len = days_between(first, last) as usize + 1;
    let mut values = vec![T::default(); len];
    for s in series {
        let offset = days_between(first, s.first()) as usize;
        for (slot, v) in values[offset..].iter_mut().zip(s.values()) {
            *slot += *v;
        }
        let tail = *s.values().last().expect("non-empty");
        for slot in values[offset + s.len()..].iter_mut() {
            *slot += tail;
        }
    }
    Some(DailySeries { first, values })
}

/// Forward-fill the balance history of a single token account up to `end`.
pub fn fill_account_series(records: &[BalanceRecord], end: Date) -> Result<DailySeries<Quantity>, GridError> {
    let head = records.first().ok_or(GridError::Empty)?;
    for pair in records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.wallet != b.wallet || a.account != b.account || a.token != b.token {
            return Err(GridError::MixedKeys);
        }
        if b.date <= a.date {
            return Err(GridError::Unsorted(b.date));
        }
    }
    let last = records.last().expect("non-empty").date;
    if end < last {
        return Err(GridError::EndBeforeData { end, last });
    }
    fill_points(head.date, records.iter().map(|r| (r.date, r.balance)), end)
}

/// Dense carry-forward of sorted, unique `(date, value)` points.
fn fill_points<T: Copy>(first: Date, points: impl Iterator<Item = (Date, T)>, end: Date) -> Result<DailySeries<T>, GridError> {
    let len = days_between(first, end) as usize + 1;
    let mut values: Vec<T> = Vec::with_capacity(len);
    let mut current: Option<T> = None;
    let mut day = first;
    for (date, value) in points {
        while day < date {
            values.push(current.expect("first point opens the series"));
            day = day.succ_opt().expect("date in range");
        }
        current = Some(value);
    }
    let current = current.ok_or(GridError::Empty)?;
    while values.len() < len {
        values.push(current);
    }
    DailySeries::new(first, values)
}

/// Total wallet balance across its token accounts for one token.
pub fn aggregate_wallet_balances(series: &[DailySeries<Quantity>]) -> Result<DailySeries<Quantity>, GridError> {
    let refs: Vec<&DailySeries<Quantity>> = series.iter().collect();
    sum_forward_filled(&refs).ok_or(GridError::Empty)
}

/// Median of each UTC day's observations after discarding prices strictly
/// above `cap`. Days with no surviving observation are absent.
pub fn daily_median_price(observations: &[PriceObservation], cap: Option<Price>) -> BTreeMap<Date, Price> {
    let mut by_day: BTreeMap<Date, Vec<Price>> = BTreeMap::new();
    for obs in observations {
        if cap.is_some_and(|c| obs.price > c) {
            continue;
        }
        by_day.entry(obs.date()).or_default().push(obs.price);
    }
    by_day
        .into_iter()
        .map(|(day, mut prices)| {
            prices.sort_unstable();
            (day, median_of_sorted(&prices))
        })
        .collect()
}

fn median_of_sorted(sorted: &[Price]) -> Price {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        sorted[n / 2 - 1].midpoint(sorted[n / 2])
    }
}

/// Dense price series from the first priced day through `end`.
pub fn fill_price_series(daily: &BTreeMap<Date, Price>, end: Date) -> Result<DailySeries<Price>, GridError> {
    let (&first, _) = daily.first_key_value().ok_or(GridError::Empty)?;
    let (&last, _) = daily.last_key_value().expect("non-empty");
    if end < last {
        return Err(GridError::EndBeforeData { end, last });
    }
    fill_points(first, daily.iter().map(|(d, p)| (*d, *p)), end)
}

/// Quantity and price of one ledger over an identical date range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedLedgerInput {
    pub key: LedgerKey,
    pub quantity: DailySeries<Quantity>,
    pub price: DailySeries<Price>,
}

impl AlignedLedgerInput {
    pub fn first(&self) -> Date {
        self.quantity.first()
    }

    pub fn len(&self) -> usize {
        self.quantity.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dates(&self) -> impl Iterator<Item = Date> + '_ {
        self.quantity.dates()
    }
}

/// Put a wallet's balance and its token's price on the common range
/// `[max(first days), end]`. When balances start before prices, the earlier
/// days are dropped and the balance on the first priced day becomes the
/// opening position.
pub fn align(
    key: LedgerKey,
    quantity: &DailySeries<Quantity>,
    price: &DailySeries<Price>,
    end: Date,
) -> Result<AlignedLedgerInput, GridError> {
    if quantity.last() < price.first() {
        return Err(GridError::Disjoint {
            balance_last: quantity.last(),
            price_first: price.first(),
        });
    }
    let start = quantity.first().max(price.first());
    if start > end {
        return Err(GridError::StartsAfterEnd {
            price_first: price.first(),
            end,
        });
    }
    Ok(AlignedLedgerInput {
        key,
        quantity: quantity.window(start, end).expect("start within quantity range"),
        price: price.window(start, end).expect("start within price range"),
    })
}
