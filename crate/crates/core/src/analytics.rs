//! Reports over computed ledgers: wallet and treasury aggregation, summary
//! statistics, winner concentration, PnL bucket shares over time, drawdown
//! and decline-from-peak benchmarks, and market-cap to AUM ratios.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::AddAssign;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use thiserror::Error;

use crate::grid::{sum_forward_filled, DailySeries};
use crate::model::{Date, Money, Price};
use crate::pnl::LedgerResult;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("no values to summarize")]
    Empty,
    #[error("top fraction {0} is outside (0, 1]")]
    InvalidFraction(Decimal),
    #[error("bucket boundaries must be strictly increasing")]
    NonIncreasingBoundaries,
    #[error("no wallet has a PnL history on {0}")]
    NoWalletsOnDate(Date),
    #[error("series value at position {0} is not positive")]
    NonPositiveValue(usize),
    #[error("series do not overlap")]
    NoOverlap,
    #[error("AUM is zero on every overlapping day")]
    NoComparableDays,
}

/// Element-wise sum over the union of date ranges. Each series contributes
/// zero before its first day and its last value after its last day.
pub fn aggregate_series<T>(series: &[DailySeries<T>]) -> Option<DailySeries<T>>
where
    T: Copy + Default + AddAssign,
{
    let refs: Vec<&DailySeries<T>> = series.iter().collect();
    sum_forward_filled(&refs)
}

/// Portfolio mark-to-market value (sum of quantity times price) across ledgers.
pub fn portfolio_value(ledgers: &[&LedgerResult]) -> Option<DailySeries<Money>> {
    let values: Vec<DailySeries<Money>> = ledgers.iter().map(|l| l.market_value_series()).collect();
    aggregate_series(&values)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalletTotal {
    pub wallet: String,
    pub group: String,
    pub total: Money,
}

/// Sum each wallet's ledger totals, carried forward to `snapshot`, per
/// group. Ledgers that start after the snapshot contribute nothing; wallets
/// without any ledger never appear. Output is sorted by (group, wallet).
pub fn snapshot_totals<'a, I>(ledgers: I, snapshot: Date) -> Vec<WalletTotal>
where
    I: IntoIterator<Item = (&'a str, &'a str, &'a DailySeries<Money>)>,
{
    let mut acc: BTreeMap<(&str, &str), Money> = BTreeMap::new();
    for (wallet, group, series) in ledgers {
        let slot = acc.entry((group, wallet)).or_default();
        if let Some(v) = series.at_or_before(snapshot) {
            *slot += *v;
        }
    }
    acc.into_iter()
        .map(|((group, wallet), total)| WalletTotal {
            wallet: wallet.to_string(),
            group: group.to_string(),
            total,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub users: usize,
    pub mean: Money,
    pub median: Money,
    pub min: Money,
    pub max: Money,
    pub pct_profitable: f64,
    pub pct_loss: f64,
    pub pct_zero: f64,
}

fn median_sorted(sorted: &[Money]) -> Money {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        Money::new((sorted[n / 2 - 1].value() + sorted[n / 2].value()) / Decimal::TWO)
    }
}

fn fraction(count: usize, of: usize) -> f64 {
    count as f64 / of as f64
}

/// Users, mean, median, min, max and the profitable / loss / exactly-zero
/// shares. Classification uses the exact computed total.
pub fn summary_stats(totals: &[WalletTotal]) -> Result<SummaryStats, AnalyticsError> {
    if totals.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let mut values: Vec<Money> = totals.iter().map(|t| t.total).collect();
    values.sort_unstable();
    let n = values.len();
    let sum: Money = values.iter().copied().sum();
    let positive = values.iter().filter(|v| v.value() > Decimal::ZERO).count();
    let negative = values.iter().filter(|v| v.value() < Decimal::ZERO).count();
    let zero = n - positive - negative;
    Ok(SummaryStats {
        users: n,
        mean: Money::new(sum.value() / Decimal::from(n)),
        median: median_sorted(&values),
        min: values[0],
        max: values[n - 1],
        pct_profitable: fraction(positive, n),
        pct_loss: fraction(negative, n),
        pct_zero: fraction(zero, n),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub winners: usize,
    pub top_fraction: Decimal,
    pub top_count: usize,
    pub top_sum: Money,
    pub winners_sum: Money,
    /// `None` when there are no winners.
    pub top_share: Option<f64>,
}

/// Size of the top block: `max(1, floor(fraction * winners))`, or zero
/// without winners.
pub fn top_count(winners: usize, top_fraction: Decimal) -> usize {
    if winners == 0 {
        return 0;
    }
    let raw = (top_fraction * Decimal::from(winners)).floor();
    raw.to_usize().unwrap_or(winners).clamp(1, winners)
}

/// Share of all positive PnL held by the top `top_fraction` of winners.
/// Winners are ranked by total descending, ties by wallet id ascending.
pub fn concentration(totals: &[WalletTotal], top_fraction: Decimal) -> Result<ConcentrationReport, AnalyticsError> {
    if top_fraction <= Decimal::ZERO || top_fraction > Decimal::ONE {
        return Err(AnalyticsError::InvalidFraction(top_fraction));
    }
    let mut winners: Vec<&WalletTotal> = totals.iter().filter(|t| t.total.value() > Decimal::ZERO).collect();
    winners.sort_by(|a, b| b.total.cmp(&a.total).then_with(|| a.wallet.cmp(&b.wallet)));
    let count = top_count(winners.len(), top_fraction);
    let top_sum: Money = winners[..count].iter().map(|t| t.total).sum();
    let winners_sum: Money = winners.iter().map(|t| t.total).sum();
    let top_share = (!winners.is_empty()).then(|| {
        (top_sum.value() / winners_sum.value())
            .to_f64()
            .expect("share is finite")
    });
    Ok(ConcentrationReport {
        winners: winners.len(),
        top_fraction,
        top_count: count,
        top_sum,
        winners_sum,
        top_share,
    })
}

/// A PnL bucket: a half-open interval `(lower, upper]` (open at an infinite
/// end, or at zero when split around the zero bucket), or exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bucket {
    Range {
        lower: Option<Money>,
        upper: Option<Money>,
        upper_inclusive: bool,
    },
    Zero,
}

impl Bucket {
    pub fn contains(&self, value: Money) -> bool {
        match *self {
            Bucket::Zero => value.is_zero(),
            Bucket::Range {
                lower,
                upper,
                upper_inclusive,
            } => {
                lower.is_none_or(|lo| value > lo)
                    && upper.is_none_or(|hi| if upper_inclusive { value <= hi } else { value < hi })
            }
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bucket::Zero => write!(f, "{{0}}"),
            Bucket::Range {
                lower,
                upper,
                upper_inclusive,
            } => {
                match lower {
                    Some(lo) => write!(f, "({lo},")?,
                    None => write!(f, "(-inf,")?,
                }
                match (upper, upper_inclusive) {
                    (Some(hi), true) => write!(f, "{hi}]"),
                    (Some(hi), false) => write!(f, "{hi})"),
                    (None, _) => write!(f, "inf)"),
                }
            }
        }
    }
}

/// Ordered partition of the real line induced by `boundaries`, with the
/// interval holding zero split into `(lo, 0)`, `{0}` and `(0, hi]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketScheme {
    boundaries: Vec<Money>,
    buckets: Vec<Bucket>,
    zero_interval: usize,
    upper_half_present: bool,
}

/// Default USD boundaries for PnL buckets.
pub fn default_boundaries() -> Vec<Money> {
    [-10_000i64, -1_000, -100, 0, 100, 1_000, 10_000]
        .iter()
        .map(|v| Money::new(Decimal::from(*v)))
        .collect()
}

impl BucketScheme {
    pub fn new(boundaries: &[Money]) -> Result<Self, AnalyticsError> {
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AnalyticsError::NonIncreasingBoundaries);
        }
        let bounds: Vec<Option<Money>> = std::iter::once(None)
            .chain(boundaries.iter().copied().map(Some))
            .chain(std::iter::once(None))
            .collect();
        // Interval i is (bounds[i], bounds[i + 1]]; the one holding zero has i = #(b < 0).
        let zero_interval = boundaries.partition_point(|b| b.value() < Decimal::ZERO);
        let mut buckets = Vec::with_capacity(boundaries.len() + 3);
        let mut upper_half_present = false;
        for i in 0..bounds.len() - 1 {
            let (lower, upper) = (bounds[i], bounds[i + 1]);
            if i == zero_interval {
                buckets.push(Bucket::Range {
                    lower,
                    upper: Some(Money::ZERO),
                    upper_inclusive: false,
                });
                buckets.push(Bucket::Zero);
                if upper.is_none_or(|hi| !hi.is_zero()) {
                    upper_half_present = true;
                    buckets.push(Bucket::Range {
                        lower: Some(Money::ZERO),
                        upper,
                        upper_inclusive: upper.is_some(),
                    });
                }
            } else {
                buckets.push(Bucket::Range {
                    lower,
                    upper,
                    upper_inclusive: upper.is_some(),
                });
            }
        }
        Ok(BucketScheme {
            boundaries: boundaries.to_vec(),
            buckets,
            zero_interval,
            upper_half_present,
        })
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    pub fn labels(&self) -> Vec<String> {
        self.buckets.iter().map(|b| b.to_string()).collect()
    }

    /// Index of the bucket holding `value`.
    pub fn classify(&self, value: Money) -> usize {
        if value.is_zero() {
            return self.zero_interval + 1;
        }
        let interval = self.boundaries.partition_point(|b| *b < value);
        let shift = 1 + usize::from(self.upper_half_present);
        match interval.cmp(&self.zero_interval) {
            std::cmp::Ordering::Less => interval,
            std::cmp::Ordering::Equal if value.is_sign_negative() => interval,
            std::cmp::Ordering::Equal => interval + 2,
            std::cmp::Ordering::Greater => interval + shift,
        }
    }
}

/// Share of wallets per bucket for each requested date.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketMatrix {
    pub buckets: Vec<Bucket>,
    pub dates: Vec<Date>,
    /// `counts[d][k]`: wallets in bucket `k` on `dates[d]`.
    pub counts: Vec<Vec<usize>>,
    pub shares: Vec<Vec<f64>>,
}

impl BucketMatrix {
    pub fn wallets_on(&self, date_index: usize) -> usize {
        self.counts[date_index].iter().sum()
    }
}

/// Accumulates bucket counts one wallet at a time, so large populations
/// never need to be held in memory. Counters over disjoint wallets merge
/// by addition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketCounter {
    scheme: BucketScheme,
    dates: Vec<Date>,
    counts: Vec<Vec<usize>>,
}

impl BucketCounter {
    pub fn new(scheme: BucketScheme, dates: &[Date]) -> Self {
        let k = scheme.buckets().len();
        BucketCounter {
            scheme,
            dates: dates.to_vec(),
            counts: vec![vec![0; k]; dates.len()],
        }
    }

    /// Count one wallet's total series. The wallet is absent before its first day.
    pub fn add(&mut self, wallet: &DailySeries<Money>) {
        for (row, date) in self.counts.iter_mut().zip(&self.dates) {
            if let Some(v) = wallet.at_or_before(*date) {
                row[self.scheme.classify(*v)] += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &BucketCounter) {
        assert_eq!(self.dates, other.dates, "counters cover different dates");
        for (mine, theirs) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
    }

    /// Shares per date. Dates with no wallets are an error.
    pub fn finish(self) -> Result<BucketMatrix, AnalyticsError> {
        let mut shares = Vec::with_capacity(self.dates.len());
        for (row, date) in self.counts.iter().zip(&self.dates) {
            let n: usize = row.iter().sum();
            if n == 0 {
                return Err(AnalyticsError::NoWalletsOnDate(*date));
            }
            shares.push(row.iter().map(|c| fraction(*c, n)).collect());
        }
        Ok(BucketMatrix {
            buckets: self.scheme.buckets,
            dates: self.dates,
            counts: self.counts,
            shares,
        })
    }

    /// Like [`finish`](Self::finish), but dates with no wallets are dropped.
    pub fn finish_populated(mut self) -> BucketMatrix {
        let keep: Vec<bool> = self.counts.iter().map(|row| row.iter().any(|c| *c > 0)).collect();
        let mut flags = keep.iter();
        self.dates.retain(|_| *flags.next().expect("same length"));
        let mut flags = keep.iter();
        self.counts.retain(|_| *flags.next().expect("same length"));
        self.finish().expect("every remaining date has wallets")
    }
}

/// Bucket every wallet's total, carried forward to each date. A wallet
/// enters the population on the first day of its series.
pub fn bucket_distribution(
    wallets: &[DailySeries<Money>],
    boundaries: &[Money],
    dates: &[Date],
) -> Result<BucketMatrix, AnalyticsError> {
    let mut counter = BucketCounter::new(BucketScheme::new(boundaries)?, dates);
    for w in wallets {
        counter.add(w);
    }
    counter.finish()
}

fn check_positive(values: &[Decimal]) -> Result<(), AnalyticsError> {
    if values.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    match values.iter().position(|v| *v <= Decimal::ZERO) {
        Some(i) => Err(AnalyticsError::NonPositiveValue(i)),
        None => Ok(()),
    }
}

fn to_fraction(d: Decimal) -> f64 {
    d.to_f64().expect("fraction in [0, 1]")
}

/// Largest peak-to-trough fall, as a fraction of the running peak.
pub fn max_drawdown(values: &[Decimal]) -> Result<f64, AnalyticsError> {
    check_positive(values)?;
    let mut peak = values[0];
    let mut worst = Decimal::ZERO;
    for v in values {
        peak = peak.max(*v);
        worst = worst.max((peak - *v) / peak);
    }
    Ok(to_fraction(worst))
}

/// Fall of the final value from the all-time high, and the first day the
/// high was reached.
pub fn decline_from_ath(series: &DailySeries<Decimal>) -> Result<(f64, Date), AnalyticsError> {
    let values = series.values();
    check_positive(values)?;
    let (mut ath, mut ath_date) = (values[0], series.first());
    for (date, v) in series.iter() {
        if *v > ath {
            ath = *v;
            ath_date = date;
        }
    }
    let last = *values.last().expect("non-empty");
    Ok((to_fraction((ath - last) / ath), ath_date))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenBenchmark {
    pub token: String,
    pub first: Date,
    pub last: Date,
    pub max_drawdown: f64,
    pub decline_from_ath: f64,
    pub ath_date: Date,
}

impl TokenBenchmark {
    pub fn from_prices(token: &str, prices: &DailySeries<Price>) -> Result<Self, AnalyticsError> {
        let values = prices.map(|p| p.value());
        let max_drawdown = max_drawdown(values.values())?;
        let (decline_from_ath, ath_date) = decline_from_ath(&values)?;
        Ok(TokenBenchmark {
            token: token.to_string(),
            first: prices.first(),
            last: prices.last(),
            max_drawdown,
            decline_from_ath,
            ath_date,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub tokens: Vec<TokenBenchmark>,
    pub benchmark: TokenBenchmark,
    /// Mean decline-from-peak over `tokens`; `None` when there are none.
    pub average_decline: Option<f64>,
    /// Tokens left out because their series has a non-positive price.
    pub skipped: Vec<String>,
}

/// Compare every token's price path with the benchmark token's.
pub fn benchmark_report(
    prices: &BTreeMap<String, DailySeries<Price>>,
    benchmark: &str,
    benchmark_prices: &DailySeries<Price>,
) -> Result<BenchmarkReport, AnalyticsError> {
    let benchmark_metrics = TokenBenchmark::from_prices(benchmark, benchmark_prices)?;
    let mut tokens = Vec::new();
    let mut skipped = Vec::new();
    for (token, series) in prices {
        if token == benchmark {
            continue;
        }
        match TokenBenchmark::from_prices(token, series) {
            Ok(t) => tokens.push(t),
            Err(_) => skipped.push(token.clone()),
        }
    }
    let average_decline =
        (!tokens.is_empty()).then(|| tokens.iter().map(|t| t.decline_from_ath).sum::<f64>() / tokens.len() as f64);
    Ok(BenchmarkReport {
        tokens,
        benchmark: benchmark_metrics,
        average_decline,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McToAum {
    pub ratios: Vec<(Date, Decimal)>,
    pub peak: Decimal,
    pub peak_date: Date,
    /// Overlapping days with zero AUM, excluded from the ratio series.
    pub skipped_days: Vec<Date>,
}

/// Market cap divided by AUM on each overlapping day.
pub fn mc_to_aum(mcap: &DailySeries<Money>, aum: &DailySeries<Money>) -> Result<McToAum, AnalyticsError> {
    let from = mcap.first().max(aum.first());
    let to = mcap.last().min(aum.last());
    if from > to {
        return Err(AnalyticsError::NoOverlap);
    }
    let mut ratios = Vec::new();
    let mut skipped_days = Vec::new();
    for day in from.iter_days().take_while(|d| *d <= to) {
        let (m, a) = (mcap.get(day).expect("in range"), aum.get(day).expect("in range"));
        if a.value() <= Decimal::ZERO {
            skipped_days.push(day);
            continue;
        }
        ratios.push((day, m.value() / a.value()));
    }
    let &(peak_date, peak) = ratios
        .iter()
        .fold(None, |best: Option<&(Date, Decimal)>, r| match best {
            Some(b) if b.1 >= r.1 => Some(b),
            _ => Some(r),
        })
        .ok_or(AnalyticsError::NoComparableDays)?;
    Ok(McToAum {
        ratios,
        peak,
        peak_date,
        skipped_days,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(day: u32) -> Date {
        Date::from_ymd_opt(2024, 11, day).unwrap()
    }

    fn m(v: i64) -> Money {
        Money::new(Decimal::from(v))
    }

    fn dec(s: &str) -> Decimal {
        s.parse().unwrap()
    }

    fn series(first: u32, values: &[i64]) -> DailySeries<Money> {
        DailySeries::new(d(first), values.iter().map(|v| m(*v)).collect()).unwrap()
    }

    fn wt(wallet: &str, total: i64) -> WalletTotal {
        WalletTotal {
            wallet: wallet.into(),
            group: "g".into(),
            total: m(total),
        }
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate_series(&[series(1, &[1, 2]), series(1, &[3, 3])]).unwrap();
        assert_eq!(s.values(), &[m(4), m(5)]);
        let a = series(1, &[1, 2]);
        assert_eq!(aggregate_series(std::slice::from_ref(&a)).unwrap(), a);
        let s = aggregate_series(&[series(1, &[1, 2]), series(2, &[5, 6])]).unwrap();
        assert_eq!((s.first(), s.values()), (d(1), &[m(1), m(7), m(8)][..]));
        assert!(aggregate_series::<Money>(&[]).is_none());
    }

    #[test]
    fn snapshot_examples() {
        let a = series(1, &[5, 25]);
        let t = snapshot_totals([("W1", "g", &a)], d(9));
        assert_eq!(t[0].total, m(25));

        let (x, y) = (series(1, &[10]), series(1, &[-4]));
        let t = snapshot_totals([("W1", "g", &x), ("W1", "g", &y)], d(1));
        assert_eq!(t, vec![wt("W1", 6)]);

        let t = snapshot_totals(std::iter::empty(), d(1));
        assert!(t.is_empty());
    }

    #[test]
    fn summary_examples() {
        let s = summary_stats(&[wt("a", -5), wt("b", 0), wt("c", 10)]).unwrap();
        assert_eq!(s.users, 3);
        assert_eq!(s.mean, Money::new(Decimal::from(5) / Decimal::from(3)));
        assert_eq!(s.median, m(0));
        assert_eq!((s.min, s.max), (m(-5), m(10)));
        assert_eq!((s.pct_profitable, s.pct_loss, s.pct_zero), (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0));

        let s = summary_stats(&[wt("a", 0), wt("b", 0)]).unwrap();
        assert_eq!(s.pct_zero, 1.0);

        let s = summary_stats(&[wt("a", 7)]).unwrap();
        assert_eq!((s.min, s.median, s.max), (m(7), m(7), m(7)));

        let s = summary_stats(&[wt("a", 1), wt("b", 4)]).unwrap();
        assert_eq!(s.median, Money::new(dec("2.5")));

        assert_eq!(summary_stats(&[]), Err(AnalyticsError::Empty));
    }

    #[test]
    fn concentration_examples() {
        let totals = [wt("a", 100), wt("b", 10), wt("c", 5), wt("d", 1), wt("e", -50)];
        let c = concentration(&totals, dec("0.25")).unwrap();
        assert_eq!((c.winners, c.top_count, c.top_sum), (4, 1, m(100)));
        assert!((c.top_share.unwrap() - 100.0 / 116.0).abs() < 1e-12);

        assert_eq!(top_count(259_016, dec("0.01")), 2_590);
        // 0.29 * 100 must not fall to 28 through binary rounding.
        assert_eq!(top_count(100, dec("0.29")), 29);
        assert_eq!(top_count(3, dec("0.01")), 1);

        let c = concentration(&[wt("a", 3)], dec("0.01")).unwrap();
        assert_eq!(c.top_share, Some(1.0));

        let c = concentration(&[wt("a", -3), wt("b", 0)], dec("0.01")).unwrap();
        assert_eq!((c.winners, c.top_count, c.top_share), (0, 0, None));

        assert!(concentration(&totals, dec("0")).is_err());
        assert!(concentration(&totals, dec("1.5")).is_err());
    }

    #[test]
    fn concentration_ties_break_by_wallet() {
        let c = concentration(&[wt("b", 5), wt("a", 5), wt("c", 1)], dec("0.34")).unwrap();
        assert_eq!(c.top_count, 1);
        assert_eq!(c.top_sum, m(5));
    }

    #[test]
    fn bucket_labels() {
        let s = BucketScheme::new(&[m(-10), m(0), m(10)]).unwrap();
        assert_eq!(s.labels(), vec!["(-inf,-10]", "(-10,0)", "{0}", "(0,10]", "(10,inf)"]);
        let s = BucketScheme::new(&[m(5), m(10)]).unwrap();
        assert_eq!(s.labels(), vec!["(-inf,0)", "{0}", "(0,5]", "(5,10]", "(10,inf)"]);
        let s = BucketScheme::new(&[m(-5), m(-1)]).unwrap();
        assert_eq!(s.labels(), vec!["(-inf,-5]", "(-5,-1]", "(-1,0)", "{0}", "(0,inf)"]);
        let s = BucketScheme::new(&[]).unwrap();
        assert_eq!(s.labels(), vec!["(-inf,0)", "{0}", "(0,inf)"]);
        assert_eq!(BucketScheme::new(&[m(1), m(1)]), Err(AnalyticsError::NonIncreasingBoundaries));
        assert_eq!(default_boundaries().len(), 7);
    }

    #[test]
    fn buckets_three_wallets() {
        let w = [series(1, &[5]), series(1, &[-5]), series(1, &[0])];
        let b = bucket_distribution(&w, &[m(-10), m(0), m(10)], &[d(1)]).unwrap();
        assert_eq!(b.counts[0], vec![0, 1, 1, 1, 0]);
        let third = 1.0 / 3.0;
        assert_eq!(b.shares[0], vec![0.0, third, third, third, 0.0]);
    }

    #[test]
    fn buckets_all_zero_and_crossing() {
        let w = [series(1, &[0, 0]), series(1, &[0, 0])];
        let b = bucket_distribution(&w, &default_boundaries(), &[d(1), d(2)]).unwrap();
        let zero = BucketScheme::new(&default_boundaries()).unwrap().classify(Money::ZERO);
        assert!(b.shares.iter().all(|row| row[zero] == 1.0));

        let w = [series(1, &[-3, 4])];
        let b = bucket_distribution(&w, &[m(-10), m(0), m(10)], &[d(1), d(2), d(5)]).unwrap();
        assert_eq!(b.counts[0], vec![0, 1, 0, 0, 0]);
        assert_eq!(b.counts[1], vec![0, 0, 0, 1, 0]);
        assert_eq!(b.counts[2], vec![0, 0, 0, 1, 0]);
    }

    #[test]
    fn buckets_population_grows() {
        let w = [series(1, &[1, 1]), series(2, &[-1])];
        let b = bucket_distribution(&w, &[], &[d(1), d(2)]).unwrap();
        assert_eq!(b.wallets_on(0), 1);
        assert_eq!(b.wallets_on(1), 2);
        assert!(matches!(bucket_distribution(&w, &[], &[d(1).pred_opt().unwrap()]), Err(AnalyticsError::NoWalletsOnDate(_))));
    }

    #[test]
    fn counters_merge_and_drop_empty_dates() {
        let scheme = BucketScheme::new(&[]).unwrap();
        let dates = [d(1), d(2), d(3)];
        let mut a = BucketCounter::new(scheme.clone(), &dates);
        a.add(&series(2, &[4]));
        let mut b = BucketCounter::new(scheme, &dates);
        b.add(&series(3, &[-4]));
        a.merge(&b);
        let m = a.finish_populated();
        assert_eq!(m.dates, vec![d(2), d(3)]);
        assert_eq!(m.counts, vec![vec![0, 0, 1], vec![1, 0, 1]]);
    }

    #[test]
    fn drawdown_examples() {
        let v = |xs: &[&str]| xs.iter().map(|s| dec(s)).collect::<Vec<_>>();
        assert_eq!(max_drawdown(&v(&["1", "2", "1"])).unwrap(), 0.5);
        assert_eq!(max_drawdown(&v(&["1", "2", "3"])).unwrap(), 0.0);
        assert_eq!(max_drawdown(&v(&["10", "1"])).unwrap(), 0.9);
        assert_eq!(max_drawdown(&v(&["1", "0"])), Err(AnalyticsError::NonPositiveValue(1)));
        assert_eq!(max_drawdown(&[]), Err(AnalyticsError::Empty));
    }

    #[test]
    fn decline_examples() {
        let s = |xs: &[i64]| DailySeries::new(d(1), xs.iter().map(|x| Decimal::from(*x)).collect()).unwrap();
        let (dec93, ath) = decline_from_ath(&s(&[100, 50, 7])).unwrap();
        assert!((dec93 - 0.93).abs() < 1e-12);
        assert_eq!(ath, d(1));
        assert_eq!(decline_from_ath(&s(&[4, 4, 4])).unwrap(), (0.0, d(1)));
        assert_eq!(decline_from_ath(&s(&[1, 2, 5])).unwrap(), (0.0, d(3)));
        assert!(decline_from_ath(&s(&[1, -1])).is_err());
    }

    #[test]
    fn benchmark_report_declines() {
        let p = |xs: &[i64]| DailySeries::new(d(1), xs.iter().map(|x| Price::new(Decimal::from(*x))).collect()).unwrap();
        let prices = BTreeMap::from([
            ("AGENT".to_string(), p(&[100, 50, 7])),
            ("SOL".to_string(), p(&[10, 8, 6])),
            ("DEAD".to_string(), p(&[1, 0, 0])),
        ]);
        let r = benchmark_report(&prices, "SOL", &prices["SOL"]).unwrap();
        assert_eq!(r.tokens.len(), 1);
        assert!((r.tokens[0].decline_from_ath - 0.93).abs() < 1e-12);
        assert!((r.benchmark.decline_from_ath - 0.40).abs() < 1e-12);
        assert_eq!(r.skipped, vec!["DEAD".to_string()]);
        assert!((r.average_decline.unwrap() - 0.93).abs() < 1e-12);

        let single = p(&[3]);
        let t = TokenBenchmark::from_prices("X", &single).unwrap();
        assert_eq!((t.max_drawdown, t.decline_from_ath), (0.0, 0.0));
    }

    #[test]
    fn mc_to_aum_examples() {
        let r = mc_to_aum(&series(1, &[100]), &series(1, &[10])).unwrap();
        assert_eq!(r.peak, Decimal::from(10));
        let same = series(1, &[3, 7, 9]);
        let r = mc_to_aum(&same, &same).unwrap();
        assert!(r.ratios.iter().all(|(_, x)| *x == Decimal::ONE));
        let r = mc_to_aum(&series(1, &[50_000_000]), &series(1, &[5_000])).unwrap();
        assert_eq!(r.peak, Decimal::from(10_000));

        let r = mc_to_aum(&series(1, &[10, 20, 30]), &series(2, &[0, 5, 5])).unwrap();
        assert_eq!(r.skipped_days, vec![d(2)]);
        assert_eq!((r.peak_date, r.peak), (d(3), Decimal::from(6)));

        assert_eq!(mc_to_aum(&series(1, &[1]), &series(3, &[1])), Err(AnalyticsError::NoOverlap));
        assert_eq!(mc_to_aum(&series(1, &[1]), &series(1, &[0])), Err(AnalyticsError::NoComparableDays));
    }

    fn drawdown_oracle(values: &[Decimal]) -> Decimal {
        let mut worst = Decimal::ZERO;
        for i in 0..values.len() {
            for j in i..values.len() {
                worst = worst.max((values[i] - values[j]) / values[i]);
            }
        }
        worst
    }

    proptest! {
        #[test]
        fn drawdown_matches_pairwise_scan(raw in prop::collection::vec(1u32..100_000, 1..40)) {
            let values: Vec<Decimal> = raw.iter().map(|v| Decimal::new(*v as i64, 2)).collect();
            let got = max_drawdown(&values).unwrap();
            let want = drawdown_oracle(&values).to_f64().unwrap();
            prop_assert!((got - want).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&got));
        }

        #[test]
        fn bucket_shares_sum_to_one(totals in prop::collection::vec((-20_000i64..20_000, 1u32..4), 1..60), bounds in prop::collection::btree_set(-15_000i64..15_000, 0..8)) {
            let wallets: Vec<DailySeries<Money>> = totals.iter().map(|(v, first)| series(*first, &[*v, -*v, 0])).collect();
            let boundaries: Vec<Money> = bounds.iter().map(|b| m(*b)).collect();
            let scheme = BucketScheme::new(&boundaries).unwrap();
            let b = bucket_distribution(&wallets, &boundaries, &[d(3), d(4), d(6)]).unwrap();
            for (i, row) in b.shares.iter().enumerate() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert_eq!(b.wallets_on(i), wallets.iter().filter(|w| w.first() <= b.dates[i]).count());
            }
            // Every value lands in exactly one bucket and classify agrees with contains.
            for (v, _) in &totals {
                let hits: Vec<usize> = scheme.buckets().iter().enumerate().filter(|(_, bk)| bk.contains(m(*v))).map(|(i, _)| i).collect();
                prop_assert_eq!(hits, vec![scheme.classify(m(*v))]);
            }
        }

        #[test]
        fn concentration_monotone(totals in prop::collection::vec(-1000i64..1000, 1..80), f1 in 1u32..100, f2 in 1u32..100) {
            let totals: Vec<WalletTotal> = totals.iter().enumerate().map(|(i, v)| wt(&format!("w{i:03}"), *v)).collect();
            let (lo, hi) = (f1.min(f2), f1.max(f2));
            let a = concentration(&totals, Decimal::new(lo as i64, 2)).unwrap();
            let b = concentration(&totals, Decimal::new(hi as i64, 2)).unwrap();
            if let (Some(sa), Some(sb)) = (a.top_share, b.top_share) {
                prop_assert!(sa <= sb + 1e-12);
                prop_assert!(sa > 0.0 && sa <= 1.0 + 1e-12);
                // The top block's mean is at least the overall winner mean.
                prop_assert!(sa + 1e-12 >= a.top_count as f64 / a.winners as f64);
            }
        }

        #[test]
        fn summary_permutation_invariant(mut totals in prop::collection::vec(-50i64..50, 1..40), seed in any::<u64>()) {
            let make = |xs: &[i64]| xs.iter().enumerate().map(|(i, v)| wt(&i.to_string(), *v)).collect::<Vec<_>>();
            let a = summary_stats(&make(&totals)).unwrap();
            let n = totals.len();
            totals.rotate_left((seed as usize) % n);
            totals.reverse();
            let b = summary_stats(&make(&totals)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!((a.pct_profitable + a.pct_loss + a.pct_zero - 1.0).abs() <= 1e-12);
            prop_assert!(a.min <= a.median && a.median <= a.max);
        }

        #[test]
        fn aggregate_commutes_with_snapshot(specs in prop::collection::vec((1u32..6, prop::collection::vec(-100i64..100, 1..6)), 1..6), snap in 1u32..15) {
            let all: Vec<DailySeries<Money>> = specs.iter().map(|(first, vals)| series(*first, vals)).collect();
            let snapshot = d(snap);
            let per_ledger = snapshot_totals(all.iter().map(|s| ("W", "g", s)), snapshot);
            let agg = aggregate_series(&all).unwrap();
            let from_agg = agg.at_or_before(snapshot).copied().unwrap_or_default();
            prop_assert_eq!(per_ledger[0].total, from_agg);
        }
    }
}
