//! Domain types shared by every stage of the engine.
//!
//! Token quantities are exact decimals with at most [`QUANTITY_MAX_SCALE`]
//! fractional digits. Prices and money are decimals as well, so
//! classification of a wallet as exactly break-even is never disturbed by
//! binary rounding. Money is rounded half-to-even only when serialized.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime};
use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of fractional digits a [`Quantity`] keeps exactly.
pub const QUANTITY_MAX_SCALE: u32 = 18;

/// Decimal places used when money is written to disk.
pub const MONEY_PLACES: u32 = 6;

/// Calendar day, UTC.
pub type Date = NaiveDate;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid date range: {first} is after {last}")]
    InvalidRange { first: Date, last: Date },
    #[error("invalid decimal `{0}`")]
    InvalidDecimal(String),
    #[error("`{0}` has more than {QUANTITY_MAX_SCALE} fractional digits")]
    TooPrecise(String),
    #[error("empty identifier")]
    EmptyId,
}

/// Inclusive list of consecutive days from `first` to `last`.
pub fn date_range(first: Date, last: Date) -> Result<Vec<Date>, ModelError> {
    if first > last {
        return Err(ModelError::InvalidRange { first, last });
    }
    Ok(first.iter_days().take_while(|d| *d <= last).collect())
}

/// Number of days from `from` to `to` (negative when `to` precedes `from`).
pub fn days_between(from: Date, to: Date) -> i64 {
    (to - from).num_days()
}

/// Round half-to-even at `places` decimals. Negative zero is normalized.
pub fn round_money(value: Money, places: u32) -> Money {
    let rounded = value
        .0
        .round_dp_with_strategy(places, RoundingStrategy::MidpointNearestEven);
    if rounded.is_zero() {
        Money::ZERO
    } else {
        Money(rounded)
    }
}

/// Fixed-width rendering used by every output file: half-even rounding at
/// [`MONEY_PLACES`] and always exactly that many decimals.
pub fn format_money(value: Money) -> String {
    let rounded = round_money(value, MONEY_PLACES);
    format!("{:.*}", MONEY_PLACES as usize, rounded.0)
}

fn parse_decimal(s: &str) -> Result<Decimal, ModelError> {
    let s = s.trim();
    // Scientific notation and thousands separators are not part of the input formats.
    if s.is_empty() || s.contains(['e', 'E', '_', ',']) {
        return Err(ModelError::InvalidDecimal(s.to_string()));
    }
    Decimal::from_str_exact(s).map_err(|_| ModelError::InvalidDecimal(s.to_string()))
}

macro_rules! decimal_newtype {
    ($name:ident) => {
        impl $name {
            pub const ZERO: $name = $name(Decimal::ZERO);

            pub fn new(value: Decimal) -> Self {
                $name(value)
            }

            pub fn value(self) -> Decimal {
                self.0
            }

            pub fn is_zero(self) -> bool {
                self.0.is_zero()
            }

            pub fn is_sign_negative(self) -> bool {
                self.0.is_sign_negative() && !self.0.is_zero()
            }
        }

        impl From<Decimal> for $name {
            fn from(value: Decimal) -> Self {
                $name(value)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(&self.0.normalize(), f)
            }
        }
    };
}

/// Exact token amount.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Quantity(Decimal);
decimal_newtype!(Quantity);

impl Quantity {
    /// Parse an exact decimal with at most 18 fractional digits. The sign is
    /// preserved so callers can report negative balances.
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        let d = parse_decimal(s)?;
        if d.scale() > QUANTITY_MAX_SCALE {
            // from_str_exact keeps trailing zeros in the scale; drop them before judging.
            let n = d.normalize();
            if n.scale() > QUANTITY_MAX_SCALE {
                return Err(ModelError::TooPrecise(s.trim().to_string()));
            }
            return Ok(Quantity(n));
        }
        Ok(Quantity(d))
    }

    /// Signed change from `previous` to `self`.
    pub fn delta_from(self, previous: Quantity) -> Decimal {
        self.0 - previous.0
    }

    pub fn abs(self) -> Self {
        Quantity(self.0.abs())
    }
}

impl Add for Quantity {
    type Output = Quantity;
    fn add(self, rhs: Quantity) -> Quantity {
        Quantity(self.0 + rhs.0)
    }
}

impl AddAssign for Quantity {
    fn add_assign(&mut self, rhs: Quantity) {
        self.0 += rhs.0;
    }
}

impl Sub for Quantity {
    type Output = Quantity;
    fn sub(self, rhs: Quantity) -> Quantity {
        Quantity(self.0 - rhs.0)
    }
}

impl SubAssign for Quantity {
    fn sub_assign(&mut self, rhs: Quantity) {
        self.0 -= rhs.0;
    }
}

impl Sum for Quantity {
    fn sum<I: Iterator<Item = Quantity>>(iter: I) -> Self {
        iter.fold(Quantity::ZERO, Add::add)
    }
}

impl FromStr for Quantity {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Quantity::parse(s)
    }
}

/// USD per token unit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Price(Decimal);
decimal_newtype!(Price);

impl Price {
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        parse_decimal(s).map(Price)
    }

    /// Mean of two prices; used for even-count medians.
    pub fn midpoint(self, other: Price) -> Price {
        Price((self.0 + other.0) / Decimal::TWO)
    }
}

impl Sub for Price {
    type Output = Price;
    fn sub(self, rhs: Price) -> Price {
        Price(self.0 - rhs.0)
    }
}

impl FromStr for Price {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Price::parse(s)
    }
}

/// Signed USD amount.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(Decimal);
decimal_newtype!(Money);

impl Money {
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        parse_decimal(s).map(Money)
    }

    pub fn max(self, other: Money) -> Money {
        Money(self.0.max(other.0))
    }

    pub fn abs(self) -> Money {
        Money(self.0.abs())
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Self {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl FromStr for Money {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Money::parse(s)
    }
}

impl Mul<Price> for Quantity {
    type Output = Money;
    fn mul(self, rhs: Price) -> Money {
        Money(self.0 * rhs.0)
    }
}

/// One wallet-token ledger.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LedgerKey {
    pub wallet: String,
    pub token: String,
}

impl LedgerKey {
    pub fn new(wallet: impl Into<String>, token: impl Into<String>) -> Result<Self, ModelError> {
        let (wallet, token) = (wallet.into(), token.into());
        if wallet.is_empty() || token.is_empty() {
            return Err(ModelError::EmptyId);
        }
        Ok(LedgerKey { wallet, token })
    }
}

impl fmt::Display for LedgerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.wallet, self.token)
    }
}

/// End-of-day balance of one token account.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceRecord {
    pub date: Date,
    pub wallet: String,
    pub account: String,
    pub token: String,
    pub balance: Quantity,
}

/// A single DEX price print.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceObservation {
    pub timestamp: NaiveDateTime,
    pub token: String,
    pub price: Price,
}

impl PriceObservation {
    pub fn date(&self) -> Date {
        self.timestamp.date()
    }
}
