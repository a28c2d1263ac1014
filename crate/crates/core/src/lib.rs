//! Daily-snapshot PnL engine.
//!
//! Rebuilds per-wallet token ledgers from sparse end-of-day balances and DEX
//! price prints, then computes FIFO realized and mark-to-market unrealized
//! PnL per wallet-token pair and the wallet- and platform-level reports built
//! on top of it.
//!
//! Stages, in pipeline order:
//!
//! * [`ingest`]: parse and validate the balance, price and cap tables.
//! * [`grid`]: forward-filled daily series and capped daily median prices.
//! * [`pnl`]: trade inference, FIFO matching, realized/unrealized/total PnL.
//! * [`analytics`]: aggregation, summary statistics, concentration, bucket
//!   distributions, drawdowns and MC-to-AUM ratios.
//! * [`synth`]: synthetic trade tapes and an independent trade-level oracle.

pub mod analytics;
pub mod grid;
pub mod ingest;
pub mod model;
pub mod pnl;
pub mod synth;

pub use grid::{AlignedLedgerInput, DailySeries};
pub use ingest::{Diagnostic, DiagnosticKind};
pub use model::{Date, LedgerKey, Money, Price, Quantity};
pub use pnl::{compute_ledger, LedgerResult, PnlPoint};
