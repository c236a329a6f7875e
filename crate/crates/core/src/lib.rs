//! Peer-cohesion signal selection.
//!
//! Binary signal and return panels feed a stationary signal tree built from
//! long-run co-occurrences. Asset returns attach to that tree from short-run
//! co-occurrences; a target asset attaches where it stays closest to its
//! peer group. A rolling backtest compares that choice with greedy
//! attachment and buy-and-hold.

pub mod attach;
pub mod backtest;
pub mod commands;
pub mod cooccur;
pub mod error;
pub mod io;
pub mod oracle;
pub mod panel;
pub mod selftest;
pub mod sigtree;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
