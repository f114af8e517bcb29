//! Reconstruction of binary prediction-market state from top-of-book
//! snapshot logs, and detection and measurement of arbitrage episodes.
//!
//! The pipeline runs per game: [`ingest`] reads a snapshot log and its
//! metadata sidecar, [`reconstruct`] clusters records and forward-fills
//! aligned states, [`detect`] evaluates single-market and moneyline/spread
//! conditions, [`episodes`] groups signals and prices them, and
//! [`analytics`] aggregates the results into report tables.

pub mod analytics;
pub mod config;
pub mod detect;
pub mod episodes;
pub mod error;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod reconstruct;
pub mod synth;

pub use config::{BookView, ScanConfig, TrustCeiling};
pub use error::{Error, Result};
pub use pipeline::{scan_game, scan_games, GameScan};
