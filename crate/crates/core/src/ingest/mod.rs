//! Snapshot logs and live collection.

pub mod collector;
pub mod log;

pub use collector::{
    content_hash, CadenceStats, Collector, CollectorConfig, FailureKind, FetchFailure, IntervalPolicy,
    SweepReport, WatchedEvent, WatchedToken,
};
pub use log::{
    discover_logs, log_path_for, read_log, read_log_with_stats, sidecar_path, write_log, GameBundle,
    LogAppender, ReadStats, SnapshotRecord,
};
