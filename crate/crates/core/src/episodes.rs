//! Episode grouping, credited duration and one-shot profit.
//!
//! An episode is a maximal run of consecutive evaluated states of one unit
//! (a market or a moneyline/spread pair) that carry a signal on the same
//! path. Its duration is the sum of forward gaps between member snapshots,
//! each capped by the phase's trust ceiling, plus the unit's median snapshot
//! gap for the terminal snapshot. Its profit is the best single snapshot, not
//! a sum over snapshots.

use serde::Serialize;

use crate::config::{ScanConfig, TrustCeiling};
use crate::detect::{Path, Snapshot};
use crate::model::{MarketKind, Money, Phase, Qty, Span, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EpisodeKey {
    /// Market id, or pair id for combos.
    pub unit: String,
    pub path: Path,
}

/// One evaluated state of a unit and the signal it retained, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Evaluated {
    pub ts: Timestamp,
    pub signal: Option<(Path, Snapshot)>,
}

/// Splits a unit's evaluated timeline into runs of same-path signals.
pub fn group_episodes(unit: &str, evaluated: &[Evaluated]) -> Vec<(EpisodeKey, Vec<Snapshot>)> {
    let mut out: Vec<(EpisodeKey, Vec<Snapshot>)> = Vec::new();
    let mut open: Option<(Path, Vec<Snapshot>)> = None;
    for e in evaluated {
        match (&mut open, e.signal) {
            (Some((path, snaps)), Some((p, s))) if *path == p => snaps.push(s),
            (_, signal) => {
                if let Some((path, snaps)) = open.take() {
                    out.push((EpisodeKey { unit: unit.to_string(), path }, snaps));
                }
                open = signal.map(|(p, s)| (p, vec![s]));
            }
        }
    }
    if let Some((path, snaps)) = open {
        out.push((EpisodeKey { unit: unit.to_string(), path }, snaps));
    }
    out
}

/// Lower median of the gaps between consecutive distinct timestamps.
pub fn median_gap(times: &[Timestamp], fallback: Span) -> Span {
    let mut gaps: Vec<Span> = times
        .windows(2)
        .map(|w| w[1].since(w[0]))
        .filter(|g| *g > Span::ZERO)
        .collect();
    if gaps.is_empty() {
        return fallback;
    }
    gaps.sort_unstable();
    gaps[(gaps.len() - 1) / 2]
}

/// Forward gaps capped per phase; the terminal snapshot is credited `median_gap`.
pub fn credited_duration(snapshots: &[Snapshot], ceilings: &TrustCeiling, median_gap: Span) -> Span {
    let capped: Span = snapshots
        .windows(2)
        .map(|w| w[1].ts.since(w[0].ts).min(ceilings.for_phase(w[0].phase)))
        .sum();
    if snapshots.is_empty() {
        capped
    } else {
        capped + median_gap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneShot {
    pub capped: Money,
    pub uncapped: Money,
    /// Index of the snapshot with the largest capped profit (earliest on ties).
    pub argmax: usize,
    pub executable: Qty,
    pub capital_deployed: Money,
    /// The budget, not book depth, limited the position.
    pub budget_binding: bool,
    /// The whole bottleneck costs less than the budget.
    pub liquidity_constrained: bool,
}

impl OneShot {
    pub fn yield_bps(&self) -> f64 {
        self.capped.bps_of(self.capital_deployed)
    }
}

/// Best single execution over an episode's snapshots.
///
/// Capped and uncapped maxima are taken independently.
pub fn one_shot_profit(snapshots: &[Snapshot], budget: Money) -> OneShot {
    assert!(!snapshots.is_empty(), "episode has no snapshots");
    let mut argmax = 0;
    let mut capped = snapshots[0].capped_profit(budget);
    let mut uncapped = snapshots[0].uncapped_profit();
    for (i, s) in snapshots.iter().enumerate().skip(1) {
        let c = s.capped_profit(budget);
        if c > capped {
            capped = c;
            argmax = i;
        }
        uncapped = uncapped.max(s.uncapped_profit());
    }
    let best = &snapshots[argmax];
    let executable = best.executable(budget);
    OneShot {
        capped,
        uncapped,
        argmax,
        executable,
        capital_deployed: best.capital_per_share * executable,
        budget_binding: executable < best.bottleneck,
        liquidity_constrained: best.bottleneck_notional() < budget,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub slug: String,
    pub key: EpisodeKey,
    /// Market type for single-market episodes; `None` for combo pairs.
    pub kind: Option<MarketKind>,
    pub start_ts: Timestamp,
    pub end_ts: Timestamp,
    /// Phase of the first snapshot.
    pub phase: Phase,
    pub snapshots: Vec<Snapshot>,
    pub credited: Span,
    pub capped: Money,
    pub uncapped: Money,
    pub executable: Qty,
    pub capital_deployed: Money,
    pub budget_binding: bool,
    pub liquidity_constrained: bool,
}

impl Episode {
    pub fn build(
        slug: &str,
        key: EpisodeKey,
        kind: Option<MarketKind>,
        snapshots: Vec<Snapshot>,
        cfg: &ScanConfig,
        median_gap: Span,
    ) -> Episode {
        let shot = one_shot_profit(&snapshots, cfg.budget);
        Episode {
            slug: slug.to_string(),
            key,
            kind,
            start_ts: snapshots[0].ts,
            end_ts: snapshots[snapshots.len() - 1].ts,
            phase: snapshots[0].phase,
            credited: credited_duration(&snapshots, &cfg.ceilings, median_gap),
            capped: shot.capped,
            uncapped: shot.uncapped,
            executable: shot.executable,
            capital_deployed: shot.capital_deployed,
            budget_binding: shot.budget_binding,
            liquidity_constrained: shot.liquidity_constrained,
            snapshots,
        }
    }

    pub fn yield_bps(&self) -> f64 {
        self.capped.bps_of(self.capital_deployed)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LiquidityStats {
    pub episodes: usize,
    /// Episodes whose whole bottleneck cost less than the budget.
    pub constrained: usize,
    pub constrained_fraction: f64,
    /// Mean executable shares over constrained episodes.
    pub mean_executable_constrained: f64,
    pub mean_executable_all: f64,
}

pub fn liquidity_binding_stats(episodes: &[Episode]) -> LiquidityStats {
    if episodes.is_empty() {
        return LiquidityStats::default();
    }
    let mean = |it: &mut dyn Iterator<Item = &Episode>| {
        let (n, sum) = it.fold((0usize, 0f64), |(n, s), e| (n + 1, s + e.executable.as_shares_f64()));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    };
    let constrained = episodes.iter().filter(|e| e.liquidity_constrained).count();
    LiquidityStats {
        episodes: episodes.len(),
        constrained,
        constrained_fraction: constrained as f64 / episodes.len() as f64,
        mean_executable_constrained: mean(&mut episodes.iter().filter(|e| e.liquidity_constrained)),
        mean_executable_all: mean(&mut episodes.iter()),
    }
}
