//! Streaming scan of whole games: reconstruct, detect, group.

use rayon::prelude::*;

use crate::config::ScanConfig;
use crate::detect::combo::{combo_books, detect_combo_state, dominance_violated, enumerate_pairs, ComboPair};
use crate::detect::single::{effective_state, evaluate, filter_phase, short_condition};
use crate::detect::Path;
use crate::episodes::{group_episodes, median_gap, Episode, Evaluated};
use crate::error::Result;
use crate::ingest::GameBundle;
use crate::model::{phase_of, spread_bps, Bps, FinalResult, GameSchedule, MarketKind, Phase, Span, Timestamp};
use crate::reconstruct::{cluster_batches, merge_effective_book, mirror, project_states, update_times, ClusteredRecord};

/// Per-scope counters (single markets or combo pairs) of one game.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScopeStats {
    pub units: usize,
    /// Evaluated aligned states, indexed by [`Phase::index`].
    pub evaluated: [usize; 3],
    /// States that retained a signal, post-game artifacts included.
    pub signal_states: [usize; 3],
    /// Runs of post-game signals, counted but never reported as episodes.
    pub artifact_episodes: usize,
    /// Observed wall clock per phase, summed over units.
    pub exposure: [Span; 3],
}

impl ScopeStats {
    pub fn excluded_signals(&self) -> usize {
        self.signal_states[Phase::PostGame.index()]
    }

    pub fn merge(&mut self, other: &ScopeStats) {
        self.units += other.units;
        self.artifact_episodes += other.artifact_episodes;
        for i in 0..3 {
            self.evaluated[i] += other.evaluated[i];
            self.signal_states[i] += other.signal_states[i];
            self.exposure[i] = self.exposure[i] + other.exposure[i];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameScan {
    pub slug: String,
    pub schedule: GameSchedule,
    pub result: Option<FinalResult>,
    pub pairs: Vec<ComboPair>,
    pub warnings: Vec<String>,
    pub single: Vec<Episode>,
    pub combo: Vec<Episode>,
    pub single_stats: ScopeStats,
    pub combo_stats: ScopeStats,
    /// Spreads of two-sided effective books at evaluated single-market states.
    pub spreads: [Vec<Bps>; 3],
    /// Long detections checked against the mirrored complement.
    pub mirror_checks: usize,
    pub mirror_violations: usize,
    /// Pair states where the favorite's spread bid exceeded its moneyline ask.
    pub dominance_violations: usize,
}

impl GameScan {
    pub fn pair(&self, id: &str) -> Option<&ComboPair> {
        self.pairs.iter().find(|p| p.id == id)
    }
}

/// Overlap of `[start, end]` with each phase interval.
pub fn phase_exposure(start: Timestamp, end: Timestamp, schedule: &GameSchedule) -> [Span; 3] {
    let overlap = |a: Option<Timestamp>, b: Option<Timestamp>| {
        let lo = a.map_or(start, |a| a.max(start));
        let hi = b.map_or(end, |b| b.min(end));
        if hi > lo {
            hi.since(lo)
        } else {
            Span::ZERO
        }
    };
    [
        overlap(None, Some(schedule.tip_off)),
        overlap(Some(schedule.tip_off), Some(schedule.physical_end)),
        overlap(Some(schedule.physical_end), None),
    ]
}

/// Splits an evaluated timeline into the active one (post-game signals
/// turned into non-arb states) and the post-game artifact one.
pub(crate) fn split_post_game(evaluated: &[Evaluated]) -> (Vec<Evaluated>, Vec<Evaluated>) {
    let keep = |post: bool| {
        evaluated
            .iter()
            .map(|e| Evaluated {
                ts: e.ts,
                signal: e.signal.filter(|(_, s)| (s.phase == Phase::PostGame) == post),
            })
            .collect()
    };
    (keep(false), keep(true))
}

struct UnitScan {
    episodes: Vec<Episode>,
    stats: ScopeStats,
}

#[allow(clippy::too_many_arguments)]
fn finish_unit(
    slug: &str,
    unit: &str,
    kind: Option<MarketKind>,
    evaluated: &[Evaluated],
    times: &[Timestamp],
    span: Option<(Timestamp, Timestamp)>,
    schedule: &GameSchedule,
    cfg: &ScanConfig,
) -> UnitScan {
    let mut stats = ScopeStats {
        units: 1,
        ..ScopeStats::default()
    };
    for e in evaluated {
        let phase = phase_of(e.ts, schedule);
        stats.evaluated[phase.index()] += 1;
        if e.signal.is_some() {
            stats.signal_states[phase.index()] += 1;
        }
    }
    if let Some((start, end)) = span {
        stats.exposure = phase_exposure(start, end, schedule);
    }
    let (active, artifacts) = split_post_game(evaluated);
    stats.artifact_episodes = group_episodes(unit, &artifacts).len();
    let gap = median_gap(times, cfg.terminal_fallback);
    let episodes = group_episodes(unit, &active)
        .into_iter()
        .map(|(key, snaps)| Episode::build(slug, key, kind, snaps, cfg, gap))
        .collect();
    UnitScan { episodes, stats }
}

/// Runs the single-market and combo scans over one game.
pub fn scan_game(bundle: &GameBundle, cfg: &ScanConfig) -> Result<GameScan> {
    cfg.validate()?;
    let slug = bundle.slug();
    let schedule = &bundle.schedule;
    let clustered: Vec<ClusteredRecord<'_>> = cluster_batches(&bundle.records, cfg.cluster_window);
    let last_ts = clustered.last().map(|c| c.cluster_ts);
    let (pairs, warnings) = enumerate_pairs(&bundle.markets);
    for w in &warnings {
        tracing::warn!(slug, "{w}");
    }

    let mut scan = GameScan {
        slug: slug.to_string(),
        schedule: schedule.clone(),
        result: bundle.result.clone(),
        pairs: Vec::new(),
        warnings,
        single: Vec::new(),
        combo: Vec::new(),
        single_stats: ScopeStats::default(),
        combo_stats: ScopeStats::default(),
        spreads: Default::default(),
        mirror_checks: 0,
        mirror_violations: 0,
        dominance_violations: 0,
    };

    for market in &bundle.markets {
        let tokens = market.tokens.to_vec();
        let mut evaluated = Vec::new();
        let mut excluded = 0usize;
        for state in project_states(&clustered, &tokens, schedule) {
            let eff = effective_state(&state, cfg.book_view);
            for leg in &eff.legs {
                if let Some(bps) = spread_bps(&leg.book) {
                    scan.spreads[state.phase.index()].push(bps);
                }
            }
            let ev = evaluate(&market.market_id, &eff, cfg);
            if ev.long.is_some() {
                scan.mirror_checks += 1;
                let a = merge_effective_book(eff.leg(0), &mirror(eff.leg(1)));
                let b = merge_effective_book(eff.leg(1), &mirror(eff.leg(0)));
                let exactly_one = ev.retained.is_some();
                if !short_condition(&a, &b) || !exactly_one {
                    scan.mirror_violations += 1;
                }
            }
            let mut signal = None;
            if let Some(s) = ev.retained {
                signal = Some((s.path, s.snapshot()));
                // post-game signals stay on the timeline; `split_post_game` sets them aside
                filter_phase(s, Some(schedule), &mut excluded)?;
            }
            evaluated.push(Evaluated { ts: state.ts, signal });
        }
        let token_refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
        let times = update_times(&clustered, &token_refs);
        let span = evaluated.first().zip(last_ts).map(|(e, end)| (e.ts, end));
        let unit = finish_unit(slug, &market.market_id, Some(market.kind), &evaluated, &times, span, schedule, cfg);
        debug_assert_eq!(unit.stats.excluded_signals(), excluded);
        scan.single.extend(unit.episodes);
        scan.single_stats.merge(&unit.stats);
    }

    for pair in &pairs {
        let tokens = pair.tokens();
        let mut evaluated = Vec::new();
        for state in project_states(&clustered, &tokens, schedule) {
            let books = combo_books(&state, cfg.book_view);
            if dominance_violated(&books) {
                scan.dominance_violations += 1;
            }
            let signal = detect_combo_state(pair, state.ts, state.phase, &books, cfg)
                .map(|s| (Path::Combo, s.snapshot()));
            evaluated.push(Evaluated { ts: state.ts, signal });
        }
        let token_refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
        let times = update_times(&clustered, &token_refs);
        let span = evaluated.first().zip(last_ts).map(|(e, end)| (e.ts, end));
        let unit = finish_unit(slug, &pair.id, None, &evaluated, &times, span, schedule, cfg);
        scan.combo.extend(unit.episodes);
        scan.combo_stats.merge(&unit.stats);
    }
    scan.pairs = pairs;
    sort_episodes(&mut scan.single);
    sort_episodes(&mut scan.combo);
    Ok(scan)
}

pub(crate) fn sort_episodes(episodes: &mut [Episode]) {
    episodes.sort_by(|a, b| (&a.slug, a.start_ts, &a.key).cmp(&(&b.slug, b.start_ts, &b.key)));
}

/// Scans games in parallel; output order follows input order.
pub fn scan_games(bundles: &[GameBundle], cfg: &ScanConfig) -> Result<Vec<GameScan>> {
    bundles.par_iter().map(|b| scan_game(b, cfg)).collect()
}
