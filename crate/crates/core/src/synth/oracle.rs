//! Reference scan that rebuilds every state from scratch.
//!
//! Shares no code with the streaming pipeline beyond the plain data types
//! and pair enumeration: clustering, forward fill, effective books, the
//! arbitrage conditions, grouping, duration and profit are all recomputed
//! here with raw integers.

use std::collections::{BTreeSet, HashMap};

use crate::config::{BookView, ScanConfig};
use crate::detect::combo::enumerate_pairs;
use crate::detect::{Path, Snapshot};
use crate::episodes::{Episode, EpisodeKey};
use crate::error::Result;
use crate::ingest::{GameBundle, SnapshotRecord};
use crate::model::{MarketKind, Money, Phase, Price, Qty, Span, Timestamp};

const ONE: i64 = 1_000_000;

/// (price micros, size micros)
type Level = Option<(i64, i64)>;

#[derive(Debug, Clone, Copy)]
struct Leg {
    bid: Level,
    ask: Level,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleScan {
    pub single: Vec<Episode>,
    pub combo: Vec<Episode>,
    pub single_evaluated: [usize; 3],
    pub combo_evaluated: [usize; 3],
    pub single_excluded_signals: usize,
    pub combo_excluded_signals: usize,
    pub single_artifact_episodes: usize,
    pub combo_artifact_episodes: usize,
}

struct History<'a> {
    /// Per token: (cluster timestamp, record) in stream order.
    by_token: HashMap<&'a str, Vec<(i64, &'a SnapshotRecord)>>,
}

impl<'a> History<'a> {
    fn new(records: &'a [SnapshotRecord], window: i64) -> Self {
        let ts: Vec<i64> = records.iter().map(|r| r.ts.as_micros()).collect();
        let starts: Vec<usize> = (0..ts.len()).filter(|&i| i == 0 || ts[i] - ts[i - 1] > window).collect();
        let mut by_token: HashMap<&str, Vec<(i64, &SnapshotRecord)>> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            let k = starts.partition_point(|&s| s <= i) - 1;
            by_token.entry(r.token_id.as_str()).or_default().push((ts[starts[k]], r));
        }
        History { by_token }
    }

    fn times(&self, tokens: &[&str]) -> Vec<i64> {
        let set: BTreeSet<i64> = tokens
            .iter()
            .flat_map(|t| self.by_token.get(t).into_iter().flatten().map(|(c, _)| *c))
            .collect();
        set.into_iter().collect()
    }

    /// Latest known bid and ask of `token` as of cluster `t`.
    fn leg_at(&self, token: &str, t: i64) -> Option<Leg> {
        let hist = self.by_token.get(token)?;
        let upto = hist.partition_point(|(c, _)| *c <= t);
        if upto == 0 {
            return None;
        }
        let side = |f: fn(&SnapshotRecord) -> Level| hist[..upto].iter().rev().find_map(|(_, r)| f(r));
        Some(Leg {
            bid: side(|r| r.bid.map(|q| (q.price.as_micros(), q.size.as_micros()))),
            ask: side(|r| r.ask.map(|q| (q.price.as_micros(), q.size.as_micros()))),
        })
    }
}

fn pick(a: Level, b: Level, high: bool) -> Level {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some((pa, sa)), Some((pb, sb))) => {
            if pa == pb {
                Some((pa, sa + sb))
            } else if (pa > pb) == high {
                Some((pa, sa))
            } else {
                Some((pb, sb))
            }
        }
    }
}

fn flip(l: Level) -> Level {
    l.map(|(p, s)| (ONE - p, s))
}

/// Effective view of `own` given its complement `other`.
fn effective(own: Leg, other: Leg, view: BookView) -> Leg {
    match view {
        BookView::Effective => own,
        BookView::Direct => Leg {
            bid: pick(own.bid, flip(other.ask), true),
            ask: pick(own.ask, flip(other.bid), false),
        },
    }
}

fn whole_shares_for(budget: i128, cap: i64) -> i64 {
    let micro = budget / i128::from(cap);
    (micro / i128::from(ONE) * i128::from(ONE)) as i64
}

fn exec(bn: i64, cap: i64, budget: i128) -> i64 {
    if i128::from(cap) * i128::from(bn) <= budget {
        bn
    } else {
        whole_shares_for(budget, cap).min(bn)
    }
}

#[derive(Debug, Clone, Copy)]
struct Cand {
    edge: i64,
    bn: i64,
    cap: i64,
}

fn candidate(edge: i64, bn: i64, cap: i64, cfg: &ScanConfig) -> Option<Cand> {
    if edge <= cfg.profit_threshold.as_micros() {
        return None;
    }
    let notional = i128::from(cap) * i128::from(bn);
    let floor = cfg.liquidity_floor.as_picos();
    let ok = if cfg.floor_inclusive { notional >= floor } else { notional > floor };
    ok.then_some(Cand { edge, bn, cap })
}

fn single_signal(a: Leg, b: Leg, cfg: &ScanConfig) -> Option<(Path, Cand)> {
    let budget = cfg.budget.as_picos();
    let long = match (a.ask, b.ask) {
        (Some((pa, sa)), Some((pb, sb))) if pa + pb < ONE => candidate(ONE - pa - pb, sa.min(sb), pa + pb, cfg),
        _ => None,
    };
    let short = match (a.bid, b.bid) {
        (Some((pa, sa)), Some((pb, sb))) if pa + pb > ONE => candidate(pa + pb - ONE, sa.min(sb), ONE, cfg),
        _ => None,
    };
    let value = |c: &Cand| i128::from(c.edge) * i128::from(exec(c.bn, c.cap, budget));
    match (long, short) {
        (Some(l), Some(s)) if value(&s) > value(&l) => Some((Path::Short, s)),
        (Some(l), _) => Some((Path::Long, l)),
        (None, Some(s)) => Some((Path::Short, s)),
        (None, None) => None,
    }
}

fn phase_at(t: i64, bundle: &GameBundle) -> Phase {
    if t < bundle.schedule.tip_off.as_micros() {
        Phase::PreGame
    } else if t < bundle.schedule.physical_end.as_micros() {
        Phase::InGame
    } else {
        Phase::PostGame
    }
}

/// Open run: its path and `(ts, phase, candidate)` members.
type Run = Option<(Path, Vec<(i64, Phase, Cand)>)>;

struct UnitResult {
    episodes: Vec<Episode>,
    evaluated: [usize; 3],
    excluded: usize,
    artifacts: usize,
}

fn lower_median_gap(times: &[i64], fallback: Span) -> i64 {
    let mut gaps: Vec<i64> = times.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 0).collect();
    if gaps.is_empty() {
        return fallback.as_micros();
    }
    gaps.sort();
    gaps[(gaps.len() - 1) / 2]
}

fn build_episode(
    slug: &str,
    unit: &str,
    path: Path,
    kind: Option<MarketKind>,
    run: Vec<(i64, Phase, Cand)>,
    gap: i64,
    cfg: &ScanConfig,
) -> Episode {
    let budget = cfg.budget.as_picos();
    let mut credited = gap;
    for w in run.windows(2) {
        let ceiling = cfg.ceilings.for_phase(w[0].1).as_micros();
        credited += (w[1].0 - w[0].0).min(ceiling);
    }
    let mut best = 0;
    let mut best_capped = i128::MIN;
    let mut best_uncapped = i128::MIN;
    for (i, (_, _, c)) in run.iter().enumerate() {
        let capped = i128::from(c.edge) * i128::from(exec(c.bn, c.cap, budget));
        if capped > best_capped {
            best_capped = capped;
            best = i;
        }
        best_uncapped = best_uncapped.max(i128::from(c.edge) * i128::from(c.bn));
    }
    let top = run[best].2;
    let shares = exec(top.bn, top.cap, budget);
    let snapshots: Vec<Snapshot> = run
        .iter()
        .map(|(t, phase, c)| Snapshot {
            ts: Timestamp::from_micros(*t),
            phase: *phase,
            edge: Price::from_micros(c.edge),
            bottleneck: Qty::from_micros(c.bn).expect("sizes are non-negative"),
            capital_per_share: Price::from_micros(c.cap),
        })
        .collect();
    Episode {
        slug: slug.to_string(),
        key: EpisodeKey {
            unit: unit.to_string(),
            path,
        },
        kind,
        start_ts: Timestamp::from_micros(run[0].0),
        end_ts: Timestamp::from_micros(run[run.len() - 1].0),
        phase: run[0].1,
        snapshots,
        credited: Span::from_micros(credited),
        capped: Money::from_picos(best_capped),
        uncapped: Money::from_picos(best_uncapped),
        executable: Qty::from_micros(shares).expect("non-negative"),
        capital_deployed: Money::from_picos(i128::from(top.cap) * i128::from(shares)),
        budget_binding: shares < top.bn,
        liquidity_constrained: i128::from(top.cap) * i128::from(top.bn) < budget,
    }
}

fn scan_unit<F>(
    bundle: &GameBundle,
    history: &History<'_>,
    tokens: &[&str],
    unit: &str,
    kind: Option<MarketKind>,
    cfg: &ScanConfig,
    mut signal: F,
) -> UnitResult
where
    F: FnMut(&[Leg]) -> Option<(Path, Cand)>,
{
    let times = history.times(tokens);
    let gap = lower_median_gap(&times, cfg.terminal_fallback);
    let mut out = UnitResult {
        episodes: Vec::new(),
        evaluated: [0; 3],
        excluded: 0,
        artifacts: 0,
    };
    let mut run: Run = None;
    let mut in_artifact: Option<Path> = None;
    let slug = bundle.slug();
    for &t in &times {
        let Some(legs) = tokens.iter().map(|tok| history.leg_at(tok, t)).collect::<Option<Vec<Leg>>>() else {
            continue;
        };
        let phase = phase_at(t, bundle);
        out.evaluated[phase.index()] += 1;
        let sig = signal(&legs);
        let (active, post) = match (sig, phase) {
            (Some(s), Phase::PostGame) => (None, Some(s.0)),
            (s, _) => (s, None),
        };
        if post.is_some() {
            out.excluded += 1;
        }
        if post.is_some() && post != in_artifact {
            out.artifacts += 1;
        }
        in_artifact = post;
        let continues = matches!((&run, active), (Some((p, _)), Some((q, _))) if *p == q);
        if continues {
            let (_, c) = active.expect("checked");
            run.as_mut().expect("checked").1.push((t, phase, c));
        } else {
            if let Some((p, members)) = run.take() {
                out.episodes.push(build_episode(slug, unit, p, kind, members, gap, cfg));
            }
            run = active.map(|(p, c)| (p, vec![(t, phase, c)]));
        }
    }
    if let Some((p, members)) = run {
        out.episodes.push(build_episode(slug, unit, p, kind, members, gap, cfg));
    }
    out
}

/// Exhaustive re-evaluation of one game at every cluster timestamp.
pub fn brute_force_scan(bundle: &GameBundle, cfg: &ScanConfig) -> Result<OracleScan> {
    cfg.validate()?;
    let history = History::new(&bundle.records, cfg.cluster_window.as_micros());
    let view = cfg.book_view;
    let mut scan = OracleScan::default();

    for m in &bundle.markets {
        let tokens = [m.tokens[0].as_str(), m.tokens[1].as_str()];
        let r = scan_unit(bundle, &history, &tokens, &m.market_id, Some(m.kind), cfg, |legs| {
            let a = effective(legs[0], legs[1], view);
            let b = effective(legs[1], legs[0], view);
            single_signal(a, b, cfg)
        });
        scan.single.extend(r.episodes);
        scan.single_excluded_signals += r.excluded;
        scan.single_artifact_episodes += r.artifacts;
        for i in 0..3 {
            scan.single_evaluated[i] += r.evaluated[i];
        }
    }

    let (pairs, _) = enumerate_pairs(&bundle.markets);
    for p in &pairs {
        let tokens = [
            p.ml_favorite.as_str(),
            p.ml_underdog.as_str(),
            p.spread_favorite.as_str(),
            p.spread_underdog.as_str(),
        ];
        let r = scan_unit(bundle, &history, &tokens, &p.id, None, cfg, |legs| {
            let ml = effective(legs[0], legs[1], view).ask;
            let sp = effective(legs[3], legs[2], view).ask;
            let ((pm, sm), (ps, ss)) = (ml?, sp?);
            let cost = pm + ps;
            if cost >= ONE {
                return None;
            }
            candidate(ONE - cost, sm.min(ss), cost, cfg).map(|c| (Path::Combo, c))
        });
        scan.combo.extend(r.episodes);
        scan.combo_excluded_signals += r.excluded;
        scan.combo_artifact_episodes += r.artifacts;
        for i in 0..3 {
            scan.combo_evaluated[i] += r.evaluated[i];
        }
    }

    let order = |a: &Episode, b: &Episode| (&a.slug, a.start_ts, &a.key).cmp(&(&b.slug, b.start_ts, &b.key));
    scan.single.sort_by(order);
    scan.combo.sort_by(order);
    Ok(scan)
}
