//! Buy path and mint-and-sell path on one binary market.

use crate::config::{BookView, ScanConfig};
use crate::detect::{Path, Snapshot};
use crate::error::{Error, Result};
use crate::model::{phase_of, BookTop, GameSchedule, Money, Phase, Price, Qty, Timestamp};
use crate::reconstruct::{effective_pair, AlignedState};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArbSignal {
    pub ts: Timestamp,
    pub market_id: String,
    pub path: Path,
    pub edge: Price,
    pub bottleneck: Qty,
    pub capital_per_share: Price,
    /// Capital needed to take the whole bottleneck.
    pub notional: Money,
    pub phase: Phase,
}

impl ArbSignal {
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            ts: self.ts,
            phase: self.phase,
            edge: self.edge,
            bottleneck: self.bottleneck,
            capital_per_share: self.capital_per_share,
        }
    }
}

/// Replaces the two legs of a market state with their effective books.
pub fn effective_state(state: &AlignedState, view: BookView) -> AlignedState {
    let mut out = state.clone();
    if view == BookView::Direct {
        let (a, b) = effective_pair(state.leg(0), state.leg(1));
        out.legs[0].book = a;
        out.legs[1].book = b;
    }
    out
}

fn make_signal(
    market_id: &str,
    state: &AlignedState,
    path: Path,
    edge: Price,
    bottleneck: Qty,
    capital_per_share: Price,
    cfg: &ScanConfig,
) -> Option<ArbSignal> {
    if edge <= cfg.profit_threshold {
        return None;
    }
    let notional = capital_per_share * bottleneck;
    if !cfg.passes_floor(notional) {
        return None;
    }
    Some(ArbSignal {
        ts: state.ts,
        market_id: market_id.to_string(),
        path,
        edge,
        bottleneck,
        capital_per_share,
        notional,
        phase: state.phase,
    })
}

/// `ask_A + ask_B < 1`, with enough notional at the smaller ask.
pub fn detect_long(market_id: &str, state: &AlignedState, cfg: &ScanConfig) -> Option<ArbSignal> {
    let (a, b) = (state.leg(0).best_ask?, state.leg(1).best_ask?);
    let cost = a.price + b.price;
    if cost >= Price::ONE {
        return None;
    }
    make_signal(market_id, state, Path::Long, Price::ONE - cost, a.size.min(b.size), cost, cfg)
}

/// `bid_A + bid_B > 1`; capital is the $1.00 minted per share.
pub fn detect_short(market_id: &str, state: &AlignedState, cfg: &ScanConfig) -> Option<ArbSignal> {
    let (a, b) = (state.leg(0).best_bid?, state.leg(1).best_bid?);
    let revenue = a.price + b.price;
    if revenue <= Price::ONE {
        return None;
    }
    make_signal(market_id, state, Path::Short, revenue - Price::ONE, a.size.min(b.size), Price::ONE, cfg)
}

/// Bids of two books sum past $1.00 (the raw short condition, no filters).
pub fn short_condition(a: &BookTop, b: &BookTop) -> bool {
    match (a.best_bid, b.best_bid) {
        (Some(x), Some(y)) => x.price + y.price > Price::ONE,
        _ => false,
    }
}

/// Keeps one of two simultaneous signals: the one with the larger capped
/// profit at `budget`. Ties go to the long path.
pub fn dedup_signals(long: Option<ArbSignal>, short: Option<ArbSignal>, budget: Money) -> Option<ArbSignal> {
    match (long, short) {
        (Some(l), Some(s)) => {
            if s.snapshot().capped_profit(budget) > l.snapshot().capped_profit(budget) {
                Some(s)
            } else {
                Some(l)
            }
        }
        (l, s) => l.or(s),
    }
}

/// Drops post-game signals, counting them in `excluded`, and stamps the phase.
pub fn filter_phase(
    mut signal: ArbSignal,
    schedule: Option<&GameSchedule>,
    excluded: &mut usize,
) -> Result<Option<ArbSignal>> {
    let schedule = schedule.ok_or_else(|| {
        Error::Config(format!("no schedule for market {}", signal.market_id))
    })?;
    signal.phase = phase_of(signal.ts, schedule);
    if signal.phase == Phase::PostGame {
        *excluded += 1;
        return Ok(None);
    }
    Ok(Some(signal))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingleEvaluation {
    pub long: Option<ArbSignal>,
    pub short: Option<ArbSignal>,
    pub retained: Option<ArbSignal>,
}

/// Both paths on an effective-book state, then deduplication.
pub fn evaluate(market_id: &str, state: &AlignedState, cfg: &ScanConfig) -> SingleEvaluation {
    let long = detect_long(market_id, state, cfg);
    let short = detect_short(market_id, state, cfg);
    let retained = dedup_signals(long.clone(), short.clone(), cfg.budget);
    SingleEvaluation {
        long,
        short,
        retained,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Quote, Span};
    use crate::reconstruct::{Freshness, LegState};

    fn q(p: &str, s: i64) -> Option<Quote> {
        Some(Quote::new(Price::parse_quote(p).unwrap(), Qty::shares(s)))
    }

    fn state(a: (Option<Quote>, Option<Quote>), b: (Option<Quote>, Option<Quote>)) -> AlignedState {
        let leg = |t: &str, (bid, ask): (Option<Quote>, Option<Quote>)| LegState {
            book: BookTop {
                token_id: t.into(),
                ts: Timestamp::from_micros(0),
                best_bid: bid,
                best_ask: ask,
                book_hash: String::new(),
            },
            source_ts: Timestamp::from_micros(0),
            freshness: Freshness::FreshUpdate,
        };
        AlignedState {
            ts: Timestamp::from_micros(0),
            legs: vec![leg("a", a), leg("b", b)],
            phase: Phase::InGame,
        }
    }

    #[test]
    fn long_examples() {
        let cfg = ScanConfig::default();
        let s = detect_long("m", &state((None, q("0.40", 80)), (None, q("0.55", 30))), &cfg).unwrap();
        assert_eq!(s.edge, Price::parse_quote("0.05").unwrap());
        assert_eq!(s.bottleneck, Qty::shares(30));
        assert_eq!(s.notional, Money::parse("28.50").unwrap());

        assert!(detect_long("m", &state((None, q("0.50", 80)), (None, q("0.50", 80))), &cfg).is_none());
        // $9.70 notional is under the $10 floor
        assert!(detect_long("m", &state((None, q("0.48", 10)), (None, q("0.49", 10))), &cfg).is_none());
        assert!(detect_long("m", &state((None, None), (None, q("0.49", 10))), &cfg).is_none());
    }

    #[test]
    fn short_examples() {
        let cfg = ScanConfig::default();
        let s = detect_short("m", &state((q("0.60", 50), None), (q("0.45", 20), None)), &cfg).unwrap();
        assert_eq!(s.edge, Price::parse_quote("0.05").unwrap());
        assert_eq!(s.bottleneck, Qty::shares(20));
        assert_eq!(s.notional, Money::usdc(20));
        assert!(detect_short("m", &state((q("0.55", 50), None), (q("0.45", 20), None)), &cfg).is_none());
        assert!(detect_short("m", &state((q("0.52", 9), None), (q("0.52", 9), None)), &cfg).is_none());
    }

    #[test]
    fn floor_is_inclusive_by_default() {
        let cfg = ScanConfig::default();
        // 0.50 * 20 = $10.00 exactly
        assert!(detect_long("m", &state((None, q("0.20", 20)), (None, q("0.30", 20))), &cfg).is_some());
    }

    #[test]
    fn profit_threshold_is_strict() {
        let cfg = ScanConfig {
            profit_threshold: Price::parse_quote("0.05").unwrap(),
            ..ScanConfig::default()
        };
        assert!(detect_long("m", &state((None, q("0.40", 80)), (None, q("0.55", 30))), &cfg).is_none());
    }

    fn sig(path: Path, edge: &str, shares: i64, cap: Price) -> ArbSignal {
        ArbSignal {
            ts: Timestamp::from_micros(0),
            market_id: "m".into(),
            path,
            edge: Price::parse_quote(edge).unwrap(),
            bottleneck: Qty::shares(shares),
            capital_per_share: cap,
            notional: cap * Qty::shares(shares),
            phase: Phase::InGame,
        }
    }

    #[test]
    fn dedup_examples() {
        let budget = Money::usdc(100);
        let long = sig(Path::Long, "0.05", 30, Price::parse_quote("0.95").unwrap());
        let short = sig(Path::Short, "0.03", 100, Price::ONE);
        assert_eq!(dedup_signals(Some(long.clone()), None, budget).unwrap().path, Path::Long);
        assert_eq!(dedup_signals(None, Some(short.clone()), budget).unwrap().path, Path::Short);
        assert_eq!(dedup_signals(Some(long.clone()), Some(short), budget).unwrap().path, Path::Short);
        let tie = sig(Path::Short, "0.05", 30, Price::ONE);
        assert_eq!(dedup_signals(Some(long), Some(tie), budget).unwrap().path, Path::Long);
        assert_eq!(dedup_signals(None, None, budget), None);
    }

    #[test]
    fn phase_filter() {
        let sched = GameSchedule::new(
            "g",
            Timestamp::from_micros(10_000_000_000),
            Timestamp::from_micros(20_000_000_000),
        )
        .unwrap();
        let mut excluded = 0;
        let mut s = sig(Path::Long, "0.05", 30, Price::parse_quote("0.95").unwrap());
        s.ts = sched.physical_end + Span::from_secs(60);
        assert_eq!(filter_phase(s.clone(), Some(&sched), &mut excluded).unwrap(), None);
        assert_eq!(excluded, 1);
        s.ts = sched.tip_off + Span::from_secs(600);
        assert_eq!(filter_phase(s.clone(), Some(&sched), &mut excluded).unwrap().unwrap().phase, Phase::InGame);
        s.ts = sched.tip_off - Span::from_secs(600);
        assert_eq!(filter_phase(s.clone(), Some(&sched), &mut excluded).unwrap().unwrap().phase, Phase::PreGame);
        assert_eq!(excluded, 1);
        assert!(matches!(filter_phase(s, None, &mut excluded), Err(Error::Config(_))));
    }

    #[test]
    fn mirrored_long_implies_short_on_effective_books() {
        let cfg = ScanConfig::default();
        let raw = state((None, q("0.40", 80)), (None, q("0.55", 30)));
        let eff = effective_state(&raw, BookView::Direct);
        let ev = evaluate("m", &eff, &cfg);
        assert!(ev.long.is_some());
        assert!(short_condition(eff.leg(0), eff.leg(1)));
        assert_eq!(ev.short.as_ref().unwrap().edge, ev.long.as_ref().unwrap().edge);
        assert_eq!(ev.retained.unwrap().path, Path::Long);
    }
}
