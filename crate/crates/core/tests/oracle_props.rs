//! Streaming scan versus brute force on arbitrary, untidy record streams.

use pmarb::ingest::{GameBundle, SnapshotRecord};
use pmarb::model::{GameSchedule, Handicap, MarketDescriptor, MarketKind, Money, Price, Qty, Quote, Span, Timestamp};
use pmarb::synth::brute_force_scan;
use pmarb::{scan_game, BookView, ScanConfig};
use proptest::prelude::*;

const SLUG: &str = "prop";

fn market(id: &str, kind: MarketKind, h: Option<f64>) -> MarketDescriptor {
    MarketDescriptor {
        market_id: id.into(),
        event_slug: SLUG.into(),
        kind,
        tokens: [format!("{id}-a"), format!("{id}-b")],
        handicap: h.map(|p| Handicap::from_points(p).unwrap()),
    }
}

fn quote() -> impl Strategy<Value = Option<Quote>> {
    // a narrow band around 50c makes crossings common
    proptest::option::weighted(
        0.85,
        (40i64..=60, 1i64..=400, 0i64..1_000_000).prop_map(|(c, shares, frac)| {
            Quote::new(Price::quote(c * 10_000).unwrap(), Qty::from_micros(shares * 1_000_000 + frac).unwrap())
        }),
    )
}

#[derive(Debug, Clone)]
struct Raw {
    token: usize,
    gap_ms: i64,
    bid: Option<Quote>,
    ask: Option<Quote>,
}

fn raw() -> impl Strategy<Value = Raw> {
    (0usize..6, prop_oneof![0i64..=40, 300i64..=900, 2_000i64..=8_000], quote(), quote())
        .prop_map(|(token, gap_ms, bid, ask)| Raw { token, gap_ms, bid, ask })
}

fn bundle(raws: &[Raw], tip: usize, end: usize) -> GameBundle {
    let markets = vec![
        market("ml", MarketKind::Moneyline, None),
        market("sp", MarketKind::Spread, Some(-3.5)),
        market("tot", MarketKind::Total, None),
    ];
    let tokens: Vec<String> = markets.iter().flat_map(|m| m.tokens.clone()).collect();
    let t0 = Timestamp::parse("2025-02-01T00:00:00Z").unwrap();
    let mut t = t0;
    let mut times = Vec::new();
    let mut records = Vec::new();
    for (i, r) in raws.iter().enumerate() {
        t = t + Span::from_millis(r.gap_ms);
        times.push(t);
        let id = &tokens[r.token];
        records.push(SnapshotRecord {
            event_slug: SLUG.into(),
            market_id: id.rsplit_once('-').unwrap().0.into(),
            token_id: id.clone(),
            ts: t,
            bid: r.bid,
            ask: r.ask,
            book_hash: format!("h{i}"),
            recv_ts: None,
            batch: None,
        });
    }
    let at = |k: usize| times.get(k.min(times.len().saturating_sub(1))).copied().unwrap_or(t0);
    let tip_off = at(tip);
    let physical_end = at(end).max(tip_off + Span::from_millis(1));
    let mut b = GameBundle {
        schedule: GameSchedule::new(SLUG, tip_off, physical_end).unwrap(),
        markets,
        result: None,
        records,
    };
    b.sort_records();
    b
}

fn config() -> impl Strategy<Value = ScanConfig> {
    (
        prop_oneof![Just(100i64), 1i64..=40],
        prop_oneof![Just(10i64), 1i64..=30],
        any::<bool>(),
        prop_oneof![Just(500i64), 1i64..=2_000],
        1i64..=10,
        any::<bool>(),
        prop_oneof![Just(0i64), 1i64..=30_000],
    )
        .prop_map(|(budget, floor, inclusive, window, ceiling_s, effective, threshold)| {
            let mut cfg = ScanConfig {
                budget: Money::usdc(budget),
                liquidity_floor: Money::usdc(floor),
                floor_inclusive: inclusive,
                cluster_window: Span::from_millis(window),
                profit_threshold: Price::from_micros(threshold),
                book_view: if effective { BookView::Effective } else { BookView::Direct },
                ..ScanConfig::default()
            };
            cfg.ceilings.in_game = Span::from_secs(ceiling_s);
            cfg
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(192))]

    #[test]
    fn streaming_scan_matches_brute_force(
        raws in proptest::collection::vec(raw(), 1..160),
        tip in 0usize..160,
        len in 1usize..160,
        cfg in config(),
    ) {
        let b = bundle(&raws, tip, tip + len);
        let scan = scan_game(&b, &cfg).unwrap();
        let oracle = brute_force_scan(&b, &cfg).unwrap();
        prop_assert_eq!(&scan.single, &oracle.single);
        prop_assert_eq!(&scan.combo, &oracle.combo);
        prop_assert_eq!(scan.single_stats.evaluated, oracle.single_evaluated);
        prop_assert_eq!(scan.combo_stats.evaluated, oracle.combo_evaluated);
        prop_assert_eq!(scan.single_stats.excluded_signals(), oracle.single_excluded_signals);
        prop_assert_eq!(scan.combo_stats.excluded_signals(), oracle.combo_excluded_signals);
        prop_assert_eq!(scan.single_stats.artifact_episodes, oracle.single_artifact_episodes);
        prop_assert_eq!(scan.combo_stats.artifact_episodes, oracle.combo_artifact_episodes);
    }

    #[test]
    fn episodes_respect_invariants(
        raws in proptest::collection::vec(raw(), 1..160),
        tip in 0usize..160,
        cfg in config(),
    ) {
        let b = bundle(&raws, tip, tip + 40);
        let scan = scan_game(&b, &cfg).unwrap();
        for e in scan.single.iter().chain(&scan.combo) {
            prop_assert!(e.capped <= e.uncapped);
            prop_assert!(e.capital_deployed <= cfg.budget);
            prop_assert!(e.credited > Span::ZERO);
            prop_assert!(e.start_ts <= e.end_ts);
            prop_assert!(e.start_ts < b.schedule.physical_end);
            prop_assert!(e.snapshots.iter().all(|s| s.edge > cfg.profit_threshold));
        }
    }
}

#[test]
fn generator_reaches_every_path() {
    use pmarb::detect::Path;
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;

    let mut runner = TestRunner::deterministic();
    let strategy = (proptest::collection::vec(raw(), 60..160), 0usize..60, config());
    let mut seen = std::collections::HashSet::new();
    for _ in 0..64 {
        let (raws, tip, cfg) = strategy.new_tree(&mut runner).unwrap().current();
        let scan = scan_game(&bundle(&raws, tip, tip + 60), &cfg).unwrap();
        seen.extend(scan.single.iter().chain(&scan.combo).map(|e| e.key.path));
    }
    for p in [Path::Long, Path::Short, Path::Combo] {
        assert!(seen.contains(&p), "no {p:?} episode generated");
    }
}
