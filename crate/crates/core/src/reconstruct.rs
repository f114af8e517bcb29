//! Continuous market state from sparse, hash-deduplicated records.
//!
//! Three steps:
//!
//! 1. [`cluster_batches`] snaps records that arrive in one polling burst
//!    (gap to the previous record `<= window`) onto the burst's earliest
//!    timestamp.
//! 2. [`StateProjector`] walks the clustered stream and, at every cluster
//!    where a requested token updated, emits an [`AlignedState`] with every
//!    other token forward-filled from its latest earlier record.
//! 3. [`effective_pair`] rebuilds each token's effective book from its own
//!    orders plus the reflection (`1 - P`) of its complement's orders.

use std::collections::{BTreeMap, HashMap};

use crate::ingest::SnapshotRecord;
use crate::model::{phase_of, BookTop, GameSchedule, Phase, Quote, Span, Timestamp};

#[derive(Debug, Clone, Copy)]
pub struct ClusteredRecord<'a> {
    pub record: &'a SnapshotRecord,
    pub cluster_ts: Timestamp,
}

/// Assigns every record the timestamp of its cluster.
///
/// Clustering chains: a record joins the current cluster when its gap to the
/// previous record is within `window`, so one cluster may span more than
/// `window` in total. `records` must be sorted by `ts`.
pub fn cluster_batches(records: &[SnapshotRecord], window: Span) -> Vec<ClusteredRecord<'_>> {
    let mut out = Vec::with_capacity(records.len());
    let mut anchor: Option<Timestamp> = None;
    let mut prev: Option<Timestamp> = None;
    for r in records {
        let joins = prev.is_some_and(|p| r.ts.since(p) <= window);
        if !joins {
            anchor = Some(r.ts);
        }
        prev = Some(r.ts);
        out.push(ClusteredRecord {
            record: r,
            cluster_ts: anchor.expect("anchor set on first record"),
        });
    }
    out
}

fn reflect(q: Option<Quote>) -> Option<Quote> {
    q.map(|q| Quote::new(q.price.complement(), q.size))
}

/// The complement token's synthetic view of `top`: bids become asks at `1 - P`
/// and asks become bids.
pub fn mirror(top: &BookTop) -> BookTop {
    BookTop {
        token_id: top.token_id.clone(),
        ts: top.ts,
        best_bid: reflect(top.best_ask),
        best_ask: reflect(top.best_bid),
        book_hash: top.book_hash.clone(),
    }
}

fn better(a: Option<Quote>, b: Option<Quote>, prefer_high: bool) -> Option<Quote> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) if a.price == b.price => Some(Quote::new(a.price, a.size + b.size)),
        (Some(a), Some(b)) => {
            if (a.price > b.price) == prefer_high {
                Some(a)
            } else {
                Some(b)
            }
        }
    }
}

/// Combines a token's direct orders with mirrored orders from its complement.
///
/// Best bid is the higher of the two, best ask the lower; equal prices pool
/// their sizes.
pub fn merge_effective_book(direct: &BookTop, mirrored: &BookTop) -> BookTop {
    BookTop {
        token_id: direct.token_id.clone(),
        ts: direct.ts,
        best_bid: better(direct.best_bid, mirrored.best_bid, true),
        best_ask: better(direct.best_ask, mirrored.best_ask, false),
        book_hash: direct.book_hash.clone(),
    }
}

/// Effective books of a binary market's two tokens.
pub fn effective_pair(a: &BookTop, b: &BookTop) -> (BookTop, BookTop) {
    (merge_effective_book(a, &mirror(b)), merge_effective_book(b, &mirror(a)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freshness {
    FreshUpdate,
    ForwardFilled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegState {
    /// Book as of `source_ts`; `book.ts` equals `source_ts`.
    pub book: BookTop,
    /// Cluster timestamp of the latest record that contributed to this leg.
    pub source_ts: Timestamp,
    pub freshness: Freshness,
}

/// Snapshot of several tokens at one cluster timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedState {
    pub ts: Timestamp,
    /// In the order the tokens were requested.
    pub legs: Vec<LegState>,
    pub phase: Phase,
}

impl AlignedState {
    pub fn leg(&self, i: usize) -> &BookTop {
        &self.legs[i].book
    }
}

#[derive(Debug, Clone, Default)]
struct LegAccum {
    seen: bool,
    bid: Option<Quote>,
    ask: Option<Quote>,
    hash: String,
    source_ts: Option<Timestamp>,
}

/// Streaming forward-fill over one game's clustered records.
///
/// Nothing is emitted until every requested token has at least one record.
/// A record whose bid (or ask) is null leaves that side as previously known.
pub struct StateProjector<'a> {
    records: &'a [ClusteredRecord<'a>],
    schedule: &'a GameSchedule,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    legs: Vec<LegAccum>,
    pos: usize,
}

impl<'a> StateProjector<'a> {
    pub fn new(records: &'a [ClusteredRecord<'a>], tokens: &[String], schedule: &'a GameSchedule) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        StateProjector {
            records,
            schedule,
            tokens: tokens.to_vec(),
            index,
            legs: vec![LegAccum::default(); tokens.len()],
            pos: 0,
        }
    }
}

impl Iterator for StateProjector<'_> {
    type Item = AlignedState;

    fn next(&mut self) -> Option<AlignedState> {
        while self.pos < self.records.len() {
            let ts = self.records[self.pos].cluster_ts;
            let mut fresh = vec![false; self.legs.len()];
            while self.pos < self.records.len() && self.records[self.pos].cluster_ts == ts {
                let r = self.records[self.pos].record;
                self.pos += 1;
                let Some(&i) = self.index.get(&r.token_id) else {
                    continue;
                };
                let leg = &mut self.legs[i];
                leg.seen = true;
                if r.bid.is_some() {
                    leg.bid = r.bid;
                }
                if r.ask.is_some() {
                    leg.ask = r.ask;
                }
                leg.hash.clone_from(&r.book_hash);
                leg.source_ts = Some(ts);
                fresh[i] = true;
            }
            if !fresh.iter().any(|f| *f) || !self.legs.iter().all(|l| l.seen) {
                continue;
            }
            let legs = self
                .legs
                .iter()
                .zip(&self.tokens)
                .zip(fresh)
                .map(|((l, token), is_fresh)| {
                    let source_ts = l.source_ts.expect("seen legs have a source");
                    LegState {
                        book: BookTop {
                            token_id: token.clone(),
                            ts: source_ts,
                            best_bid: l.bid,
                            best_ask: l.ask,
                            book_hash: l.hash.clone(),
                        },
                        source_ts,
                        freshness: if is_fresh {
                            Freshness::FreshUpdate
                        } else {
                            Freshness::ForwardFilled
                        },
                    }
                })
                .collect();
            return Some(AlignedState {
                ts,
                legs,
                phase: phase_of(ts, self.schedule),
            });
        }
        None
    }
}

/// Emits aligned states for `tokens` over a clustered game stream.
pub fn project_states<'a>(
    records: &'a [ClusteredRecord<'a>],
    tokens: &[String],
    schedule: &'a GameSchedule,
) -> StateProjector<'a> {
    StateProjector::new(records, tokens, schedule)
}

/// Distinct cluster timestamps at which any of `tokens` updated.
pub fn update_times(records: &[ClusteredRecord<'_>], tokens: &[&str]) -> Vec<Timestamp> {
    let mut out: Vec<Timestamp> = records
        .iter()
        .filter(|c| tokens.contains(&c.record.token_id.as_str()))
        .map(|c| c.cluster_ts)
        .collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Updated {
    pub moneyline: bool,
    pub spread: bool,
}

/// Union of two markets' update times, with which market updated at each.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnifiedTimeline {
    pub entries: Vec<(Timestamp, Updated)>,
}

impl UnifiedTimeline {
    pub fn timestamps(&self) -> impl Iterator<Item = Timestamp> + '_ {
        self.entries.iter().map(|(t, _)| *t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn unified_timeline(moneyline: &[Timestamp], spread: &[Timestamp]) -> UnifiedTimeline {
    let mut map: BTreeMap<Timestamp, Updated> = BTreeMap::new();
    for t in moneyline {
        map.entry(*t).or_default().moneyline = true;
    }
    for t in spread {
        map.entry(*t).or_default().spread = true;
    }
    UnifiedTimeline {
        entries: map.into_iter().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Price, Qty};
    use proptest::prelude::*;

    fn q(p: i64, s: i64) -> Option<Quote> {
        Some(Quote::new(Price::from_micros(p), Qty::shares(s)))
    }

    fn book(bid: Option<Quote>, ask: Option<Quote>) -> BookTop {
        BookTop {
            token_id: "x".into(),
            ts: Timestamp::from_micros(0),
            best_bid: bid,
            best_ask: ask,
            book_hash: "h".into(),
        }
    }

    fn rec(token: &str, ts_ms: i64) -> SnapshotRecord {
        SnapshotRecord {
            event_slug: "g".into(),
            market_id: "m".into(),
            token_id: token.into(),
            ts: Timestamp::from_micros(ts_ms * 1000),
            bid: q(400_000, 10),
            ask: q(600_000, 10),
            book_hash: format!("{token}{ts_ms}"),
            recv_ts: None,
            batch: None,
        }
    }

    fn cluster_ms(gaps_ms: &[i64]) -> Vec<i64> {
        let mut t = 0;
        let mut recs = vec![rec("a", 0)];
        for g in gaps_ms {
            t += g;
            recs.push(rec("a", t));
        }
        cluster_batches(&recs, Span::from_millis(500))
            .iter()
            .map(|c| c.cluster_ts.as_micros() / 1000)
            .collect()
    }

    #[test]
    fn clustering_examples() {
        assert_eq!(cluster_ms(&[30]), vec![0, 0]);
        assert_eq!(cluster_ms(&[600]), vec![0, 600]);
        assert_eq!(cluster_ms(&[300, 300]), vec![0, 0, 0]);
        assert_eq!(cluster_ms(&[500]), vec![0, 0]);
        assert_eq!(cluster_ms(&[501]), vec![0, 501]);
    }

    #[test]
    fn mirror_examples() {
        let m = mirror(&book(q(400_000, 100), None));
        assert_eq!(m.best_ask, q(600_000, 100));
        assert_eq!(m.best_bid, None);
        let empty = book(None, None);
        assert_eq!(mirror(&empty), empty);
    }

    #[test]
    fn merge_examples() {
        let direct = book(None, q(610_000, 5));
        let mirrored = book(None, q(600_000, 7));
        assert_eq!(merge_effective_book(&direct, &mirrored).best_ask, q(600_000, 7));

        let direct = book(q(300_000, 1), q(600_000, 50));
        let mirrored = book(q(350_000, 2), q(600_000, 30));
        let eff = merge_effective_book(&direct, &mirrored);
        assert_eq!(eff.best_ask, q(600_000, 80));
        assert_eq!(eff.best_bid, q(350_000, 2));

        let eff = merge_effective_book(&book(None, None), &mirrored);
        assert_eq!((eff.best_bid, eff.best_ask), (mirrored.best_bid, mirrored.best_ask));
    }

    fn sched() -> GameSchedule {
        GameSchedule::new("g", Timestamp::from_micros(1_000_000_000), Timestamp::from_micros(2_000_000_000)).unwrap()
    }

    #[test]
    fn projection_waits_for_every_leg_and_forward_fills() {
        let recs = vec![rec("a", 0), rec("b", 5_000), rec("a", 10_000)];
        let clustered = cluster_batches(&recs, Span::from_millis(500));
        let s = sched();
        let tokens = vec!["a".to_string(), "b".to_string()];
        let states: Vec<_> = project_states(&clustered, &tokens, &s).collect();
        assert_eq!(states.len(), 2);
        assert_eq!(states[0].ts, Timestamp::from_micros(5_000_000));
        assert_eq!(states[0].legs[0].freshness, Freshness::ForwardFilled);
        assert_eq!(states[0].legs[1].freshness, Freshness::FreshUpdate);
        assert_eq!(states[1].legs[1].book.book_hash, "b5000");
        assert_eq!(states[1].legs[1].source_ts, Timestamp::from_micros(5_000_000));
        assert_eq!(states[1].legs[1].freshness, Freshness::ForwardFilled);
    }

    #[test]
    fn one_sided_record_keeps_other_side() {
        let mut r2 = rec("a", 4_000);
        r2.ask = None;
        r2.bid = q(450_000, 3);
        let recs = vec![rec("a", 0), r2];
        let clustered = cluster_batches(&recs, Span::from_millis(500));
        let s = sched();
        let states: Vec<_> = project_states(&clustered, &["a".to_string()], &s).collect();
        assert_eq!(states[1].legs[0].book.best_ask, q(600_000, 10));
        assert_eq!(states[1].legs[0].book.best_bid, q(450_000, 3));
    }

    #[test]
    fn union_timeline() {
        let t = |v: i64| Timestamp::from_micros(v);
        let u = unified_timeline(&[t(1), t(3), t(5)], &[t(2), t(3)]);
        assert_eq!(u.timestamps().collect::<Vec<_>>(), vec![t(1), t(2), t(3), t(5)]);
        assert_eq!(u.entries[2].1, Updated { moneyline: true, spread: true });
    }

    /// Reference clustering: union-find over every pair of adjacent records.
    fn oracle_clusters(ts: &[i64], window: i64) -> Vec<i64> {
        let n = ts.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, i: usize) -> usize {
            if p[i] != i {
                let r = find(p, p[i]);
                p[i] = r;
            }
            p[i]
        }
        for i in 0..n {
            for j in (i + 1)..n {
                // adjacency in sorted order: no record strictly between i and j
                if j == i + 1 && ts[j] - ts[i] <= window {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[b] = a;
                }
            }
        }
        (0..n)
            .map(|i| {
                let root = find(&mut parent, i);
                (0..n).filter(|&j| find(&mut parent, j) == root).map(|j| ts[j]).min().unwrap()
            })
            .collect()
    }

    proptest! {
        #[test]
        fn clustering_matches_union_find(gaps in proptest::collection::vec(0i64..1_200, 1..40)) {
            let mut ts = vec![0i64];
            for g in &gaps { ts.push(ts.last().unwrap() + g); }
            let recs: Vec<_> = ts.iter().map(|t| rec("a", *t)).collect();
            let got: Vec<i64> = cluster_batches(&recs, Span::from_millis(500))
                .iter().map(|c| c.cluster_ts.as_micros() / 1000).collect();
            prop_assert_eq!(got.clone(), oracle_clusters(&ts, 500));
            // distinct adjacent clusters are separated by more than the window
            for w in 0..ts.len() - 1 {
                if got[w] != got[w + 1] { prop_assert!(ts[w + 1] - ts[w] > 500); }
            }
        }

        #[test]
        fn mirror_is_an_involution(bp in 1i64..1_000_000, bs in 0i64..1000, ap in 1i64..1_000_000, as_ in 0i64..1000, has_bid: bool, has_ask: bool) {
            let b = book(if has_bid { q(bp, bs) } else { None }, if has_ask { q(ap, as_) } else { None });
            prop_assert_eq!(mirror(&mirror(&b)), b.clone());
            if let (Some(bid), Some(mask)) = (b.best_bid, mirror(&b).best_ask) {
                prop_assert_eq!(bid.price + mask.price, Price::ONE);
            }
        }

        #[test]
        fn merge_matches_two_ladder_oracle(
            d in proptest::collection::vec((1i64..100, 1i64..50), 0..2),
            m in proptest::collection::vec((1i64..100, 1i64..50), 0..2),
        ) {
            // ask ladders: pool all levels, best is min price with pooled size
            let to_q = |v: &Vec<(i64, i64)>| v.first().and_then(|(p, s)| q(p * 10_000, *s));
            let (dq, mq) = (to_q(&d), to_q(&m));
            let eff = merge_effective_book(&book(None, dq), &book(None, mq));
            let mut ladder: Vec<(i64, i64)> = d.iter().take(1).chain(m.iter().take(1)).cloned().collect();
            ladder.sort();
            let expect = ladder.first().map(|(p, _)| {
                let total: i64 = ladder.iter().filter(|(pp, _)| pp == p).map(|(_, s)| s).sum();
                Quote::new(Price::from_micros(p * 10_000), Qty::shares(total))
            });
            prop_assert_eq!(eff.best_ask, expect);
        }
    }
}
