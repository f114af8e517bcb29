//! Moneyline / spread combinatorial arbitrage.
//!
//! A spread token on the team giving `h >= 1` points pays on a strict subset
//! of the outcomes where that team's moneyline pays. Short selling is not
//! available, so the executable form buys the moneyline of the favorite and
//! the spread token of the underdog; at least one of the two always pays, and
//! both pay when the favorite wins by less than `h`.

use std::collections::BTreeMap;

use crate::config::{BookView, ScanConfig};
use crate::detect::Snapshot;
use crate::error::{Error, Result};
use crate::model::{
    BookTop, FinalResult, Handicap, MarketDescriptor, MarketKind, Money, Phase, Price, Qty, Quote,
    Side, Timestamp,
};
use crate::reconstruct::{effective_pair, AlignedState};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComboPair {
    pub id: String,
    pub ml_market: String,
    pub spread_market: String,
    /// Team giving points on the spread.
    pub favorite: Side,
    /// Points given, always positive and a half-point line.
    pub handicap: Handicap,
    pub ml_favorite: String,
    pub ml_underdog: String,
    pub spread_favorite: String,
    pub spread_underdog: String,
}

impl ComboPair {
    /// Leg order used for aligned states: ML fav, ML dog, spread fav, spread dog.
    pub fn tokens(&self) -> Vec<String> {
        vec![
            self.ml_favorite.clone(),
            self.ml_underdog.clone(),
            self.spread_favorite.clone(),
            self.spread_underdog.clone(),
        ]
    }
}

/// Pairs every moneyline with every half-point spread of at least 1.5 points.
///
/// Returns the pairs and one warning per spread that was skipped.
pub fn enumerate_pairs(markets: &[MarketDescriptor]) -> (Vec<ComboPair>, Vec<String>) {
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    let moneylines: Vec<_> = markets.iter().filter(|m| m.kind == MarketKind::Moneyline).collect();
    for sp in markets.iter().filter(|m| m.kind == MarketKind::Spread) {
        let Some(h) = sp.handicap else {
            warnings.push(format!("spread {} has no handicap; skipped", sp.market_id));
            continue;
        };
        if !h.is_half_point() {
            warnings.push(format!("spread {} has push-capable line {h}; skipped", sp.market_id));
            continue;
        }
        if h.abs().half_points() < 2 {
            warnings.push(format!("spread {} line {h} is under 1 point; skipped", sp.market_id));
            continue;
        }
        let favorite = if h.half_points() > 0 { Side::A } else { Side::B };
        for ml in &moneylines {
            pairs.push(ComboPair {
                id: format!("{}~{}", ml.market_id, sp.market_id),
                ml_market: ml.market_id.clone(),
                spread_market: sp.market_id.clone(),
                favorite,
                handicap: h.abs(),
                ml_favorite: ml.token(favorite).to_string(),
                ml_underdog: ml.token(favorite.other()).to_string(),
                spread_favorite: sp.token(favorite).to_string(),
                spread_underdog: sp.token(favorite.other()).to_string(),
            });
        }
    }
    (pairs, warnings)
}

/// Effective books of the three tokens the combo logic reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComboBooks {
    pub ml_favorite: BookTop,
    pub spread_favorite: BookTop,
    pub spread_underdog: BookTop,
}

pub fn combo_books(state: &AlignedState, view: BookView) -> ComboBooks {
    match view {
        BookView::Direct => {
            let (ml_fav, _) = effective_pair(state.leg(0), state.leg(1));
            let (sp_fav, sp_dog) = effective_pair(state.leg(2), state.leg(3));
            ComboBooks {
                ml_favorite: ml_fav,
                spread_favorite: sp_fav,
                spread_underdog: sp_dog,
            }
        }
        BookView::Effective => ComboBooks {
            ml_favorite: state.leg(0).clone(),
            spread_favorite: state.leg(2).clone(),
            spread_underdog: state.leg(3).clone(),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComboSignal {
    pub ts: Timestamp,
    pub pair_id: String,
    pub ask_ml: Quote,
    pub ask_spread: Quote,
    pub combined_cost: Price,
    pub edge: Price,
    pub bottleneck: Qty,
    pub notional: Money,
    pub phase: Phase,
    /// Whether the favorite's spread bid exceeded its moneyline ask.
    pub dominance_violated: bool,
}

impl ComboSignal {
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            ts: self.ts,
            phase: self.phase,
            edge: self.edge,
            bottleneck: self.bottleneck,
            capital_per_share: self.combined_cost,
        }
    }
}

/// `Bid(Sp_fav) > Ask(ML_fav)`: the theoretical mispricing, which cannot be
/// traded directly.
pub fn dominance_violated(books: &ComboBooks) -> bool {
    match (books.spread_favorite.best_bid, books.ml_favorite.best_ask) {
        (Some(bid), Some(ask)) => bid.price > ask.price,
        _ => false,
    }
}

/// `Ask(ML_fav) + Ask(Sp_dog) < 1` with enough notional on the thinner leg.
pub fn detect_combo_state(
    pair: &ComboPair,
    ts: Timestamp,
    phase: Phase,
    books: &ComboBooks,
    cfg: &ScanConfig,
) -> Option<ComboSignal> {
    let ask_ml = books.ml_favorite.best_ask?;
    let ask_spread = books.spread_underdog.best_ask?;
    let combined_cost = ask_ml.price + ask_spread.price;
    if combined_cost >= Price::ONE {
        return None;
    }
    let edge = Price::ONE - combined_cost;
    if edge <= cfg.profit_threshold {
        return None;
    }
    let bottleneck = ask_ml.size.min(ask_spread.size);
    let notional = combined_cost * bottleneck;
    if !cfg.passes_floor(notional) {
        return None;
    }
    Some(ComboSignal {
        ts,
        pair_id: pair.id.clone(),
        ask_ml,
        ask_spread,
        combined_cost,
        edge,
        bottleneck,
        notional,
        phase,
        dominance_violated: dominance_violated(books),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Payoff {
    /// Payout per synthetic share: $1.00, or $2.00 when both legs pay.
    pub payout: Price,
    pub jackpot: bool,
}

/// Settles one synthetic share against the final margin.
pub fn resolve_payoff(pair: &ComboPair, result: &FinalResult) -> Result<Payoff> {
    if result.delta == 0 {
        return Err(Error::InvalidResult(format!(
            "{}: point differential cannot be 0",
            result.event_slug
        )));
    }
    let margin = match pair.favorite {
        Side::A => result.delta,
        Side::B => -result.delta,
    };
    let ml_pays = margin >= 1;
    // spread underdog pays when the favorite fails to cover: margin < h
    let spread_dog_pays = 2 * i64::from(margin) < i64::from(pair.handicap.half_points());
    let legs = u8::from(ml_pays) + u8::from(spread_dog_pays);
    Ok(Payoff {
        payout: Price::from_micros(i64::from(legs) * Price::ONE.as_micros()),
        jackpot: legs == 2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Resolution {
    Baseline,
    Jackpot,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct AuditEntry {
    pub slug: String,
    pub pair_id: String,
    pub start_ts: Timestamp,
    pub resolution: Resolution,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct JackpotAudit {
    /// Episodes with a known result; the audit denominator.
    pub resolved: usize,
    pub unresolved: usize,
    pub jackpots: usize,
    pub entries: Vec<AuditEntry>,
}

/// Classifies each combo episode's payoff; episodes without a result are
/// counted separately and left out of the denominator.
pub fn jackpot_audit<'a, I>(episodes: I, results: &BTreeMap<String, FinalResult>) -> Result<JackpotAudit>
where
    I: IntoIterator<Item = (&'a str, &'a ComboPair, Timestamp)>,
{
    let mut audit = JackpotAudit::default();
    for (slug, pair, start_ts) in episodes {
        let resolution = match results.get(slug) {
            None => {
                audit.unresolved += 1;
                Resolution::Unresolved
            }
            Some(r) => {
                audit.resolved += 1;
                if resolve_payoff(pair, r)?.jackpot {
                    audit.jackpots += 1;
                    Resolution::Jackpot
                } else {
                    Resolution::Baseline
                }
            }
        };
        audit.entries.push(AuditEntry {
            slug: slug.to_string(),
            pair_id: pair.id.clone(),
            start_ts,
            resolution,
        });
    }
    Ok(audit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn market(id: &str, kind: MarketKind, h: Option<f64>) -> MarketDescriptor {
        MarketDescriptor {
            market_id: id.into(),
            event_slug: "g".into(),
            kind,
            tokens: [format!("{id}-a"), format!("{id}-b")],
            handicap: h.map(|v| Handicap::from_points(v).unwrap()),
        }
    }

    fn pair(h: f64) -> ComboPair {
        let ms = [market("ml", MarketKind::Moneyline, None), market("sp", MarketKind::Spread, Some(h))];
        enumerate_pairs(&ms).0.remove(0)
    }

    #[test]
    fn pairing_rules() {
        let ms = vec![
            market("ml", MarketKind::Moneyline, None),
            market("s1", MarketKind::Spread, Some(1.5)),
            market("s6", MarketKind::Spread, Some(6.5)),
            market("tot", MarketKind::Total, Some(220.5)),
        ];
        let (pairs, warnings) = enumerate_pairs(&ms);
        assert_eq!(pairs.len(), 2);
        assert!(warnings.is_empty());
        assert_eq!(pairs[0].spread_underdog, "s1-b");

        let ms = vec![
            market("ml", MarketKind::Moneyline, None),
            market("half", MarketKind::Spread, Some(0.5)),
            market("push", MarketKind::Spread, Some(3.0)),
            market("none", MarketKind::Spread, None),
        ];
        let (pairs, warnings) = enumerate_pairs(&ms);
        assert!(pairs.is_empty());
        assert_eq!(warnings.len(), 3);

        let (pairs, _) = enumerate_pairs(&[market("s1", MarketKind::Spread, Some(1.5))]);
        assert!(pairs.is_empty());
    }

    #[test]
    fn underdog_side_spreads_flip_orientation() {
        let ms = [market("ml", MarketKind::Moneyline, None), market("sp", MarketKind::Spread, Some(-2.5))];
        let p = enumerate_pairs(&ms).0.remove(0);
        assert_eq!(p.favorite, Side::B);
        assert_eq!(p.ml_favorite, "ml-b");
        assert_eq!(p.spread_underdog, "sp-a");
        assert_eq!(p.handicap, Handicap::from_half_points(5));
        // B wins by 2 < 2.5: both legs pay
        let r = FinalResult::new("g", -2).unwrap();
        assert!(resolve_payoff(&p, &r).unwrap().jackpot);
    }

    fn books(ml_ask: Option<(&str, i64)>, sp_dog_ask: Option<(&str, i64)>) -> ComboBooks {
        let top = |ask: Option<(&str, i64)>| BookTop {
            token_id: "t".into(),
            ts: Timestamp::from_micros(0),
            best_bid: None,
            best_ask: ask.map(|(p, s)| Quote::new(Price::parse_quote(p).unwrap(), Qty::shares(s))),
            book_hash: String::new(),
        };
        ComboBooks {
            ml_favorite: top(ml_ask),
            spread_favorite: top(None),
            spread_underdog: top(sp_dog_ask),
        }
    }

    #[test]
    fn detection_examples() {
        let cfg = ScanConfig::default();
        let p = pair(1.5);
        let t = Timestamp::from_micros(0);
        let s = detect_combo_state(&p, t, Phase::InGame, &books(Some(("0.60", 40)), Some(("0.38", 25))), &cfg).unwrap();
        assert_eq!(s.combined_cost, Price::parse_quote("0.98").unwrap());
        assert_eq!(s.edge, Price::parse_quote("0.02").unwrap());
        assert_eq!(s.bottleneck, Qty::shares(25));
        assert_eq!(s.notional, Money::parse("24.50").unwrap());
        assert!(detect_combo_state(&p, t, Phase::InGame, &books(Some(("0.60", 40)), Some(("0.40", 25))), &cfg).is_none());
        assert!(detect_combo_state(&p, t, Phase::InGame, &books(Some(("0.60", 40)), None), &cfg).is_none());
    }

    #[test]
    fn payoff_examples() {
        let p = pair(1.5);
        let r = |d| FinalResult::new("g", d).unwrap();
        assert_eq!(resolve_payoff(&p, &r(1)).unwrap(), Payoff { payout: Price::from_micros(2_000_000), jackpot: true });
        assert_eq!(resolve_payoff(&p, &r(5)).unwrap(), Payoff { payout: Price::ONE, jackpot: false });
        assert_eq!(resolve_payoff(&p, &r(-3)).unwrap(), Payoff { payout: Price::ONE, jackpot: false });
        let bad = FinalResult { event_slug: "g".into(), delta: 0 };
        assert!(matches!(resolve_payoff(&p, &bad), Err(Error::InvalidResult(_))));
    }

    #[test]
    fn audit_counts() {
        let p = pair(1.5);
        let t = Timestamp::from_micros(0);
        let mut results = BTreeMap::new();
        results.insert("g1".to_string(), FinalResult::new("g1", 1).unwrap());
        results.insert("g2".to_string(), FinalResult::new("g2", 7).unwrap());
        let a = jackpot_audit([("g1", &p, t), ("g2", &p, t), ("g3", &p, t)], &results).unwrap();
        assert_eq!((a.resolved, a.unresolved, a.jackpots), (2, 1, 1));
        let empty = jackpot_audit(std::iter::empty(), &results).unwrap();
        assert_eq!(empty.jackpots, 0);
    }
}
