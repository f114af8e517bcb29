//! Deterministic synthetic games with a ground-truth manifest.
//!
//! Every market follows a fair value on a one-cent tick grid. Quotes sit at
//! least one tick either side of fair on both tokens, so the baseline carries
//! no single-market crossing. Each spread's fair value for the team giving
//! points stays several ticks under that team's moneyline fair value, so the
//! baseline carries no moneyline/spread crossing either. Injections overwrite
//! a market's (or a pair's) books for a declared number of sweeps with a known
//! edge and bottleneck, and jitter one irrelevant size every sweep so the unit
//! produces exactly one evaluated state per sweep.

mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{BookView, ScanConfig};
use crate::detect::combo::resolve_payoff;
use crate::detect::Path;
use crate::episodes::Episode;
use crate::error::{Error, Result};
use crate::ingest::{content_hash, log_path_for, write_log, GameBundle, SnapshotRecord};
use crate::pipeline::GameScan;
use crate::model::{
    FinalResult, GameSchedule, Handicap, MarketDescriptor, MarketKind, Money, Phase, Price, Qty, Quote, Side,
    Span, Timestamp,
};
use crate::reconstruct::effective_pair;

pub use oracle::{brute_force_scan, OracleScan};

/// One cent, in micro-USDC.
const TICK: i64 = 10_000;
const FAIR_MIN: i64 = 20;
const FAIR_MAX: i64 = 80;
/// Extra size on legs that must not be the bottleneck.
const SLACK: i64 = 50;

fn default_games() -> usize {
    1
}
fn default_interval() -> (f64, f64) {
    (3.6, 5.5)
}
fn default_skew() -> (i64, i64) {
    (2, 50)
}
fn default_update() -> f64 {
    0.75
}
fn default_true() -> bool {
    true
}
fn default_start() -> String {
    "2025-01-15T23:00:00Z".into()
}
fn default_budget() -> String {
    "100".into()
}
fn default_floor() -> String {
    "10".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionSpec {
    #[serde(default)]
    pub game: usize,
    pub path: Path,
    /// `"ml"`, `"spread:N"` or `"total:N"`; for combo injections the spread.
    pub market: String,
    pub phase: Phase,
    /// Sweeps after the phase's first sweep.
    pub start: usize,
    /// Sweeps the crossing persists.
    pub length: usize,
    /// Per-share edge in cents.
    pub edge_ticks: i64,
    /// Bottleneck size in whole shares.
    pub size: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    #[serde(default = "default_games")]
    pub games: usize,
    /// Polling sweeps per game.
    pub sweeps: usize,
    /// First in-game sweep.
    pub tip_off_sweep: usize,
    /// First post-game sweep.
    pub end_sweep: usize,
    /// Spread lines in points; positive when team A gives points.
    #[serde(default)]
    pub spreads: Vec<f64>,
    #[serde(default)]
    pub totals: usize,
    /// Seconds between sweeps, drawn uniformly.
    #[serde(default = "default_interval")]
    pub interval_s: (f64, f64),
    /// Per-record serialization skew in milliseconds.
    #[serde(default = "default_skew")]
    pub skew_ms: (i64, i64),
    /// Chance that a market's quotes move in a sweep.
    #[serde(default = "default_update")]
    pub update_probability: f64,
    /// Widen quotes after the final buzzer.
    #[serde(default = "default_true")]
    pub post_game_withdrawal: bool,
    #[serde(default)]
    pub book_view: BookView,
    #[serde(default = "default_start")]
    pub start: String,
    /// Final point differential per game; drawn when absent.
    #[serde(default)]
    pub results: Vec<i32>,
    #[serde(default = "default_budget")]
    pub budget: String,
    #[serde(default = "default_floor")]
    pub liquidity_floor: String,
    #[serde(default)]
    pub injections: Vec<InjectionSpec>,
}

impl ScenarioSpec {
    /// A baseline-only scenario of the given size.
    pub fn baseline(seed: u64, sweeps: usize) -> Self {
        ScenarioSpec {
            seed,
            games: 1,
            sweeps,
            tip_off_sweep: sweeps / 5,
            end_sweep: sweeps * 9 / 10,
            spreads: vec![1.5, -6.5],
            totals: 1,
            interval_s: default_interval(),
            skew_ms: default_skew(),
            update_probability: default_update(),
            post_game_withdrawal: true,
            book_view: BookView::Direct,
            start: default_start(),
            results: Vec::new(),
            budget: default_budget(),
            liquidity_floor: default_floor(),
            injections: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn slug(&self, game: usize) -> String {
        format!("synth-{}-g{game:03}", self.seed)
    }

    fn phase_sweeps(&self, phase: Phase) -> (usize, usize) {
        match phase {
            Phase::PreGame => (0, self.tip_off_sweep),
            Phase::InGame => (self.tip_off_sweep, self.end_sweep),
            Phase::PostGame => (self.end_sweep, self.sweeps),
        }
    }

    fn interval_micros(&self) -> (i64, i64) {
        let us = |s: f64| (s * 1e6).round() as i64;
        (us(self.interval_s.0), us(self.interval_s.1))
    }
}

/// What the scan should find for one injection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExpectedEpisode {
    pub slug: String,
    pub unit: String,
    pub path: Path,
    pub phase: Phase,
    /// Sweep index of the first injected snapshot.
    pub first_sweep: usize,
    /// Post-game injections are excluded artifacts, not episodes.
    pub excluded: bool,
    pub snapshots: usize,
    pub capped: Money,
    pub uncapped: Money,
    /// Bounds on `end_ts - start_ts`: one sweep interval per forward gap.
    pub span_min: Span,
    pub span_max: Span,
    /// The terminal credit is the unit's median update gap, at least one interval.
    pub credited_min: Span,
    /// Combo injections only.
    pub jackpot: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub seed: u64,
    pub games: Vec<String>,
    pub episodes: Vec<ExpectedEpisode>,
}

impl Manifest {
    pub fn active(&self) -> impl Iterator<Item = &ExpectedEpisode> {
        self.episodes.iter().filter(|e| !e.excluded)
    }
}

// ---------------------------------------------------------------------------
// Validation and manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum MarketRef {
    Moneyline,
    Spread(usize),
    Total(usize),
}

impl MarketRef {
    fn parse(s: &str, spec: &ScenarioSpec) -> Result<Self> {
        let bad = || Error::Scenario(format!("unknown market `{s}`"));
        let r = match s.split_once(':') {
            None if s == "ml" => MarketRef::Moneyline,
            Some(("spread", i)) => MarketRef::Spread(i.parse().map_err(|_| bad())?),
            Some(("total", i)) => MarketRef::Total(i.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        match r {
            MarketRef::Spread(i) if i >= spec.spreads.len() => Err(bad()),
            MarketRef::Total(i) if i >= spec.totals => Err(bad()),
            _ => Ok(r),
        }
    }

    fn id(self, slug: &str) -> String {
        match self {
            MarketRef::Moneyline => format!("{slug}-ml"),
            MarketRef::Spread(i) => format!("{slug}-sp{i}"),
            MarketRef::Total(i) => format!("{slug}-tot{i}"),
        }
    }
}

#[derive(Debug, Clone)]
struct Injection {
    spec: InjectionSpec,
    target: MarketRef,
    /// Absolute sweep window `[first, last]`.
    first: usize,
    last: usize,
    /// Markets whose books the injection writes or freezes.
    touched: Vec<MarketRef>,
}

fn spread_handicap(points: f64) -> Result<Handicap> {
    let h = Handicap::from_points(points).map_err(|e| Error::Scenario(e.to_string()))?;
    if !h.is_half_point() || h.abs().half_points() < 3 {
        return Err(Error::Scenario(format!(
            "spread line {points} must be a half-point line of at least 1.5"
        )));
    }
    Ok(h)
}

fn validate(spec: &ScenarioSpec) -> Result<Vec<Injection>> {
    let err = |m: String| Err(Error::Scenario(m));
    if spec.games == 0 || spec.sweeps < 3 {
        return err("need at least one game and three sweeps".into());
    }
    if !(1 <= spec.tip_off_sweep && spec.tip_off_sweep < spec.end_sweep && spec.end_sweep <= spec.sweeps) {
        return err("sweeps must satisfy 1 <= tip_off_sweep < end_sweep <= sweeps".into());
    }
    let (lo, hi) = spec.interval_micros();
    if !(lo > 0 && lo <= hi) {
        return err("interval_s must be positive and ordered".into());
    }
    let (s0, s1) = spec.skew_ms;
    if !(0 <= s0 && s0 <= s1 && s1 * 1000 * 2 < lo) {
        return err("skew_ms must be ordered and well under the interval".into());
    }
    if !(0.0..=1.0).contains(&spec.update_probability) {
        return err("update_probability must be in [0, 1]".into());
    }
    Timestamp::parse(&spec.start).map_err(|e| Error::Scenario(e.to_string()))?;
    for line in &spec.spreads {
        spread_handicap(*line)?;
    }
    if spec.results.contains(&0) {
        return err("a final differential cannot be 0".into());
    }
    if !spec.results.is_empty() && spec.results.len() != spec.games {
        return err("results must list one differential per game".into());
    }
    parse_money(&spec.budget)?;
    parse_money(&spec.liquidity_floor)?;

    let mut out: Vec<Injection> = Vec::new();
    for (n, inj) in spec.injections.iter().enumerate() {
        let ctx = |m: &str| Error::Scenario(format!("injection {n}: {m}"));
        if inj.game >= spec.games {
            return Err(ctx("game out of range"));
        }
        let target = MarketRef::parse(&inj.market, spec)?;
        let max_edge = match inj.path {
            // stays under every spread's fair-value gap, see module docs
            Path::Long => 6,
            Path::Short | Path::Combo => 15,
        };
        if !(1..=max_edge).contains(&inj.edge_ticks) {
            return Err(ctx(&format!("edge_ticks must be in 1..={max_edge}")));
        }
        if inj.size < 1 || inj.length < 1 {
            return Err(ctx("size and length must be positive"));
        }
        match (inj.path, target) {
            (Path::Combo, MarketRef::Spread(_)) => {}
            (Path::Combo, _) => return Err(ctx("combo injections name a spread")),
            (Path::Short, _) if spec.book_view != BookView::Effective => {
                return Err(ctx("short-only crossings need venue-effective books"));
            }
            _ => {}
        }
        let cost = 100 - if inj.path == Path::Short { 0 } else { inj.edge_ticks };
        let notional = Money::from_picos(i128::from(cost * TICK) * i128::from(inj.size) * 1_000_000);
        if notional < parse_money(&spec.liquidity_floor)? {
            return Err(ctx("bottleneck notional is under the liquidity floor"));
        }
        let (p0, p1) = spec.phase_sweeps(inj.phase);
        let first = p0 + inj.start;
        let last = first + inj.length - 1;
        if last >= p1 {
            return Err(ctx("window leaves its phase"));
        }
        let mut touched = vec![target];
        if target != MarketRef::Moneyline && !matches!(target, MarketRef::Total(_)) {
            touched.push(MarketRef::Moneyline);
        }
        for other in out.iter().filter(|o| o.spec.game == inj.game) {
            let shared = touched.iter().any(|t| other.touched.contains(t));
            // one spare sweep between windows keeps episodes apart
            if shared && first <= other.last + 1 && other.first <= last + 1 {
                return Err(ctx("overlaps another injection on the same markets"));
            }
        }
        out.push(Injection {
            spec: inj.clone(),
            target,
            first,
            last,
            touched,
        });
    }
    Ok(out)
}

fn parse_money(s: &str) -> Result<Money> {
    let m = Money::parse(s).map_err(|e| Error::Scenario(e.to_string()))?;
    if m <= Money::ZERO {
        return Err(Error::Scenario(format!("`{s}` must be positive")));
    }
    Ok(m)
}

/// Whole shares a budget in cents buys at `cost` cents per share.
fn expected_profit(edge: i64, cost: i64, size: i64, budget: Money) -> (Money, Money) {
    let picos_per_cent = 10_000_000_000i128;
    let budget_cents = budget.as_picos() / picos_per_cent;
    let fits = i128::from(cost * size) * picos_per_cent <= budget.as_picos();
    let shares = if fits { i128::from(size) } else { (budget_cents / i128::from(cost)).min(i128::from(size)) };
    let cents = |n: i128| Money::from_picos(n * picos_per_cent);
    (cents(i128::from(edge) * shares), cents(i128::from(edge * size)))
}

fn build_manifest(spec: &ScenarioSpec, injections: &[Injection], results: &[i32]) -> Result<Manifest> {
    let budget = parse_money(&spec.budget)?;
    let (lo, hi) = spec.interval_micros();
    let jitter = (spec.skew_ms.1 - spec.skew_ms.0) * 1000;
    let (gap_lo, gap_hi) = (lo - jitter, hi + jitter);
    let mut episodes = Vec::new();
    for inj in injections {
        let slug = spec.slug(inj.spec.game);
        let e = inj.spec.edge_ticks;
        let (cost, edge) = match inj.spec.path {
            Path::Short => (100, e),
            _ => (100 - e, e),
        };
        let (capped, uncapped) = expected_profit(edge, cost, inj.spec.size, budget);
        let unit = match inj.spec.path {
            Path::Combo => format!("{}~{}", MarketRef::Moneyline.id(&slug), inj.target.id(&slug)),
            _ => inj.target.id(&slug),
        };
        let jackpot = match (inj.spec.path, inj.target) {
            (Path::Combo, MarketRef::Spread(i)) => {
                let h = spread_handicap(spec.spreads[i])?;
                let delta = results[inj.spec.game];
                let margin = if h.half_points() > 0 { delta } else { -delta };
                Some(margin >= 1 && 2 * margin < h.abs().half_points())
            }
            _ => None,
        };
        // L snapshots, L - 1 forward gaps plus the terminal median gap
        let n = inj.spec.length as i64;
        episodes.push(ExpectedEpisode {
            slug,
            unit,
            path: inj.spec.path,
            phase: inj.spec.phase,
            first_sweep: inj.first,
            excluded: inj.spec.phase == Phase::PostGame,
            snapshots: inj.spec.length,
            capped,
            uncapped,
            span_min: Span::from_micros((n - 1) * gap_lo),
            span_max: Span::from_micros((n - 1) * gap_hi),
            credited_min: Span::from_micros(n * gap_lo),
            jackpot,
        });
    }
    episodes.sort_by(|a, b| (&a.slug, &a.unit, a.first_sweep).cmp(&(&b.slug, &b.unit, b.first_sweep)));
    Ok(Manifest {
        seed: spec.seed,
        games: (0..spec.games).map(|g| spec.slug(g)).collect(),
        episodes,
    })
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// A quote in ticks with its size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TickQuote {
    ticks: i64,
    size: Qty,
}

type TokenBook = (TickQuote, TickQuote);

/// Quote offsets from fair: token A below/above, token B below/above.
#[derive(Debug, Clone, Copy)]
struct Shape {
    offsets: [i64; 4],
    sizes: [Qty; 4],
}

fn draw_size(rng: &mut ChaCha8Rng) -> Qty {
    let whole = rng.gen_range(20..=400i64);
    let cents = rng.gen_range(0..100i64);
    Qty::from_micros(whole * 1_000_000 + cents * 10_000).expect("positive size")
}

fn draw_shape(rng: &mut ChaCha8Rng, wide: bool) -> Shape {
    let (lo, hi) = if wide { (8, 18) } else { (1, 3) };
    Shape {
        offsets: [0; 4].map(|_| rng.gen_range(lo..=hi)),
        sizes: [0; 4].map(|_| draw_size(rng)),
    }
}

fn shaped_books(fair: i64, s: &Shape) -> [TokenBook; 2] {
    let q = |ticks: i64, size| TickQuote { ticks, size };
    let comp = 100 - fair;
    // keep every quote inside (0, 1)
    let below = |v: i64, off: i64| v - off.min(v - 1);
    let above = |v: i64, off: i64| v + off.min(99 - v);
    [
        (q(below(fair, s.offsets[0]), s.sizes[0]), q(above(fair, s.offsets[1]), s.sizes[1])),
        (q(below(comp, s.offsets[2]), s.sizes[2]), q(above(comp, s.offsets[3]), s.sizes[3])),
    ]
}

#[derive(Debug, Clone, Copy)]
enum Role {
    Moneyline,
    Spread { favorite: Side, gap: i64 },
    Total,
}

struct MarketSim {
    desc: MarketDescriptor,
    reference: MarketRef,
    role: Role,
    /// Fair value of token A in ticks (moneylines and totals).
    fair: i64,
    shape: Shape,
    last: [Option<(Option<Quote>, Option<Quote>)>; 2],
}

fn shares(n: i64) -> Qty {
    Qty::shares(n)
}

/// Books written by an injection, indexed like the market's tokens.
fn injected_books(path: Path, fair_a: i64, e: i64, size: i64, jitter: Qty) -> [TokenBook; 2] {
    let q = |ticks: i64, size: Qty| TickQuote { ticks, size };
    let big = shares(size + SLACK);
    let f = fair_a;
    match path {
        Path::Long => [
            (q(f - 1, big), q(f + 1, big + jitter)),
            (q(98 - f - e, big), q(99 - f - e, shares(size))),
        ],
        Path::Short => [
            (q(f, shares(size)), q(f + 2, big + jitter)),
            (q(100 - f + e, big), q(102 - f + e, big)),
        ],
        Path::Combo => unreachable!("combo books span two markets"),
    }
}

/// Moneyline and spread books for a combo injection, oriented favorite-first.
fn combo_injected(p_fav: i64, e: i64, size: i64, jitter: Qty) -> ([TokenBook; 2], [TokenBook; 2]) {
    let q = |ticks: i64, size: Qty| TickQuote { ticks, size };
    let big = shares(size + SLACK);
    let ml = [
        (q(p_fav - 1, big), q(p_fav + 1, big + jitter)),
        (q(98 - p_fav, big), q(102 - p_fav, big)),
    ];
    let sp = [
        (q(p_fav + e, big), q(p_fav + e + 2, big)),
        (q(97 - p_fav - e, big), q(99 - p_fav - e, shares(size))),
    ];
    (ml, sp)
}

fn orient(books: [TokenBook; 2], favorite: Side) -> [TokenBook; 2] {
    match favorite {
        Side::A => books,
        Side::B => [books[1], books[0]],
    }
}

fn to_quote(t: TickQuote) -> Quote {
    Quote::new(Price::from_micros(t.ticks * TICK), t.size)
}

struct GameSim<'a> {
    spec: &'a ScenarioSpec,
    slug: String,
    rng: ChaCha8Rng,
    markets: Vec<MarketSim>,
    records: Vec<SnapshotRecord>,
}

impl GameSim<'_> {
    fn moneyline_fair(&self) -> i64 {
        self.markets[0].fair
    }

    fn spread_fair_a(&self, favorite: Side, gap: i64) -> i64 {
        let p_a = self.moneyline_fair();
        let p_fav = if favorite == Side::A { p_a } else { 100 - p_a };
        let q_fav = p_fav - gap.min(p_fav - 6);
        if favorite == Side::A {
            q_fav
        } else {
            100 - q_fav
        }
    }

    fn baseline_books(&self, i: usize) -> [TokenBook; 2] {
        let m = &self.markets[i];
        let fair = match m.role {
            Role::Spread { favorite, gap } => self.spread_fair_a(favorite, gap),
            _ => m.fair,
        };
        shaped_books(fair, &m.shape)
    }

    /// Records the market's books; in the effective view they are merged with
    /// their mirrors first unless `raw`.
    fn emit(&mut self, i: usize, books: [TokenBook; 2], raw: bool, sweep_ts: Timestamp) {
        let books: [TokenBook; 2] = if self.spec.book_view == BookView::Effective && !raw {
            let top = |side: usize| crate::model::BookTop {
                token_id: String::new(),
                ts: sweep_ts,
                best_bid: Some(to_quote(books[side].0)),
                best_ask: Some(to_quote(books[side].1)),
                book_hash: String::new(),
            };
            let (a, b) = effective_pair(&top(0), &top(1));
            let back = |t: &crate::model::BookTop| {
                let tq = |q: Quote| TickQuote {
                    ticks: q.price.as_micros() / TICK,
                    size: q.size,
                };
                (tq(t.best_bid.expect("bid")), tq(t.best_ask.expect("ask")))
            };
            [back(&a), back(&b)]
        } else {
            books
        };
        let (skew_lo, skew_hi) = self.spec.skew_ms;
        for (side, book) in books.iter().enumerate() {
            let content = (Some(to_quote(book.0)), Some(to_quote(book.1)));
            let skew = self.rng.gen_range(skew_lo * 1000..=skew_hi * 1000);
            let m = &mut self.markets[i];
            if m.last[side] == Some(content) {
                continue;
            }
            m.last[side] = Some(content);
            let token = m.desc.tokens[side].clone();
            self.records.push(SnapshotRecord {
                event_slug: self.slug.clone(),
                market_id: m.desc.market_id.clone(),
                book_hash: content_hash(&token, content.0, content.1),
                token_id: token,
                ts: sweep_ts + Span::from_micros(skew),
                bid: content.0,
                ask: content.1,
                recv_ts: None,
                batch: None,
            });
        }
    }
}

fn game_markets(spec: &ScenarioSpec, slug: &str) -> Result<Vec<(MarketDescriptor, MarketRef, Role)>> {
    let desc = |r: MarketRef, kind, handicap| {
        let id = r.id(slug);
        MarketDescriptor {
            market_id: id.clone(),
            event_slug: slug.to_string(),
            kind,
            tokens: [format!("{id}-a"), format!("{id}-b")],
            handicap,
        }
    };
    let mut out = vec![(desc(MarketRef::Moneyline, MarketKind::Moneyline, None), MarketRef::Moneyline, Role::Moneyline)];
    for (i, line) in spec.spreads.iter().enumerate() {
        let h = spread_handicap(*line)?;
        let favorite = if h.half_points() > 0 { Side::A } else { Side::B };
        let gap = 4 + i64::from(h.abs().half_points());
        out.push((
            desc(MarketRef::Spread(i), MarketKind::Spread, Some(h)),
            MarketRef::Spread(i),
            Role::Spread { favorite, gap },
        ));
    }
    for i in 0..spec.totals {
        let line = Handicap::from_half_points(2 * (210 + 5 * i as i32) + 1);
        out.push((desc(MarketRef::Total(i), MarketKind::Total, Some(line)), MarketRef::Total(i), Role::Total));
    }
    Ok(out)
}

fn generate_game(spec: &ScenarioSpec, game: usize, injections: &[&Injection], delta: i32) -> Result<GameBundle> {
    let slug = spec.slug(game);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (game as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let start = Timestamp::parse(&spec.start).map_err(|e| Error::Scenario(e.to_string()))?;
    let (lo, hi) = spec.interval_micros();

    // sweep k starts at times[k]; times[sweeps] closes the game when it ends at the last sweep
    let mut times = Vec::with_capacity(spec.sweeps + 1);
    let mut t = start;
    for _ in 0..=spec.sweeps {
        times.push(t);
        t = t + Span::from_micros(rng.gen_range(lo..=hi));
    }
    let schedule = GameSchedule::new(&slug, times[spec.tip_off_sweep], times[spec.end_sweep])
        .map_err(|e| Error::Scenario(e.to_string()))?;

    let mut markets = Vec::new();
    for (desc, reference, role) in game_markets(spec, &slug)? {
        let fair = rng.gen_range(35..=65);
        let shape = draw_shape(&mut rng, false);
        markets.push(MarketSim {
            desc,
            reference,
            role,
            fair,
            shape,
            last: [None, None],
        });
    }
    let mut sim = GameSim {
        spec,
        slug: slug.clone(),
        rng,
        markets,
        records: Vec::new(),
    };

    for (k, &ts) in times.iter().enumerate().take(spec.sweeps) {
        let wide = spec.post_game_withdrawal && k >= spec.end_sweep;
        let active: Vec<&Injection> = injections.iter().copied().filter(|i| i.first <= k && k <= i.last).collect();
        let frozen = |r: MarketRef| active.iter().any(|i| i.touched.contains(&r));

        for i in 0..sim.markets.len() {
            let r = sim.markets[i].reference;
            let regime_change = wide && k == spec.end_sweep;
            if regime_change || sim.rng.gen_bool(spec.update_probability) {
                let shape = draw_shape(&mut sim.rng, wide);
                let step = sim.rng.gen_range(-1..=1i64);
                let m = &mut sim.markets[i];
                m.shape = shape;
                if !matches!(m.role, Role::Spread { .. }) && !frozen(r) {
                    m.fair = (m.fair + step).clamp(FAIR_MIN, FAIR_MAX);
                }
            }
        }

        let mut written: BTreeMap<usize, ([TokenBook; 2], bool)> = BTreeMap::new();
        for inj in &active {
            let s = &inj.spec;
            // alternating size forces one record per sweep inside the window
            let jitter = Qty::from_micros(((k - inj.first) % 2) as i64 * 10_000).expect("non-negative");
            let idx = |r: MarketRef| sim.markets.iter().position(|m| m.reference == r).expect("validated");
            match s.path {
                Path::Combo => {
                    let spread = idx(inj.target);
                    let Role::Spread { favorite, .. } = sim.markets[spread].role else {
                        unreachable!("validated as spread")
                    };
                    let p_a = sim.moneyline_fair();
                    let p_fav = if favorite == Side::A { p_a } else { 100 - p_a };
                    let (ml, sp) = combo_injected(p_fav, s.edge_ticks, s.size, jitter);
                    written.insert(0, (orient(ml, favorite), false));
                    written.insert(spread, (orient(sp, favorite), false));
                }
                path => {
                    let i = idx(inj.target);
                    let fair_a = match sim.markets[i].role {
                        Role::Spread { favorite, gap } => sim.spread_fair_a(favorite, gap),
                        _ => sim.markets[i].fair,
                    };
                    // a short-only crossing cannot survive a mirror merge
                    let raw = path == Path::Short;
                    written.insert(i, (injected_books(path, fair_a, s.edge_ticks, s.size, jitter), raw));
                }
            }
        }

        for i in 0..sim.markets.len() {
            let (books, raw) = match written.get(&i) {
                Some(b) => *b,
                None => (sim.baseline_books(i), false),
            };
            sim.emit(i, books, raw, ts);
        }
    }

    let result = FinalResult::new(&slug, delta).map_err(|e| Error::Scenario(e.to_string()))?;
    let mut bundle = GameBundle {
        schedule,
        markets: sim.markets.into_iter().map(|m| m.desc).collect(),
        result: Some(result),
        records: sim.records,
    };
    bundle.sort_records();
    Ok(bundle)
}

/// Builds every game of `spec` and the manifest of what was injected.
pub fn generate(spec: &ScenarioSpec) -> Result<(Vec<GameBundle>, Manifest)> {
    let injections = validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(0x5EED));
    let results: Vec<i32> = if spec.results.is_empty() {
        (0..spec.games)
            .map(|_| {
                let d = rng.gen_range(1..=20);
                if rng.gen_bool(0.5) {
                    d
                } else {
                    -d
                }
            })
            .collect()
    } else {
        spec.results.clone()
    };
    let mut bundles = Vec::with_capacity(spec.games);
    for (g, delta) in results.iter().enumerate() {
        let own: Vec<&Injection> = injections.iter().filter(|i| i.spec.game == g).collect();
        bundles.push(generate_game(spec, g, &own, *delta)?);
    }
    let manifest = build_manifest(spec, &injections, &results)?;
    Ok((bundles, manifest))
}

/// Writes logs, sidecars and `manifest.json` into `dir`.
pub fn write_scenario(spec: &ScenarioSpec, dir: &FsPath) -> Result<(Vec<PathBuf>, Manifest)> {
    let (bundles, manifest) = generate(spec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for b in &bundles {
        let path = log_path_for(dir, b.slug());
        write_log(b, &path)?;
        paths.push(path);
    }
    let manifest_path = dir.join("manifest.json");
    let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    body.push('\n');
    fs::write(&manifest_path, body).map_err(|e| Error::io(&manifest_path, e))?;
    Ok((paths, manifest))
}

impl ScenarioSpec {
    /// Scan settings matching the scenario's budget, floor and book view.
    pub fn scan_config(&self) -> Result<ScanConfig> {
        Ok(ScanConfig {
            budget: parse_money(&self.budget)?,
            liquidity_floor: parse_money(&self.liquidity_floor)?,
            book_view: self.book_view,
            ..ScanConfig::default()
        })
    }
}

/// Compares scan output with the manifest. Returns one line per mismatch.
pub fn verify(manifest: &Manifest, scans: &[GameScan]) -> Vec<String> {
    let mut problems = Vec::new();
    let episodes: Vec<&Episode> = scans.iter().flat_map(|s| s.single.iter().chain(&s.combo)).collect();
    let mut matched = vec![false; episodes.len()];
    let mut taken: BTreeMap<(&str, &str, Path, Phase), usize> = BTreeMap::new();
    for want in manifest.active() {
        // the k-th injection on a unit and phase maps to the k-th episode found there
        let k = taken.entry((&want.slug, &want.unit, want.path, want.phase)).or_default();
        let hit = episodes
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                e.slug == want.slug && e.key.unit == want.unit && e.key.path == want.path && e.phase == want.phase
            })
            .nth(*k)
            .map(|(i, _)| i);
        *k += 1;
        let Some(i) = hit else {
            problems.push(format!("missing {} {} {:?} {:?}", want.slug, want.unit, want.path, want.phase));
            continue;
        };
        matched[i] = true;
        let got = episodes[i];
        let tag = format!("{} {:?}", want.unit, want.path);
        if got.snapshots.len() != want.snapshots {
            problems.push(format!("{tag}: {} snapshots, expected {}", got.snapshots.len(), want.snapshots));
        }
        if got.capped != want.capped || got.uncapped != want.uncapped {
            problems.push(format!(
                "{tag}: profit {}/{}, expected {}/{}",
                got.capped, got.uncapped, want.capped, want.uncapped
            ));
        }
        if let Some(jackpot) = want.jackpot {
            let scan = scans.iter().find(|s| s.slug == want.slug);
            let settled = scan
                .and_then(|s| Some((s.pair(&want.unit)?, s.result.as_ref()?)))
                .and_then(|(pair, result)| resolve_payoff(pair, result).ok());
            if settled.map(|p| p.jackpot) != Some(jackpot) {
                problems.push(format!("{tag}: jackpot {settled:?}, expected {jackpot}"));
            }
        }
        let span = got.end_ts.since(got.start_ts);
        if span < want.span_min || span > want.span_max {
            problems.push(format!("{tag}: span {span} outside [{}, {}]", want.span_min, want.span_max));
        }
        if got.credited < want.credited_min {
            problems.push(format!("{tag}: credited {} under {}", got.credited, want.credited_min));
        }
    }
    for (e, _) in episodes.iter().zip(&matched).filter(|(_, m)| !**m) {
        problems.push(format!("unexpected {} {} {:?} at {}", e.slug, e.key.unit, e.key.path, e.start_ts));
    }
    for scan in scans {
        let want = |combo: bool| {
            manifest
                .episodes
                .iter()
                .filter(|e| e.excluded && e.slug == scan.slug && (e.path == Path::Combo) == combo)
                .count()
        };
        for (combo, got) in [(false, scan.single_stats.artifact_episodes), (true, scan.combo_stats.artifact_episodes)] {
            if got != want(combo) {
                problems.push(format!("{}: {got} post-game artifacts, expected {}", scan.slug, want(combo)));
            }
        }
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;

    fn injected(path: Path, market: &str, phase: Phase, start: usize, length: usize) -> InjectionSpec {
        InjectionSpec {
            game: 0,
            path,
            market: market.into(),
            phase,
            start,
            length,
            edge_ticks: 2,
            size: 40,
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let spec = ScenarioSpec::baseline(42, 200);
        let (a, _) = generate(&spec).unwrap();
        let (b, _) = generate(&spec).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate(&ScenarioSpec::baseline(43, 200)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn manifest_lists_injections() {
        let mut spec = ScenarioSpec::baseline(1, 300);
        spec.injections = vec![
            injected(Path::Long, "ml", Phase::InGame, 5, 3),
            injected(Path::Long, "spread:0", Phase::InGame, 20, 4),
            injected(Path::Long, "total:0", Phase::InGame, 40, 1),
        ];
        let (_, m) = generate(&spec).unwrap();
        assert_eq!(m.active().count(), 3);
        assert!(m.episodes.iter().all(|e| e.path == Path::Long));
    }

    #[test]
    fn expected_profit_arithmetic() {
        let (c, u) = expected_profit(2, 98, 500, Money::usdc(100));
        assert_eq!(c, Money::parse("2.04").unwrap());
        assert_eq!(u, Money::usdc(10));
        let (c, u) = expected_profit(5, 95, 8, Money::usdc(100));
        assert_eq!((c, u), (Money::parse("0.40").unwrap(), Money::parse("0.40").unwrap()));
    }

    #[test]
    fn rejects_infeasible_specs() {
        let mut spec = ScenarioSpec::baseline(1, 100);
        spec.injections = vec![InjectionSpec {
            edge_ticks: 40,
            ..injected(Path::Combo, "spread:0", Phase::InGame, 0, 2)
        }];
        assert!(matches!(generate(&spec), Err(Error::Scenario(_))));

        let mut spec = ScenarioSpec::baseline(1, 100);
        spec.injections = vec![injected(Path::Long, "ml", Phase::PreGame, 18, 5)];
        assert!(matches!(generate(&spec), Err(Error::Scenario(_))), "window leaves pre-game");

        let mut spec = ScenarioSpec::baseline(1, 100);
        spec.injections = vec![
            injected(Path::Long, "ml", Phase::InGame, 0, 5),
            injected(Path::Combo, "spread:1", Phase::InGame, 5, 5),
        ];
        assert!(matches!(generate(&spec), Err(Error::Scenario(_))), "shares the moneyline");

        let mut spec = ScenarioSpec::baseline(1, 100);
        spec.spreads = vec![3.0];
        assert!(matches!(generate(&spec), Err(Error::Scenario(_))));

        assert!(matches!(ScenarioSpec::from_json("{\"seed\": 1}"), Err(Error::Scenario(_))));
    }
}
