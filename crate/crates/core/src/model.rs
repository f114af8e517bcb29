//! Domain types shared across the crate.
//!
//! All monetary and size quantities are fixed-point integers:
//!
//! * [`Price`] counts micro-USDC per share (1 USDC = 1,000,000),
//! * [`Qty`] counts micro-shares,
//! * [`Money`] counts pico-USDC, which is exactly `Price * Qty`.
//!
//! Detection compares integers only, so strict inequalities such as
//! `ask_a + ask_b < 1` hold or fail exactly.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use rust_decimal::Decimal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MICROS: i64 = 1_000_000;
const PICOS: i128 = 1_000_000_000_000;

/// Parses a plain decimal string into an integer scaled by `10^scale`.
///
/// Rejects strings carrying more significant fractional digits than `scale`.
fn parse_scaled(s: &str, scale: u32) -> Result<i128> {
    let d = Decimal::from_str_exact(s.trim())
        .map_err(|e| Error::Value(format!("`{s}` is not a decimal: {e}")))?
        .normalize();
    if d.scale() > scale {
        return Err(Error::Value(format!(
            "`{s}` has more than {scale} fractional digits"
        )));
    }
    let factor = 10i128.pow(scale - d.scale());
    d.mantissa()
        .checked_mul(factor)
        .ok_or_else(|| Error::Value(format!("`{s}` overflows")))
}

fn format_scaled(v: i128, scale: u32, min_frac: usize) -> String {
    let unit = 10i128.pow(scale);
    let sign = if v < 0 { "-" } else { "" };
    let a = v.unsigned_abs();
    let int = a / unit as u128;
    let frac = format!("{:0width$}", a % unit as u128, width = scale as usize);
    let trimmed = frac.trim_end_matches('0');
    let frac = if trimmed.len() < min_frac {
        &frac[..min_frac]
    } else {
        trimmed
    };
    if frac.is_empty() {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

/// Rounds `v / unit` half away from zero.
pub(crate) fn div_round(v: i128, unit: i128) -> i128 {
    let q = v / unit;
    let r = v % unit;
    if 2 * r.abs() >= unit {
        q + v.signum()
    } else {
        q
    }
}

// ---------------------------------------------------------------------------
// Time
// ---------------------------------------------------------------------------

/// UTC instant at microsecond resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const fn from_micros(us: i64) -> Self {
        Timestamp(us)
    }

    pub const fn as_micros(self) -> i64 {
        self.0
    }

    pub fn parse(s: &str) -> Result<Self> {
        let dt = DateTime::parse_from_rfc3339(s)
            .map_err(|e| Error::Value(format!("`{s}` is not an RFC3339 timestamp: {e}")))?;
        Ok(Timestamp(dt.with_timezone(&Utc).timestamp_micros()))
    }

    pub fn now() -> Self {
        Timestamp(Utc::now().timestamp_micros())
    }

    pub fn to_rfc3339(self) -> String {
        Utc.timestamp_micros(self.0)
            .single()
            .expect("timestamp within chrono range")
            .to_rfc3339_opts(SecondsFormat::Micros, true)
    }

    pub fn since(self, earlier: Timestamp) -> Span {
        Span(self.0 - earlier.0)
    }
}

impl Add<Span> for Timestamp {
    type Output = Timestamp;
    fn add(self, rhs: Span) -> Timestamp {
        Timestamp(self.0 + rhs.0)
    }
}

impl Sub<Span> for Timestamp {
    type Output = Timestamp;
    fn sub(self, rhs: Span) -> Timestamp {
        Timestamp(self.0 - rhs.0)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_rfc3339())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Timestamp::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Signed time span in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span(i64);

impl Span {
    pub const ZERO: Span = Span(0);

    pub const fn from_micros(us: i64) -> Self {
        Span(us)
    }

    pub const fn from_millis(ms: i64) -> Self {
        Span(ms * 1_000)
    }

    pub const fn from_secs(s: i64) -> Self {
        Span(s * MICROS)
    }

    /// Parses a decimal number of seconds, e.g. `"3.614"`.
    pub fn parse_secs(s: &str) -> Result<Self> {
        let v = parse_scaled(s, 6)?;
        i64::try_from(v)
            .map(Span)
            .map_err(|_| Error::Value(format!("`{s}` seconds overflows")))
    }

    pub const fn as_micros(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS as f64
    }

    /// Seconds rendered with `digits` fractional digits, rounded half away from zero.
    pub fn format_secs(self, digits: u32) -> String {
        let unit = 10i128.pow(6 - digits);
        let v = div_round(self.0 as i128, unit);
        format_scaled(v, digits, digits as usize)
    }
}

impl Add for Span {
    type Output = Span;
    fn add(self, rhs: Span) -> Span {
        Span(self.0 + rhs.0)
    }
}

impl std::iter::Sum for Span {
    fn sum<I: Iterator<Item = Span>>(iter: I) -> Span {
        iter.fold(Span::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", format_scaled(self.0 as i128, 6, 1))
    }
}

// ---------------------------------------------------------------------------
// Money
// ---------------------------------------------------------------------------

/// Per-share price in micro-USDC.
///
/// The type is signed so that sums, differences and edges stay in the same
/// unit. Resting quotes are checked with [`Price::quote`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Price(i64);

impl Price {
    pub const ZERO: Price = Price(0);
    /// The $1.00 payout of a winning share.
    pub const ONE: Price = Price(MICROS);

    pub const fn from_micros(us: i64) -> Self {
        Price(us)
    }

    /// A resting quote price; must lie strictly inside (0, 1).
    pub fn quote(micros: i64) -> Result<Self> {
        if micros <= 0 || micros >= MICROS {
            return Err(Error::Value(format!(
                "price out of (0,1): {}",
                format_scaled(micros as i128, 6, 6)
            )));
        }
        Ok(Price(micros))
    }

    pub fn parse_quote(s: &str) -> Result<Self> {
        let v = parse_scaled(s, 6)?;
        if v <= 0 || v >= MICROS as i128 {
            return Err(Error::Value(format!("price out of (0,1): {s}")));
        }
        Ok(Price(v as i64))
    }

    pub const fn as_micros(self) -> i64 {
        self.0
    }

    pub fn is_quote(self) -> bool {
        self.0 > 0 && self.0 < MICROS
    }

    /// `1 - self`: the complementary token's reflected price.
    pub fn complement(self) -> Price {
        Price(MICROS - self.0)
    }

    pub fn to_bps(self) -> Bps {
        // (p / 1e6) * 1e4 bps = p / 100 bps = p centi-bps
        Bps(self.0)
    }
}

impl Add for Price {
    type Output = Price;
    fn add(self, rhs: Price) -> Price {
        Price(self.0 + rhs.0)
    }
}

impl Sub for Price {
    type Output = Price;
    fn sub(self, rhs: Price) -> Price {
        Price(self.0 - rhs.0)
    }
}

impl Neg for Price {
    type Output = Price;
    fn neg(self) -> Price {
        Price(-self.0)
    }
}

impl Mul<Qty> for Price {
    type Output = Money;
    fn mul(self, rhs: Qty) -> Money {
        Money(self.0 as i128 * rhs.0 as i128)
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_scaled(self.0 as i128, 6, 6))
    }
}

impl Serialize for Price {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Price {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let v = parse_scaled(&s, 6).map_err(serde::de::Error::custom)?;
        i64::try_from(v)
            .map(Price)
            .map_err(|_| serde::de::Error::custom("price overflows"))
    }
}

/// Share quantity in micro-shares.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Qty(i64);

impl Qty {
    pub const ZERO: Qty = Qty(0);

    pub fn from_micros(us: i64) -> Result<Self> {
        if us < 0 {
            return Err(Error::Value(format!("negative size {us}")));
        }
        Ok(Qty(us))
    }

    pub const fn shares(n: i64) -> Self {
        Qty(n * MICROS)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let v = parse_scaled(s, 6)?;
        let v = i64::try_from(v).map_err(|_| Error::Value(format!("size `{s}` overflows")))?;
        Qty::from_micros(v)
    }

    pub const fn as_micros(self) -> i64 {
        self.0
    }

    pub fn as_shares_f64(self) -> f64 {
        self.0 as f64 / MICROS as f64
    }

    /// Rounds down to a whole number of shares.
    pub fn floor_whole(self) -> Qty {
        Qty(self.0 - self.0 % MICROS)
    }
}

impl Add for Qty {
    type Output = Qty;
    fn add(self, rhs: Qty) -> Qty {
        Qty(self.0 + rhs.0)
    }
}

impl fmt::Display for Qty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_scaled(self.0 as i128, 6, 6))
    }
}

impl Serialize for Qty {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Qty {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Qty::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Serialized as whole microseconds.
impl Serialize for Span {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i64(self.0)
    }
}

impl<'de> Deserialize<'de> for Span {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        i64::deserialize(d).map(Span)
    }
}

/// USDC amount in pico-USDC, the exact product of a [`Price`] and a [`Qty`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i128);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_picos(p: i128) -> Self {
        Money(p)
    }

    pub const fn usdc(whole: i64) -> Self {
        Money(whole as i128 * PICOS)
    }

    pub fn parse(s: &str) -> Result<Self> {
        parse_scaled(s, 12).map(Money)
    }

    pub const fn as_picos(self) -> i128 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / PICOS as f64
    }

    /// Largest quantity (to the micro-share) whose cost at `per_share` fits in `self`.
    pub fn affordable(self, per_share: Price) -> Qty {
        assert!(per_share.0 > 0, "per-share capital must be positive");
        let q = (self.0 / per_share.0 as i128).max(0);
        Qty(i64::try_from(q).unwrap_or(i64::MAX))
    }

    /// Ratio in basis points, `10_000 * self / denom`.
    pub fn bps_of(self, denom: Money) -> f64 {
        if denom.0 == 0 {
            return 0.0;
        }
        10_000.0 * self.0 as f64 / denom.0 as f64
    }

    /// Rendered to whole cents, rounded half away from zero.
    pub fn format_cents(self) -> String {
        let cents = div_round(self.0, PICOS / 100);
        format_scaled(cents, 2, 2)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_scaled(self.0, 12, 2))
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Money::parse(&s).map_err(serde::de::Error::custom)
    }
}

impl FromStr for Money {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Money::parse(s)
    }
}

/// Basis points held in hundredths of a basis point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bps(i64);

impl Bps {
    pub const fn from_centi(c: i64) -> Self {
        Bps(c)
    }

    pub const fn as_centi(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Bps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_scaled(self.0 as i128, 2, 2))
    }
}

// ---------------------------------------------------------------------------
// Books and markets
// ---------------------------------------------------------------------------

/// One side of a top-of-book: best price and the size resting there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Quote {
    pub price: Price,
    pub size: Qty,
}

impl Quote {
    pub fn new(price: Price, size: Qty) -> Self {
        Quote { price, size }
    }
}

/// Level-1 state of one outcome token.
///
/// A crossed book (`bid >= ask`) is representable on purpose.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BookTop {
    pub token_id: String,
    pub ts: Timestamp,
    pub best_bid: Option<Quote>,
    pub best_ask: Option<Quote>,
    pub book_hash: String,
}

impl BookTop {
    pub fn empty(token_id: impl Into<String>, ts: Timestamp) -> Self {
        BookTop {
            token_id: token_id.into(),
            ts,
            best_bid: None,
            best_ask: None,
            book_hash: String::new(),
        }
    }
}

/// Bid-ask spread against the $1.00 payout; negative for crossed books.
pub fn spread_bps(top: &BookTop) -> Option<Bps> {
    match (top.best_bid, top.best_ask) {
        (Some(b), Some(a)) => Some((a.price - b.price).to_bps()),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketKind {
    Moneyline,
    Spread,
    Total,
    PlayerProp,
    Other,
}

impl MarketKind {
    pub fn label(self) -> &'static str {
        match self {
            MarketKind::Moneyline => "Moneyline",
            MarketKind::Spread => "Spread",
            MarketKind::Total => "Total (Points)",
            MarketKind::PlayerProp => "Player Prop",
            MarketKind::Other => "Other",
        }
    }
}

impl fmt::Display for MarketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Point handicap in half-point units; positive when the first listed team gives points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Handicap(i32);

impl Handicap {
    pub const fn from_half_points(h: i32) -> Self {
        Handicap(h)
    }

    pub fn from_points(points: f64) -> Result<Self> {
        let half = points * 2.0;
        if !half.is_finite() || half.fract() != 0.0 || half.abs() > i32::MAX as f64 {
            return Err(Error::Value(format!(
                "handicap {points} is not a multiple of 0.5"
            )));
        }
        Ok(Handicap(half as i32))
    }

    pub const fn half_points(self) -> i32 {
        self.0
    }

    pub fn points(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn abs(self) -> Handicap {
        Handicap(self.0.abs())
    }

    /// Half-point lines cannot push.
    pub fn is_half_point(self) -> bool {
        self.0 % 2 != 0
    }
}

impl fmt::Display for Handicap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            let sign = if self.0 < 0 { "-" } else { "" };
            write!(f, "{sign}{}.5", self.0.abs() / 2)
        }
    }
}

impl Serialize for Handicap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.points())
    }
}

impl<'de> Deserialize<'de> for Handicap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Handicap::from_points(v).map_err(serde::de::Error::custom)
    }
}

/// Which of a game's two teams a token or margin refers to.
///
/// Every market of a game lists its tokens as `[team A, team B]` (or
/// `[over, under]`), and the final margin is `score_A - score_B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::A => 0,
            Side::B => 1,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarketDescriptor {
    pub market_id: String,
    pub event_slug: String,
    pub kind: MarketKind,
    /// `[team A / over, team B / under]`.
    pub tokens: [String; 2],
    pub handicap: Option<Handicap>,
}

impl MarketDescriptor {
    pub fn token(&self, side: Side) -> &str {
        &self.tokens[side.index()]
    }

    pub fn side_of(&self, token: &str) -> Option<Side> {
        if self.tokens[0] == token {
            Some(Side::A)
        } else if self.tokens[1] == token {
            Some(Side::B)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameSchedule {
    pub event_slug: String,
    pub tip_off: Timestamp,
    pub physical_end: Timestamp,
}

impl GameSchedule {
    pub fn new(event_slug: impl Into<String>, tip_off: Timestamp, physical_end: Timestamp) -> Result<Self> {
        let event_slug = event_slug.into();
        if tip_off >= physical_end {
            return Err(Error::Value(format!(
                "{event_slug}: tip_off {tip_off} is not before physical_end {physical_end}"
            )));
        }
        Ok(GameSchedule {
            event_slug,
            tip_off,
            physical_end,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PreGame,
    InGame,
    PostGame,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::PreGame, Phase::InGame, Phase::PostGame];

    /// Position in [`Phase::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Phase::PreGame => "Pre-Game",
            Phase::InGame => "In-Game",
            Phase::PostGame => "Post-Game",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Half-open phases: `[tip_off, physical_end)` is in-game.
pub fn phase_of(ts: Timestamp, sched: &GameSchedule) -> Phase {
    if ts < sched.tip_off {
        Phase::PreGame
    } else if ts < sched.physical_end {
        Phase::InGame
    } else {
        Phase::PostGame
    }
}

/// Final point differential `score_A - score_B`; never zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalResult {
    pub event_slug: String,
    pub delta: i32,
}

impl FinalResult {
    pub fn new(event_slug: impl Into<String>, delta: i32) -> Result<Self> {
        let event_slug = event_slug.into();
        if delta == 0 {
            return Err(Error::InvalidResult(format!(
                "{event_slug}: point differential cannot be 0"
            )));
        }
        Ok(FinalResult { event_slug, delta })
    }
}
