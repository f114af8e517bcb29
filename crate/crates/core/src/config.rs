//! Scan parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Money, Phase, Price, Span};

/// Whether logged books are the direct resting orders of each token, or
/// already include the venue's mirrored liquidity from the complement token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BookView {
    /// Effective books are synthesized by merging each token with the
    /// reflection of its complement.
    #[default]
    Direct,
    /// Books are used as logged.
    Effective,
}

impl std::str::FromStr for BookView {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(BookView::Direct),
            "effective" => Ok(BookView::Effective),
            other => Err(Error::Config(format!("unknown book view `{other}`"))),
        }
    }
}

/// Per-phase cap on the credited gap between consecutive snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrustCeiling {
    pub pre_game: Span,
    pub in_game: Span,
    pub post_game: Span,
}

impl Default for TrustCeiling {
    fn default() -> Self {
        TrustCeiling {
            pre_game: Span::from_secs(1800),
            in_game: Span::from_secs(300),
            post_game: Span::from_secs(1800),
        }
    }
}

impl TrustCeiling {
    pub fn for_phase(&self, phase: Phase) -> Span {
        match phase {
            Phase::PreGame => self.pre_game,
            Phase::InGame => self.in_game,
            Phase::PostGame => self.post_game,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanConfig {
    /// Capital deployed per episode under one-shot execution.
    pub budget: Money,
    /// Minimum executable notional at the bottleneck leg.
    pub liquidity_floor: Money,
    /// `true`: notional must be `>= floor`; `false`: strictly greater.
    pub floor_inclusive: bool,
    pub cluster_window: Span,
    pub ceilings: TrustCeiling,
    /// Per-share edge must be strictly greater than this.
    pub profit_threshold: Price,
    /// Terminal credit used when a market has fewer than two distinct snapshots.
    pub terminal_fallback: Span,
    pub book_view: BookView,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            budget: Money::usdc(100),
            liquidity_floor: Money::usdc(10),
            floor_inclusive: true,
            cluster_window: Span::from_millis(500),
            ceilings: TrustCeiling::default(),
            profit_threshold: Price::ZERO,
            terminal_fallback: Span::from_secs(4),
            book_view: BookView::Direct,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        let positive_spans = [
            ("cluster window", self.cluster_window),
            ("pre-game ceiling", self.ceilings.pre_game),
            ("in-game ceiling", self.ceilings.in_game),
            ("post-game ceiling", self.ceilings.post_game),
            ("terminal fallback", self.terminal_fallback),
        ];
        for (name, span) in positive_spans {
            if span <= Span::ZERO {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.budget <= Money::ZERO {
            return Err(Error::Config("budget must be positive".into()));
        }
        if self.liquidity_floor <= Money::ZERO {
            return Err(Error::Config("liquidity floor must be positive".into()));
        }
        if self.profit_threshold < Price::ZERO {
            return Err(Error::Config("profit threshold cannot be negative".into()));
        }
        Ok(())
    }

    pub fn passes_floor(&self, notional: Money) -> bool {
        if self.floor_inclusive {
            notional >= self.liquidity_floor
        } else {
            notional > self.liquidity_floor
        }
    }
}
