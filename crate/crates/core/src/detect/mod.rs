//! Arbitrage conditions evaluated on aligned states.

pub mod combo;
pub mod single;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{Money, Phase, Price, Qty, Timestamp};

/// Execution path of a detected crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Path {
    /// Buy both outcome tokens at the ask.
    Long,
    /// Mint a $1.00 pair and sell both tokens at the bid.
    Short,
    /// Buy the favorite's moneyline and the underdog's spread token.
    Combo,
}

impl Path {
    pub fn label(self) -> &'static str {
        match self {
            Path::Long => "long",
            Path::Short => "short",
            Path::Combo => "combo",
        }
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// The execution-relevant part of a signal, shared by single and combo paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Snapshot {
    pub ts: Timestamp,
    pub phase: Phase,
    /// Profit per share, in micro-USDC.
    pub edge: Price,
    pub bottleneck: Qty,
    /// Capital committed per share: combined ask cost, or $1.00 collateral when minting.
    pub capital_per_share: Price,
}

impl Snapshot {
    pub fn executable(&self, budget: Money) -> Qty {
        executable_shares(self.bottleneck, self.capital_per_share, budget)
    }

    /// Profit when the position is limited by both book depth and `budget`.
    pub fn capped_profit(&self, budget: Money) -> Money {
        self.edge * self.executable(budget)
    }

    pub fn uncapped_profit(&self) -> Money {
        self.edge * self.bottleneck
    }

    pub fn bottleneck_notional(&self) -> Money {
        self.capital_per_share * self.bottleneck
    }
}

/// Shares one execution can take: the whole bottleneck if it fits in the
/// budget, otherwise the largest whole number of shares the budget buys.
pub fn executable_shares(bottleneck: Qty, capital_per_share: Price, budget: Money) -> Qty {
    if capital_per_share * bottleneck <= budget {
        bottleneck
    } else {
        budget.affordable(capital_per_share).floor_whole().min(bottleneck)
    }
}
