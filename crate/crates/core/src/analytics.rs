//! Aggregate tables, figure data and report files.
//!
//! Medians are lower medians: for an even count the smaller of the two middle
//! values is reported. Histogram bins are left-closed and right-open and start
//! at zero. Missing values render as `---` in CSV and `null` in JSON.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use serde::Serialize;

use crate::detect::combo::{jackpot_audit, JackpotAudit};
use crate::episodes::{liquidity_binding_stats, Episode, LiquidityStats};
use crate::error::{Error, Result};
use crate::model::{Bps, MarketKind, Money, Phase, Span};
use crate::pipeline::{GameScan, ScopeStats};

/// Episodes at or under this duration ended within one polling cycle.
pub const SUB_POLLING: Span = Span::from_secs(4);

/// Histogram bin width used by the CLI reports.
pub const DEFAULT_BIN_WIDTH: Span = Span::from_secs(4);

pub fn lower_median<T: Ord + Copy>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    Some(v[(v.len() - 1) / 2])
}

pub fn lower_median_f64(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSummary {
    /// `None` for the totals row.
    pub phase: Option<Phase>,
    pub evaluated_states: usize,
    pub episodes: usize,
    /// Credited arb time over observed wall clock, in percent. `None` when
    /// nothing was observed or for the totals row.
    pub pct_time_in_arb: Option<f64>,
    pub arb_time: Span,
    pub median_duration: Option<Span>,
    pub capped: Money,
    pub uncapped: Money,
    pub median_yield_bps: Option<f64>,
}

/// Summary over `episodes`; `exposure` is `None` for a totals row.
pub fn phase_summary(
    phase: Option<Phase>,
    episodes: &[&Episode],
    evaluated_states: usize,
    exposure: Option<Span>,
) -> PhaseSummary {
    let durations: Vec<Span> = episodes.iter().map(|e| e.credited).collect();
    let yields: Vec<f64> = episodes.iter().map(|e| e.yield_bps()).collect();
    let arb_time: Span = durations.iter().copied().sum();
    let pct_time_in_arb = exposure
        .filter(|x| *x > Span::ZERO)
        .map(|x| 100.0 * arb_time.as_micros() as f64 / x.as_micros() as f64);
    PhaseSummary {
        phase,
        evaluated_states,
        episodes: episodes.len(),
        pct_time_in_arb,
        arb_time,
        median_duration: lower_median(&durations),
        capped: episodes.iter().map(|e| e.capped).sum(),
        uncapped: episodes.iter().map(|e| e.uncapped).sum(),
        median_yield_bps: lower_median_f64(&yields),
    }
}

/// Pre-game and in-game rows, then a totals row. Post-game episodes do not
/// exist: those signals are excluded upstream.
pub fn phase_summaries(episodes: &[Episode], stats: &ScopeStats) -> Vec<PhaseSummary> {
    let mut rows = Vec::new();
    for phase in [Phase::PreGame, Phase::InGame] {
        let eps: Vec<&Episode> = episodes.iter().filter(|e| e.phase == phase).collect();
        rows.push(phase_summary(
            Some(phase),
            &eps,
            stats.evaluated[phase.index()],
            Some(stats.exposure[phase.index()]),
        ));
    }
    let all: Vec<&Episode> = episodes.iter().collect();
    let active_states = stats.evaluated[0] + stats.evaluated[1];
    rows.push(phase_summary(None, &all, active_states, None));
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketTypeSummary {
    /// `None` for the overall row.
    pub kind: Option<MarketKind>,
    pub episodes: usize,
    pub median_duration: Option<Span>,
    pub capped: Money,
    pub uncapped: Money,
}

const KIND_ORDER: [MarketKind; 5] = [
    MarketKind::Moneyline,
    MarketKind::Spread,
    MarketKind::Total,
    MarketKind::PlayerProp,
    MarketKind::Other,
];

fn type_row(kind: Option<MarketKind>, eps: &[&Episode]) -> MarketTypeSummary {
    let durations: Vec<Span> = eps.iter().map(|e| e.credited).collect();
    MarketTypeSummary {
        kind,
        episodes: eps.len(),
        median_duration: lower_median(&durations),
        capped: eps.iter().map(|e| e.capped).sum(),
        uncapped: eps.iter().map(|e| e.uncapped).sum(),
    }
}

/// Moneyline, spread and total rows always; other kinds only when they have
/// episodes; then the overall row.
pub fn market_type_summaries(episodes: &[Episode]) -> Vec<MarketTypeSummary> {
    let mut rows = Vec::new();
    for kind in KIND_ORDER {
        let eps: Vec<&Episode> = episodes.iter().filter(|e| e.kind == Some(kind)).collect();
        let core = matches!(kind, MarketKind::Moneyline | MarketKind::Spread | MarketKind::Total);
        if core || !eps.is_empty() {
            rows.push(type_row(Some(kind), &eps));
        }
    }
    let all: Vec<&Episode> = episodes.iter().collect();
    rows.push(type_row(None, &all));
    rows
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpreadByPhase {
    pub phase: Phase,
    pub samples: usize,
    pub median_spread_bps: Option<Bps>,
}

pub fn spread_by_phase(scans: &[GameScan]) -> Vec<SpreadByPhase> {
    Phase::ALL
        .iter()
        .map(|&phase| {
            let all: Vec<Bps> = scans
                .iter()
                .flat_map(|s| s.spreads[phase.index()].iter().copied())
                .collect();
            SpreadByPhase {
                phase,
                samples: all.len(),
                median_spread_bps: lower_median(&all),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistogramBin {
    pub lo: Span,
    pub hi: Span,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: Span,
    /// Contiguous from zero through the bin holding the longest episode.
    pub bins: Vec<HistogramBin>,
    pub total: usize,
    /// Episodes lasting at most [`SUB_POLLING`].
    pub sub_polling: usize,
    pub sub_polling_share: Option<f64>,
}

pub fn duration_histogram(durations: &[Span], bin_width: Span) -> Result<Histogram> {
    if bin_width <= Span::ZERO {
        return Err(Error::Config("histogram bin width must be positive".into()));
    }
    let w = bin_width.as_micros();
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for d in durations {
        *counts.entry(d.as_micros().max(0) / w).or_default() += 1;
    }
    let last = counts.keys().next_back().copied();
    let bins = match last {
        None => Vec::new(),
        Some(last) => (0..=last)
            .map(|i| HistogramBin {
                lo: Span::from_micros(i * w),
                hi: Span::from_micros((i + 1) * w),
                count: counts.get(&i).copied().unwrap_or(0),
            })
            .collect(),
    };
    let sub_polling = durations.iter().filter(|d| **d <= SUB_POLLING).count();
    Ok(Histogram {
        bin_width,
        bins,
        total: durations.len(),
        sub_polling,
        sub_polling_share: (!durations.is_empty()).then(|| sub_polling as f64 / durations.len() as f64),
    })
}

/// An in-game episode placed against game time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScatterPoint {
    pub slug: String,
    pub unit: String,
    pub from_tip_off: Span,
    pub duration: Span,
}

pub fn tipoff_scatter(scans: &[GameScan], combo: bool) -> Vec<ScatterPoint> {
    scans
        .iter()
        .flat_map(|s| {
            let eps = if combo { &s.combo } else { &s.single };
            eps.iter().filter(|e| e.phase == Phase::InGame).map(move |e| ScatterPoint {
                slug: e.slug.clone(),
                unit: e.key.unit.clone(),
                from_tip_off: e.start_ts.since(s.schedule.tip_off),
                duration: e.credited,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleReport {
    pub games: usize,
    pub markets: usize,
    pub stats: ScopeStats,
    pub spreads: Vec<SpreadByPhase>,
    pub phases: Vec<PhaseSummary>,
    pub market_types: Vec<MarketTypeSummary>,
    pub histogram: Histogram,
    pub scatter: Vec<ScatterPoint>,
    pub liquidity: LiquidityStats,
    pub mirror_checks: usize,
    pub mirror_violations: usize,
    pub episodes: Vec<Episode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRow {
    pub slug: String,
    pub pair_id: String,
    pub handicap: String,
    pub episodes: usize,
    pub capped: Money,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComboReport {
    pub games: usize,
    pub stats: ScopeStats,
    pub phases: Vec<PhaseSummary>,
    pub pairs: Vec<PairRow>,
    pub histogram: Histogram,
    pub scatter: Vec<ScatterPoint>,
    pub liquidity: LiquidityStats,
    pub audit: JackpotAudit,
    pub dominance_violations: usize,
    pub episodes: Vec<Episode>,
}

fn merged_stats(scans: &[GameScan], combo: bool) -> ScopeStats {
    let mut stats = ScopeStats::default();
    for s in scans {
        stats.merge(if combo { &s.combo_stats } else { &s.single_stats });
    }
    stats
}

pub fn summarize_single(scans: &[GameScan], bin_width: Span) -> Result<SingleReport> {
    let episodes: Vec<Episode> = scans.iter().flat_map(|s| s.single.iter().cloned()).collect();
    let stats = merged_stats(scans, false);
    let durations: Vec<Span> = episodes.iter().map(|e| e.credited).collect();
    Ok(SingleReport {
        games: scans.len(),
        markets: stats.units,
        spreads: spread_by_phase(scans),
        phases: phase_summaries(&episodes, &stats),
        market_types: market_type_summaries(&episodes),
        histogram: duration_histogram(&durations, bin_width)?,
        scatter: tipoff_scatter(scans, false),
        liquidity: liquidity_binding_stats(&episodes),
        mirror_checks: scans.iter().map(|s| s.mirror_checks).sum(),
        mirror_violations: scans.iter().map(|s| s.mirror_violations).sum(),
        stats,
        episodes,
    })
}

pub fn summarize_combo(scans: &[GameScan], bin_width: Span) -> Result<ComboReport> {
    let episodes: Vec<Episode> = scans.iter().flat_map(|s| s.combo.iter().cloned()).collect();
    let stats = merged_stats(scans, true);
    let durations: Vec<Span> = episodes.iter().map(|e| e.credited).collect();

    let mut pairs = Vec::new();
    for s in scans {
        for p in &s.pairs {
            let eps: Vec<&Episode> = s.combo.iter().filter(|e| e.key.unit == p.id).collect();
            pairs.push(PairRow {
                slug: s.slug.clone(),
                pair_id: p.id.clone(),
                handicap: p.handicap.to_string(),
                episodes: eps.len(),
                capped: eps.iter().map(|e| e.capped).sum(),
            });
        }
    }

    let results = scans
        .iter()
        .filter_map(|s| s.result.clone().map(|r| (s.slug.clone(), r)))
        .collect();
    let mut audited = Vec::new();
    for s in scans {
        for e in &s.combo {
            let pair = s
                .pair(&e.key.unit)
                .ok_or_else(|| Error::Value(format!("{}: unknown pair {}", s.slug, e.key.unit)))?;
            audited.push((s.slug.as_str(), pair, e.start_ts));
        }
    }
    let audit = jackpot_audit(audited, &results)?;

    Ok(ComboReport {
        games: scans.len(),
        phases: phase_summaries(&episodes, &stats),
        pairs,
        histogram: duration_histogram(&durations, bin_width)?,
        scatter: tipoff_scatter(scans, true),
        liquidity: liquidity_binding_stats(&episodes),
        audit,
        dominance_violations: scans.iter().map(|s| s.dominance_violations).sum(),
        stats,
        episodes,
    })
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

/// A rendered table. Cells are display strings; `None` is a missing value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn row(&mut self, cells: Vec<Option<String>>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }
}

fn s(v: impl ToString) -> Option<String> {
    Some(v.to_string())
}

fn secs(v: Option<Span>) -> Option<String> {
    v.map(|d| d.format_secs(3))
}

fn pct(v: Option<f64>) -> Option<String> {
    v.map(|p| format!("{p:.4}"))
}

fn bps(v: Option<f64>) -> Option<String> {
    v.map(|b| format!("{b:.2}"))
}

fn phase_label(p: Option<Phase>) -> Option<String> {
    s(p.map_or("Total", Phase::label))
}

fn histogram_table(h: &Histogram) -> Table {
    let mut t = Table::new("duration_histogram", &["bin_lo_s", "bin_hi_s", "episodes"]);
    for b in &h.bins {
        t.row(vec![s(b.lo.format_secs(3)), s(b.hi.format_secs(3)), s(b.count)]);
    }
    t
}

fn liquidity_rows(t: &mut Table, l: &LiquidityStats) {
    t.row(vec![s("liquidity_constrained_episodes"), s(l.constrained)]);
    let share = (l.episodes > 0).then_some(100.0 * l.constrained_fraction);
    t.row(vec![s("liquidity_constrained_pct"), pct(share)]);
    let mean = |v: f64| (l.episodes > 0).then(|| format!("{v:.2}"));
    t.row(vec![s("mean_executable_shares_constrained"), mean(l.mean_executable_constrained)]);
    t.row(vec![s("mean_executable_shares_all"), mean(l.mean_executable_all)]);
}

fn sub_polling_rows(t: &mut Table, h: &Histogram) {
    t.row(vec![s("sub_polling_episodes"), s(h.sub_polling)]);
    t.row(vec![s("sub_polling_pct"), pct(h.sub_polling_share.map(|x| 100.0 * x))]);
}

impl SingleReport {
    pub fn tables(&self) -> Vec<Table> {
        let mut t2 = Table::new(
            "spread_by_phase",
            &["phase", "evaluated_states", "spread_samples", "median_spread_bps", "excluded_signals", "excluded_episodes"],
        );
        for sp in &self.spreads {
            let i = sp.phase.index();
            let post = sp.phase == Phase::PostGame;
            t2.row(vec![
                s(sp.phase.label()),
                s(self.stats.evaluated[i]),
                s(sp.samples),
                sp.median_spread_bps.map(|b| b.to_string()),
                s(if post { self.stats.excluded_signals() } else { 0 }),
                s(if post { self.stats.artifact_episodes } else { 0 }),
            ]);
        }

        let mut t3 = Table::new(
            "episodes_by_phase",
            &["phase", "episodes", "pct_time_in_arb", "median_duration_s", "capped_profit", "uncapped_profit"],
        );
        for p in &self.phases {
            t3.row(vec![
                phase_label(p.phase),
                s(p.episodes),
                pct(p.pct_time_in_arb),
                secs(p.median_duration),
                s(p.capped.format_cents()),
                s(p.uncapped.format_cents()),
            ]);
        }

        let mut t4 = Table::new(
            "episodes_by_market_type",
            &["market_type", "episodes", "median_duration_s", "capped_profit", "uncapped_profit"],
        );
        for m in &self.market_types {
            t4.row(vec![
                s(m.kind.map_or("Overall", MarketKind::label)),
                s(m.episodes),
                secs(m.median_duration),
                s(m.capped.format_cents()),
                s(m.uncapped.format_cents()),
            ]);
        }

        let mut summary = Table::new("summary", &["metric", "value"]);
        summary.row(vec![s("games"), s(self.games)]);
        summary.row(vec![s("markets"), s(self.markets)]);
        summary.row(vec![s("episodes"), s(self.episodes.len())]);
        summary.row(vec![s("excluded_post_game_signals"), s(self.stats.excluded_signals())]);
        summary.row(vec![s("excluded_post_game_episodes"), s(self.stats.artifact_episodes)]);
        sub_polling_rows(&mut summary, &self.histogram);
        liquidity_rows(&mut summary, &self.liquidity);
        summary.row(vec![s("mirror_checks"), s(self.mirror_checks)]);
        summary.row(vec![s("mirror_violations"), s(self.mirror_violations)]);

        vec![summary, t2, t3, t4, histogram_table(&self.histogram)]
    }
}

impl ComboReport {
    pub fn tables(&self) -> Vec<Table> {
        let mut t6 = Table::new(
            "combo_states_by_phase",
            &["phase", "evaluated_states", "episodes", "pct_time_in_arb", "median_duration_s"],
        );
        let mut t7 = Table::new(
            "combo_profit_by_phase",
            &["phase", "episodes", "median_yield_bps", "capped_profit", "uncapped_profit"],
        );
        for p in &self.phases {
            t6.row(vec![
                phase_label(p.phase),
                s(p.evaluated_states),
                s(p.episodes),
                pct(p.pct_time_in_arb),
                secs(p.median_duration),
            ]);
            t7.row(vec![
                phase_label(p.phase),
                s(p.episodes),
                bps(p.median_yield_bps),
                s(p.capped.format_cents()),
                s(p.uncapped.format_cents()),
            ]);
        }

        let mut pairs = Table::new("pairs", &["slug", "pair", "handicap", "episodes", "capped_profit"]);
        for p in &self.pairs {
            pairs.row(vec![
                s(&p.slug),
                s(&p.pair_id),
                s(&p.handicap),
                s(p.episodes),
                s(p.capped.format_cents()),
            ]);
        }

        let mut audit = Table::new("jackpot_audit", &["slug", "pair", "start_ts", "resolution"]);
        for e in &self.audit.entries {
            let r = match e.resolution {
                crate::detect::combo::Resolution::Baseline => "baseline",
                crate::detect::combo::Resolution::Jackpot => "jackpot",
                crate::detect::combo::Resolution::Unresolved => "unresolved",
            };
            audit.row(vec![s(&e.slug), s(&e.pair_id), s(e.start_ts.to_rfc3339()), s(r)]);
        }

        let mut summary = Table::new("summary", &["metric", "value"]);
        summary.row(vec![s("games"), s(self.games)]);
        summary.row(vec![s("pairs"), s(self.stats.units)]);
        summary.row(vec![s("episodes"), s(self.episodes.len())]);
        summary.row(vec![s("excluded_post_game_signals"), s(self.stats.excluded_signals())]);
        summary.row(vec![s("excluded_post_game_episodes"), s(self.stats.artifact_episodes)]);
        summary.row(vec![s("audited_episodes"), s(self.audit.resolved)]);
        summary.row(vec![s("unresolved_episodes"), s(self.audit.unresolved)]);
        summary.row(vec![s("jackpots"), s(self.audit.jackpots)]);
        summary.row(vec![s("dominance_violations"), s(self.dominance_violations)]);
        sub_polling_rows(&mut summary, &self.histogram);
        liquidity_rows(&mut summary, &self.liquidity);

        vec![summary, t6, t7, pairs, audit, histogram_table(&self.histogram)]
    }
}

/// Either report, for the shared writer.
#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Single(SingleReport),
    Combo(ComboReport),
}

impl Report {
    pub fn name(&self) -> &'static str {
        match self {
            Report::Single(_) => "single",
            Report::Combo(_) => "combo",
        }
    }

    pub fn tables(&self) -> Vec<Table> {
        match self {
            Report::Single(r) => r.tables(),
            Report::Combo(r) => r.tables(),
        }
    }

    fn episodes(&self) -> &[Episode] {
        match self {
            Report::Single(r) => &r.episodes,
            Report::Combo(r) => &r.episodes,
        }
    }

    fn scatter(&self) -> &[ScatterPoint] {
        match self {
            Report::Single(r) => &r.scatter,
            Report::Combo(r) => &r.scatter,
        }
    }
}

/// Full-precision episode listing.
pub fn episodes_table(episodes: &[Episode]) -> Table {
    let mut t = Table::new(
        "episodes",
        &[
            "slug", "unit", "path", "market_type", "phase", "start_ts", "end_ts", "snapshots", "credited_s",
            "capped_profit", "uncapped_profit", "executable_shares", "capital_deployed", "yield_bps",
            "budget_binding", "liquidity_constrained",
        ],
    );
    for e in episodes {
        t.row(vec![
            s(&e.slug),
            s(&e.key.unit),
            s(e.key.path),
            e.kind.map(|k| k.label().to_string()),
            s(e.phase.label()),
            s(e.start_ts.to_rfc3339()),
            s(e.end_ts.to_rfc3339()),
            s(e.snapshots.len()),
            s(e.credited.format_secs(6)),
            s(e.capped),
            s(e.uncapped),
            s(e.executable),
            s(e.capital_deployed),
            s(format!("{:.6}", e.yield_bps())),
            s(e.budget_binding),
            s(e.liquidity_constrained),
        ]);
    }
    t
}

fn scatter_table(points: &[ScatterPoint]) -> Table {
    let mut t = Table::new("tipoff_scatter", &["slug", "unit", "from_tip_off_s", "duration_s"]);
    for p in points {
        t.row(vec![s(&p.slug), s(&p.unit), s(p.from_tip_off.format_secs(3)), s(p.duration.format_secs(3))]);
    }
    t
}

pub fn table_to_csv(t: &Table) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Value(format!("csv encoding of {}: {e}", t.name));
    w.write_record(&t.columns).map_err(fail)?;
    for row in &t.rows {
        w.write_record(row.iter().map(|c| c.as_deref().unwrap_or("---"))).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Value(format!("csv encoding of {}: {e}", t.name)))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct JsonReport<'a> {
    report: &'a str,
    tables: &'a [Table],
}

pub fn report_to_json(report: &Report) -> String {
    let tables = report.tables();
    let mut out = serde_json::to_string_pretty(&JsonReport {
        report: report.name(),
        tables: &tables,
    })
    .expect("report serializes");
    out.push('\n');
    out
}

fn write(path: PathBuf, body: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes the report tables plus episode and figure CSVs into `dir`.
///
/// Returns the written paths in a fixed order.
pub fn emit_report(report: &Report, dir: &FsPath, format: ReportFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let prefix = report.name();
    let mut written = Vec::new();
    match format {
        ReportFormat::Json => {
            write(dir.join(format!("{prefix}_report.json")), &report_to_json(report), &mut written)?;
        }
        ReportFormat::Csv => {
            for t in report.tables() {
                write(dir.join(format!("{prefix}_{}.csv", t.name)), &table_to_csv(&t)?, &mut written)?;
            }
        }
    }
    write(
        dir.join(format!("{prefix}_episodes.csv")),
        &table_to_csv(&episodes_table(report.episodes()))?,
        &mut written,
    )?;
    write(
        dir.join(format!("{prefix}_tipoff_scatter.csv")),
        &table_to_csv(&scatter_table(report.scatter()))?,
        &mut written,
    )?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{Path, Snapshot};
    use crate::episodes::EpisodeKey;
    use crate::config::ScanConfig;
    use crate::model::{Price, Qty, Timestamp};

    fn episode(phase: Phase, kind: MarketKind, credited_ms: i64) -> Episode {
        let snap = Snapshot {
            ts: Timestamp::from_micros(0),
            phase,
            edge: Price::from_micros(10_000),
            bottleneck: Qty::shares(200),
            capital_per_share: Price::from_micros(990_000),
        };
        let mut e = Episode::build(
            "g",
            EpisodeKey {
                unit: "m".into(),
                path: Path::Long,
            },
            Some(kind),
            vec![snap],
            &ScanConfig::default(),
            Span::from_secs(4),
        );
        e.credited = Span::from_millis(credited_ms);
        e
    }

    #[test]
    fn lower_median_convention() {
        assert_eq!(lower_median::<i32>(&[]), None);
        assert_eq!(lower_median(&[3, 1, 2, 4]), Some(2));
        assert_eq!(lower_median(&[5]), Some(5));
        assert_eq!(lower_median_f64(&[2.0, 1.0]), Some(1.0));
    }

    #[test]
    fn histogram_boundaries() {
        let d = [3, 5, 16].map(Span::from_secs);
        let h = duration_histogram(&d, Span::from_secs(4)).unwrap();
        let counts: Vec<usize> = h.bins.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![1, 1, 0, 0, 1]);
        assert_eq!(h.bins[4].lo, Span::from_secs(16));
        assert_eq!(h.sub_polling, 1);

        let empty = duration_histogram(&[], Span::from_secs(4)).unwrap();
        assert!(empty.bins.is_empty());
        assert_eq!(empty.sub_polling_share, None);
        assert!(duration_histogram(&[], Span::ZERO).is_err());
        // exactly 4.0 s counts as sub-polling and falls in the second bin
        let h = duration_histogram(&[Span::from_secs(4)], Span::from_secs(4)).unwrap();
        assert_eq!(h.sub_polling, 1);
        assert_eq!(h.bins.len(), 2);
    }

    #[test]
    fn in_game_only_fixture_has_empty_pre_game_row() {
        let eps = vec![episode(Phase::InGame, MarketKind::Spread, 3_614)];
        let stats = ScopeStats {
            exposure: [Span::from_secs(100), Span::from_secs(3000), Span::ZERO],
            ..ScopeStats::default()
        };
        let rows = phase_summaries(&eps, &stats);
        assert_eq!(rows[0].episodes, 0);
        assert_eq!(rows[0].median_duration, None);
        assert_eq!(rows[0].pct_time_in_arb, Some(0.0));
        assert_eq!(rows[1].median_duration, Some(Span::from_millis(3_614)));
        assert_eq!(rows[2].episodes, 1);
        assert_eq!(rows[2].pct_time_in_arb, None);
    }

    #[test]
    fn time_in_arb_ten_percent() {
        let eps = vec![episode(Phase::InGame, MarketKind::Moneyline, 300_000)];
        let mut stats = ScopeStats::default();
        stats.exposure[Phase::InGame.index()] = Span::from_secs(3000);
        let rows = phase_summaries(&eps, &stats);
        assert_eq!(rows[1].pct_time_in_arb, Some(10.0));
    }

    #[test]
    fn conservation_of_counts() {
        let eps = vec![
            episode(Phase::InGame, MarketKind::Moneyline, 1),
            episode(Phase::PreGame, MarketKind::Spread, 2),
            episode(Phase::InGame, MarketKind::Total, 3),
            episode(Phase::InGame, MarketKind::PlayerProp, 4),
        ];
        let rows = phase_summaries(&eps, &ScopeStats::default());
        assert_eq!(rows[0].episodes + rows[1].episodes, rows[2].episodes);
        let types = market_type_summaries(&eps);
        let overall = types.last().unwrap();
        assert_eq!(types[..types.len() - 1].iter().map(|r| r.episodes).sum::<usize>(), overall.episodes);
        assert_eq!(types[..types.len() - 1].iter().map(|r| r.capped).sum::<Money>(), overall.capped);
    }

    #[test]
    fn csv_renders_missing_as_dashes() {
        let mut t = Table::new("t", &["a", "b"]);
        t.row(vec![s("x,y"), None]);
        assert_eq!(table_to_csv(&t).unwrap(), "a,b\n\"x,y\",---\n");
    }
}
