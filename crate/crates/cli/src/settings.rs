//! Optional TOML config file, merged under command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use pmarb::analytics::ReportFormat;
use pmarb::model::{Money, Price, Span};
use pmarb::{BookView, Error, ScanConfig};
use serde::Deserialize;

/// A dollar amount written as a TOML number or string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Amount {
    Text(String),
    Number(f64),
}

impl Amount {
    fn money(&self, key: &str) -> Result<Money, Error> {
        let text = match self {
            Amount::Text(s) => s.clone(),
            Amount::Number(n) => n.to_string(),
        };
        Money::parse(&text).map_err(|e| Error::Config(format!("{key}: {e}")))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub budget_usdc: Option<Amount>,
    pub liquidity_floor_usdc: Option<Amount>,
    pub floor_inclusive: Option<bool>,
    pub profit_threshold_usdc: Option<Amount>,
    pub cluster_window_ms: Option<i64>,
    pub ceiling_pre_s: Option<f64>,
    pub ceiling_in_s: Option<f64>,
    pub ceiling_post_s: Option<f64>,
    pub terminal_fallback_s: Option<f64>,
    pub book_view: Option<BookView>,
    pub format: Option<String>,
    pub bin_width_s: Option<f64>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub slugs: Option<Vec<String>>,
    pub interval: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
    }
}

/// Scan flags as given on the command line; unset fields fall back to the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ScanFlags {
    /// Directory of game logs and their sidecars
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory for reports
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-episode capital budget in USDC
    #[arg(long)]
    pub budget: Option<String>,
    /// Minimum bottleneck notional in USDC
    #[arg(long)]
    pub liquidity_floor: Option<String>,
    /// Minimum per-share edge in USDC (strictly exceeded)
    #[arg(long)]
    pub profit_threshold: Option<String>,
    #[arg(long)]
    pub cluster_window_ms: Option<i64>,
    /// Pre-game trust ceiling in seconds
    #[arg(long)]
    pub ceiling_pre: Option<f64>,
    #[arg(long)]
    pub ceiling_in: Option<f64>,
    #[arg(long)]
    pub ceiling_post: Option<f64>,
    /// `direct` merges each token with its mirrored complement; `effective`
    /// takes logged books as already merged
    #[arg(long)]
    pub book_view: Option<BookView>,
    /// json or csv
    #[arg(long)]
    pub format: Option<String>,
    /// Duration histogram bin width in seconds
    #[arg(long)]
    pub bin_width_s: Option<f64>,
}

fn secs(key: &str, s: f64) -> Result<Span, Error> {
    if !s.is_finite() || s <= 0.0 {
        return Err(Error::Config(format!("{key} must be a positive number of seconds")));
    }
    Ok(Span::from_micros((s * 1e6).round() as i64))
}

pub struct ScanSettings {
    pub input: PathBuf,
    pub out: PathBuf,
    pub config: ScanConfig,
    pub format: ReportFormat,
    pub bin_width: Span,
}

pub fn resolve_scan(flags: &ScanFlags, file: &FileConfig) -> Result<ScanSettings, Error> {
    let mut cfg = ScanConfig::default();
    let money = |flag: &Option<String>, file: &Option<Amount>, key: &str| -> Result<Option<Money>, Error> {
        match (flag, file) {
            (Some(s), _) => Money::parse(s).map(Some).map_err(|e| Error::Config(format!("--{key}: {e}"))),
            (None, Some(a)) => a.money(key).map(Some),
            (None, None) => Ok(None),
        }
    };
    if let Some(m) = money(&flags.budget, &file.budget_usdc, "budget")? {
        cfg.budget = m;
    }
    if let Some(m) = money(&flags.liquidity_floor, &file.liquidity_floor_usdc, "liquidity-floor")? {
        cfg.liquidity_floor = m;
    }
    if let Some(m) = money(&flags.profit_threshold, &file.profit_threshold_usdc, "profit-threshold")? {
        let micros = m.as_picos() / 1_000_000;
        if micros * 1_000_000 != m.as_picos() {
            return Err(Error::Config("profit threshold has more than 6 decimals".into()));
        }
        cfg.profit_threshold = Price::from_micros(micros as i64);
    }
    if let Some(b) = file.floor_inclusive {
        cfg.floor_inclusive = b;
    }
    if let Some(ms) = flags.cluster_window_ms.or(file.cluster_window_ms) {
        cfg.cluster_window = Span::from_millis(ms);
    }
    if let Some(s) = flags.ceiling_pre.or(file.ceiling_pre_s) {
        cfg.ceilings.pre_game = secs("ceiling-pre", s)?;
    }
    if let Some(s) = flags.ceiling_in.or(file.ceiling_in_s) {
        cfg.ceilings.in_game = secs("ceiling-in", s)?;
    }
    if let Some(s) = flags.ceiling_post.or(file.ceiling_post_s) {
        cfg.ceilings.post_game = secs("ceiling-post", s)?;
    }
    if let Some(s) = file.terminal_fallback_s {
        cfg.terminal_fallback = secs("terminal_fallback_s", s)?;
    }
    if let Some(v) = flags.book_view.or(file.book_view) {
        cfg.book_view = v;
    }
    cfg.validate()?;

    let format = match flags.format.as_ref().or(file.format.as_ref()) {
        Some(f) => f.parse()?,
        None => ReportFormat::Json,
    };
    let bin_width = match flags.bin_width_s.or(file.bin_width_s) {
        Some(s) => secs("bin-width-s", s)?,
        None => pmarb::analytics::DEFAULT_BIN_WIDTH,
    };
    let input = flags
        .input
        .clone()
        .or_else(|| file.input.clone())
        .ok_or_else(|| Error::Config("--input is required".into()))?;
    let out = flags
        .out
        .clone()
        .or_else(|| file.out.clone())
        .ok_or_else(|| Error::Config("--out is required".into()))?;
    Ok(ScanSettings {
        input,
        out,
        config: cfg,
        format,
        bin_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_parameters() {
        let flags = ScanFlags {
            input: Some("in".into()),
            out: Some("out".into()),
            ..ScanFlags::default()
        };
        let s = resolve_scan(&flags, &FileConfig::default()).unwrap();
        assert_eq!(s.config, ScanConfig::default());
        assert_eq!(s.config.budget, Money::usdc(100));
        assert_eq!(s.config.liquidity_floor, Money::usdc(10));
        assert_eq!(s.config.cluster_window, Span::from_millis(500));
        assert_eq!(s.config.ceilings.pre_game, Span::from_secs(1800));
        assert_eq!(s.config.ceilings.in_game, Span::from_secs(300));
        assert_eq!(s.config.ceilings.post_game, Span::from_secs(1800));
        assert_eq!(s.format, ReportFormat::Json);
    }

    #[test]
    fn flags_override_file() {
        let file: FileConfig = toml::from_str(
            r#"
            budget_usdc = 50
            liquidity_floor_usdc = "2.5"
            ceiling_in_s = 120
            input = "from-file"
            out = "o"
            book_view = "effective"
            "#,
        )
        .unwrap();
        let flags = ScanFlags {
            budget: Some("75".into()),
            ..ScanFlags::default()
        };
        let s = resolve_scan(&flags, &file).unwrap();
        assert_eq!(s.config.budget, Money::usdc(75));
        assert_eq!(s.config.liquidity_floor, Money::parse("2.5").unwrap());
        assert_eq!(s.config.ceilings.in_game, Span::from_secs(120));
        assert_eq!(s.config.book_view, BookView::Effective);
        assert_eq!(s.input, PathBuf::from("from-file"));
    }

    #[test]
    fn rejects_bad_values() {
        let base = ScanFlags {
            input: Some("i".into()),
            out: Some("o".into()),
            ..ScanFlags::default()
        };
        let bad = [
            ScanFlags { budget: Some("0".into()), ..base.clone() },
            ScanFlags { ceiling_in: Some(-1.0), ..base.clone() },
            ScanFlags { cluster_window_ms: Some(0), ..base.clone() },
            ScanFlags { format: Some("xml".into()), ..base.clone() },
        ];
        for flags in bad {
            assert!(matches!(resolve_scan(&flags, &FileConfig::default()), Err(Error::Config(_))), "{flags:?}");
        }
        assert!(toml::from_str::<FileConfig>("budget = 5").is_err());
    }
}
