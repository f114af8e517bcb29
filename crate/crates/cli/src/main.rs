//! `pmarb`: collect order-book logs, scan them for arbitrage, write reports.
//!
//! Exit codes: 0 ok, 1 data error, 2 configuration error, 3 network error.

mod settings;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use pmarb::analytics::{emit_report, summarize_combo, summarize_single, Report};
use pmarb::ingest::{
    discover_logs, log_path_for, read_log, sidecar_path, Collector, CollectorConfig, IntervalPolicy, LogAppender,
    WatchedEvent,
};
use pmarb::synth::{write_scenario, ScenarioSpec};
use pmarb::{scan_games, Error, GameScan};
use tracing_subscriber::EnvFilter;

use settings::{resolve_scan, FileConfig, ScanFlags};

#[derive(Debug, Parser)]
#[command(name = "pmarb", version, about = "Arbitrage episode analysis for binary prediction markets")]
struct Cli {
    /// TOML config file; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan single markets: long/short crossings, spreads, durations, profit
    ScanSingle(ScanFlags),
    /// Scan moneyline/spread pairs for the cross-market combo and audit payoffs
    ScanCombo(ScanFlags),
    /// Poll a book endpoint and append hash-deduplicated records to logs
    Collect(CollectArgs),
    /// Write a seeded synthetic scenario with its ground-truth manifest
    Synth(SynthArgs),
}

#[derive(Debug, clap::Args)]
struct CollectArgs {
    /// Base URL of the book endpoint
    #[arg(long)]
    endpoint: Option<String>,
    /// Comma-separated event slugs; each needs a sidecar in the output directory
    #[arg(long, value_delimiter = ',')]
    slugs: Vec<String>,
    /// Directory holding `<slug>.meta.json` and receiving `<slug>.jsonl`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seconds between sweeps: `4` or a uniform range `3.6-5.5`
    #[arg(long)]
    interval: Option<String>,
    /// Stop after this many sweeps (default: run until interrupted)
    #[arg(long)]
    sweeps: Option<u64>,
    /// Seed for the sweep-interval draws
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    /// JSON scenario file; without it a baseline scenario is generated
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Seed for the baseline scenario (overrides the file's seed when both are given)
    #[arg(long)]
    seed: Option<u64>,
    /// Sweeps per game for the baseline scenario
    #[arg(long, default_value_t = 1_000)]
    sweeps: usize,
    #[arg(long)]
    out: PathBuf,
}

fn load_file(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    path.map_or_else(|| Ok(FileConfig::default()), FileConfig::load)
}

fn load_scans(input: &Path, cfg: &pmarb::ScanConfig) -> anyhow::Result<Vec<GameScan>> {
    let logs = discover_logs(input)?;
    tracing::info!(games = logs.len(), dir = %input.display(), "scanning");
    let bundles = logs.iter().map(|p| read_log(p)).collect::<Result<Vec<_>, _>>()?;
    Ok(scan_games(&bundles, cfg)?)
}

fn scan(flags: &ScanFlags, file: &FileConfig, combo: bool) -> anyhow::Result<()> {
    let s = resolve_scan(flags, file)?;
    let scans = load_scans(&s.input, &s.config)?;
    let report = if combo {
        let r = summarize_combo(&scans, s.bin_width)?;
        println!(
            "{} games, {} pairs, {} combo episodes, {} jackpots of {} resolved ({} unresolved)",
            r.games,
            r.stats.units,
            r.episodes.len(),
            r.audit.jackpots,
            r.audit.resolved,
            r.audit.unresolved
        );
        Report::Combo(r)
    } else {
        let r = summarize_single(&scans, s.bin_width)?;
        println!("{} games, {} markets, {} episodes", r.games, r.markets, r.episodes.len());
        Report::Single(r)
    };
    for path in emit_report(&report, &s.out, s.format)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

async fn collect(args: &CollectArgs, file: &FileConfig) -> anyhow::Result<()> {
    let endpoint = args
        .endpoint
        .clone()
        .or_else(|| file.endpoint.clone())
        .ok_or_else(|| Error::Config("--endpoint is required".into()))?;
    let slugs = if args.slugs.is_empty() {
        file.slugs.clone().unwrap_or_default()
    } else {
        args.slugs.clone()
    };
    if slugs.is_empty() {
        return Err(Error::Config("--slugs is required".into()).into());
    }
    let dir = args
        .out
        .clone()
        .or_else(|| file.out.clone())
        .ok_or_else(|| Error::Config("--out is required".into()))?;
    let mut cfg = CollectorConfig::new(endpoint);
    cfg.seed = args.seed;
    if let Some(spec) = args.interval.as_ref().or(file.interval.as_ref()) {
        cfg.interval = IntervalPolicy::parse(spec)?;
    }

    let mut events = Vec::new();
    let mut appenders = HashMap::new();
    let mut resume = Vec::new();
    for slug in &slugs {
        let log = log_path_for(&dir, slug);
        let sidecar = sidecar_path(&log);
        if !sidecar.exists() {
            return Err(Error::MissingSidecar {
                slug: slug.clone(),
                path: sidecar,
            }
            .into());
        }
        let (_, markets, _) = pmarb::ingest::log::read_sidecar(&sidecar)?;
        if log.exists() {
            // resume: never re-persist what the log already holds
            resume.push(read_log(&log)?);
        }
        events.push(WatchedEvent::from_markets(slug.clone(), &markets));
        appenders.insert(slug.clone(), LogAppender::open(&log, slug)?);
    }
    let mut collector = Collector::new(cfg, events)?;
    for bundle in &resume {
        let mut last: HashMap<&str, &str> = HashMap::new();
        for r in &bundle.records {
            last.insert(&r.token_id, &r.book_hash);
        }
        let tail = bundle.records.last().map(|r| (bundle.slug(), r.ts));
        for (token, hash) in last {
            collector.remember(token, hash, tail);
        }
    }

    let shutdown = async {
        if tokio::signal::ctrl_c().await.is_ok() {
            tracing::info!("interrupt received, flushing logs");
        }
    };
    let result = collector
        .run(args.sweeps, shutdown, |report| {
            for r in &report.records {
                appenders.get_mut(&r.event_slug).expect("watched slug").append(r)?;
            }
            for a in appenders.values_mut() {
                a.flush()?;
            }
            tracing::info!(
                batch = report.batch,
                records = report.records.len(),
                suppressed = report.suppressed,
                failures = report.failures.len(),
                "sweep"
            );
            Ok(())
        })
        .await;
    for a in appenders.values_mut() {
        a.flush()?;
    }
    let cadence = result?;
    let fmt = |s: Option<pmarb::model::Span>| s.map_or("-".to_string(), |s| s.to_string());
    println!(
        "{} sweeps; interval min {} median {} max {}",
        cadence.sweeps,
        fmt(cadence.min_interval()),
        fmt(cadence.median_interval()),
        fmt(cadence.max_interval())
    );
    Ok(())
}

fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ScenarioSpec::from_json(&text)?
        }
        None => ScenarioSpec::baseline(args.seed.unwrap_or(0), args.sweeps),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (paths, manifest) = write_scenario(&spec, &args.out)?;
    println!(
        "{} games, {} injected episodes ({} post-game)",
        paths.len(),
        manifest.episodes.len(),
        manifest.episodes.len() - manifest.active().count()
    );
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = load_file(cli.config.as_deref())?;
    match &cli.command {
        Command::ScanSingle(flags) => scan(flags, &file, false),
        Command::ScanCombo(flags) => scan(flags, &file, true),
        Command::Synth(args) => synth(args),
        Command::Collect(args) => {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .context("starting runtime")?;
            rt.block_on(collect(args, &file))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) => e.exit_code() as u8,
        // unreadable config file and similar setup problems
        None => 2,
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("PMARB_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
