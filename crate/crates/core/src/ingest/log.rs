//! Snapshot log (JSON Lines) and metadata sidecar.
//!
//! A game is stored as two files sharing a stem:
//!
//! * `<slug>.jsonl` - a header line followed by one record per book change,
//! * `<slug>.meta.json` - schedule, market list and (optionally) the result.
//!
//! Prices and sizes are decimal strings so that the fixed-point values survive
//! any JSON implementation unchanged.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    FinalResult, GameSchedule, Handicap, MarketDescriptor, MarketKind, Price, Qty, Quote,
    Timestamp, BookTop,
};

pub const LOG_SCHEMA: &str = "pmarb.snapshots/1";
pub const LOG_EXT: &str = "jsonl";
pub const SIDECAR_EXT: &str = "meta.json";

/// One persisted book change for one token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotRecord {
    pub event_slug: String,
    pub market_id: String,
    pub token_id: String,
    /// Server timestamp when the venue supplied one, else the client batch time.
    pub ts: Timestamp,
    pub bid: Option<Quote>,
    pub ask: Option<Quote>,
    pub book_hash: String,
    /// Client-side batch timestamp, when recorded by the collector.
    pub recv_ts: Option<Timestamp>,
    pub batch: Option<u64>,
}

impl SnapshotRecord {
    pub fn book_top(&self) -> BookTop {
        BookTop {
            token_id: self.token_id.clone(),
            ts: self.ts,
            best_bid: self.bid,
            best_ask: self.ask,
            book_hash: self.book_hash.clone(),
        }
    }
}

/// Everything known about one game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameBundle {
    pub schedule: GameSchedule,
    pub markets: Vec<MarketDescriptor>,
    pub result: Option<FinalResult>,
    /// Sorted by `ts`, ties ordered by token id.
    pub records: Vec<SnapshotRecord>,
}

impl GameBundle {
    pub fn slug(&self) -> &str {
        &self.schedule.event_slug
    }

    pub fn market(&self, id: &str) -> Option<&MarketDescriptor> {
        self.markets.iter().find(|m| m.market_id == id)
    }

    /// Restores the canonical record order.
    pub fn sort_records(&mut self) {
        self.records
            .sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.token_id.cmp(&b.token_id)));
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadStats {
    pub records: usize,
    /// Records dropped because their hash repeated the token's previous record.
    pub duplicates_dropped: usize,
}

// ---------------------------------------------------------------------------
// Wire structs
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct HeaderLine {
    schema: String,
    slug: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    slug: String,
    market: String,
    token: String,
    ts: String,
    bid: Option<String>,
    bid_sz: Option<String>,
    ask: Option<String>,
    ask_sz: Option<String>,
    hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    recv_ts: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    batch: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarMarket {
    id: String,
    kind: MarketKind,
    tokens: [String; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    handicap: Option<Handicap>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarResult {
    delta: i32,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    slug: String,
    tip_off: Timestamp,
    physical_end: Timestamp,
    markets: Vec<SidecarMarket>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    result: Option<SidecarResult>,
}

fn side_to_wire(q: Option<Quote>) -> (Option<String>, Option<String>) {
    match q {
        Some(q) => (Some(q.price.to_string()), Some(q.size.to_string())),
        None => (None, None),
    }
}

fn record_to_line(r: &SnapshotRecord) -> RecordLine {
    let (bid, bid_sz) = side_to_wire(r.bid);
    let (ask, ask_sz) = side_to_wire(r.ask);
    RecordLine {
        slug: r.event_slug.clone(),
        market: r.market_id.clone(),
        token: r.token_id.clone(),
        ts: r.ts.to_rfc3339(),
        bid,
        bid_sz,
        ask,
        ask_sz,
        hash: r.book_hash.clone(),
        recv_ts: r.recv_ts.map(|t| t.to_rfc3339()),
        batch: r.batch,
    }
}

fn side_from_wire(
    price: Option<String>,
    size: Option<String>,
    name: &str,
) -> std::result::Result<Option<Quote>, String> {
    match (price, size) {
        (None, None) => Ok(None),
        (Some(p), Some(s)) => {
            let price = Price::parse_quote(&p).map_err(|e| format!("{name}: {e}"))?;
            let size = Qty::parse(&s).map_err(|e| format!("{name}_sz: {e}"))?;
            Ok(Some(Quote::new(price, size)))
        }
        _ => Err(format!("{name} and {name}_sz must both be present or both null")),
    }
}

fn line_to_record(l: RecordLine) -> std::result::Result<SnapshotRecord, String> {
    let ts = Timestamp::parse(&l.ts).map_err(|e| format!("ts: {e}"))?;
    let recv_ts = l
        .recv_ts
        .as_deref()
        .map(Timestamp::parse)
        .transpose()
        .map_err(|e| format!("recv_ts: {e}"))?;
    Ok(SnapshotRecord {
        bid: side_from_wire(l.bid, l.bid_sz, "bid")?,
        ask: side_from_wire(l.ask, l.ask_sz, "ask")?,
        event_slug: l.slug,
        market_id: l.market,
        token_id: l.token,
        ts,
        book_hash: l.hash,
        recv_ts,
        batch: l.batch,
    })
}

/// Serializes one record as a log line (no trailing newline).
pub fn encode_record(r: &SnapshotRecord) -> String {
    serde_json::to_string(&record_to_line(r)).expect("record serializes")
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

pub fn sidecar_path(log_path: &Path) -> PathBuf {
    log_path.with_extension(SIDECAR_EXT)
}

pub fn log_path_for(dir: &Path, slug: &str) -> PathBuf {
    dir.join(format!("{slug}.{LOG_EXT}"))
}

/// All `*.jsonl` logs in `dir`, sorted by file name.
pub fn discover_logs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == LOG_EXT) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

// ---------------------------------------------------------------------------
// Sidecar
// ---------------------------------------------------------------------------

pub fn read_sidecar(path: &Path) -> Result<(GameSchedule, Vec<MarketDescriptor>, Option<FinalResult>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sc: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let bad = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg,
    };
    let schedule =
        GameSchedule::new(sc.slug.clone(), sc.tip_off, sc.physical_end).map_err(|e| bad(e.to_string()))?;
    let mut markets = Vec::with_capacity(sc.markets.len());
    let mut seen_tokens = HashMap::new();
    for m in sc.markets {
        if m.tokens[0] == m.tokens[1] {
            return Err(bad(format!("market {} lists the same token twice", m.id)));
        }
        for t in &m.tokens {
            if let Some(prev) = seen_tokens.insert(t.clone(), m.id.clone()) {
                return Err(bad(format!("token {t} appears in markets {prev} and {}", m.id)));
            }
        }
        markets.push(MarketDescriptor {
            market_id: m.id,
            event_slug: sc.slug.clone(),
            kind: m.kind,
            tokens: m.tokens,
            handicap: m.handicap,
        });
    }
    let result = sc
        .result
        .map(|r| FinalResult::new(sc.slug.clone(), r.delta))
        .transpose()?;
    Ok((schedule, markets, result))
}

pub fn write_sidecar(path: &Path, bundle: &GameBundle) -> Result<()> {
    let sc = Sidecar {
        slug: bundle.schedule.event_slug.clone(),
        tip_off: bundle.schedule.tip_off,
        physical_end: bundle.schedule.physical_end,
        markets: bundle
            .markets
            .iter()
            .map(|m| SidecarMarket {
                id: m.market_id.clone(),
                kind: m.kind,
                tokens: m.tokens.clone(),
                handicap: m.handicap,
            })
            .collect(),
        result: bundle.result.as_ref().map(|r| SidecarResult { delta: r.delta }),
    };
    let mut text = serde_json::to_string_pretty(&sc).expect("sidecar serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Log
// ---------------------------------------------------------------------------

pub fn read_log(path: &Path) -> Result<GameBundle> {
    read_log_with_stats(path).map(|(b, _)| b)
}

/// Reads and validates a log and its sidecar.
///
/// Records repeating their token's previous hash are dropped and counted.
pub fn read_log_with_stats(path: &Path) -> Result<(GameBundle, ReadStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let header: HeaderLine = loop {
        match lines.next() {
            None => return Err(parse_err(1, "missing header line".into())),
            Some((i, line)) => {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line)
                    .map_err(|e| parse_err(i + 1, format!("bad header: {e}")))?;
            }
        }
    };
    if header.schema != LOG_SCHEMA {
        return Err(parse_err(1, format!("unsupported schema `{}`", header.schema)));
    }

    let sc_path = sidecar_path(path);
    if !sc_path.exists() {
        return Err(Error::MissingSidecar {
            slug: header.slug,
            path: sc_path,
        });
    }
    let (schedule, markets, result) = read_sidecar(&sc_path)?;
    if schedule.event_slug != header.slug {
        return Err(parse_err(
            1,
            format!("header slug `{}` does not match sidecar slug `{}`", header.slug, schedule.event_slug),
        ));
    }

    let token_market: HashMap<&str, &str> = markets
        .iter()
        .flat_map(|m| m.tokens.iter().map(move |t| (t.as_str(), m.market_id.as_str())))
        .collect();

    let mut records = Vec::new();
    let mut last_hash: HashMap<String, String> = HashMap::new();
    let mut last_ts: Option<Timestamp> = None;
    let mut stats = ReadStats::default();

    for (i, line) in lines {
        let n = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: RecordLine = serde_json::from_str(&line).map_err(|e| parse_err(n, e.to_string()))?;
        let rec = line_to_record(wire).map_err(|m| parse_err(n, m))?;
        let reference = |msg: String| Error::Reference {
            path: path.to_path_buf(),
            line: n,
            msg,
        };
        if rec.event_slug != schedule.event_slug {
            return Err(reference(format!("slug `{}`", rec.event_slug)));
        }
        match token_market.get(rec.token_id.as_str()) {
            None => return Err(reference(format!("token_id `{}`", rec.token_id))),
            Some(m) if *m != rec.market_id => {
                return Err(reference(format!(
                    "token `{}` belongs to market `{m}`, not `{}`",
                    rec.token_id, rec.market_id
                )))
            }
            Some(_) => {}
        }
        if let Some(prev) = last_ts {
            if rec.ts < prev {
                return Err(Error::Order {
                    path: path.to_path_buf(),
                    line: n,
                    msg: format!("{} precedes {}", rec.ts, prev),
                });
            }
        }
        last_ts = Some(rec.ts);
        if last_hash.get(&rec.token_id) == Some(&rec.book_hash) {
            stats.duplicates_dropped += 1;
            continue;
        }
        last_hash.insert(rec.token_id.clone(), rec.book_hash.clone());
        records.push(rec);
    }
    if stats.duplicates_dropped > 0 {
        tracing::warn!(
            path = %path.display(),
            dropped = stats.duplicates_dropped,
            "dropped records with unchanged book hash"
        );
    }
    stats.records = records.len();

    let mut bundle = GameBundle {
        schedule,
        markets,
        result,
        records,
    };
    bundle.sort_records();
    Ok((bundle, stats))
}

fn header_line(slug: &str) -> String {
    serde_json::to_string(&HeaderLine {
        schema: LOG_SCHEMA.into(),
        slug: slug.into(),
    })
    .expect("header serializes")
}

/// Writes the log and its sidecar in canonical form.
pub fn write_log(bundle: &GameBundle, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header_line(bundle.slug())).map_err(io)?;
    for r in &bundle.records {
        writeln!(w, "{}", encode_record(r)).map_err(io)?;
    }
    w.flush().map_err(io)?;
    write_sidecar(&sidecar_path(path), bundle)
}

/// Appends records to a log, writing the header first if the file is new.
pub struct LogAppender {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl LogAppender {
    pub fn open(path: &Path, slug: &str) -> Result<Self> {
        let is_new = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        if is_new {
            writeln!(writer, "{}", header_line(slug)).map_err(|e| Error::io(path, e))?;
        }
        Ok(LogAppender {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn append(&mut self, r: &SnapshotRecord) -> Result<()> {
        writeln!(self.writer, "{}", encode_record(r)).map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}
