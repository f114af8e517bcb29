//! Polling collector for a `GET /book?token_id=...` endpoint.
//!
//! Each sweep requests every watched token, one event slug at a time, and
//! keeps only responses whose book hash differs from the last persisted hash
//! for that token. All records of a sweep share one batch id and one client
//! batch timestamp.

use std::collections::HashMap;
use std::future::Future;
use std::time::Duration;

use futures::stream::{self, StreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use tokio::time::Instant;

use crate::error::{Error, Result};
use crate::ingest::log::SnapshotRecord;
use crate::model::{MarketDescriptor, Price, Qty, Quote, Span, Timestamp};

/// Start-to-start spacing between sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntervalPolicy {
    Fixed(Duration),
    Uniform { min: Duration, max: Duration },
}

impl IntervalPolicy {
    /// Parses `"4.0"` or `"3.6-5.5"` (seconds).
    pub fn parse(s: &str) -> Result<Self> {
        let secs = |v: &str| -> Result<Duration> {
            let f: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad interval `{s}`")))?;
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::Config(format!("interval `{s}` must be positive")));
            }
            Ok(Duration::from_secs_f64(f))
        };
        match s.split_once('-') {
            Some((lo, hi)) => {
                let (min, max) = (secs(lo)?, secs(hi)?);
                if min > max {
                    return Err(Error::Config(format!("interval `{s}` has min > max")));
                }
                Ok(IntervalPolicy::Uniform { min, max })
            }
            None => Ok(IntervalPolicy::Fixed(secs(s)?)),
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> Duration {
        match *self {
            IntervalPolicy::Fixed(d) => d,
            IntervalPolicy::Uniform { min, max } if min == max => min,
            IntervalPolicy::Uniform { min, max } => rng.gen_range(min..=max),
        }
    }

    pub fn bounds(&self) -> (Duration, Duration) {
        match *self {
            IntervalPolicy::Fixed(d) => (d, d),
            IntervalPolicy::Uniform { min, max } => (min, max),
        }
    }
}

impl Default for IntervalPolicy {
    fn default() -> Self {
        IntervalPolicy::Uniform {
            min: Duration::from_millis(3600),
            max: Duration::from_millis(5500),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CollectorConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    pub interval: IntervalPolicy,
    pub request_timeout: Duration,
    /// Extra attempts after a transport failure.
    pub max_retries: u32,
    pub backoff_base: Duration,
    /// Concurrent requests within one event slug.
    pub concurrency: usize,
    pub seed: u64,
}

impl CollectorConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        CollectorConfig {
            endpoint: endpoint.into(),
            interval: IntervalPolicy::default(),
            request_timeout: Duration::from_secs(2),
            max_retries: 3,
            backoff_base: Duration::from_millis(200),
            concurrency: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WatchedToken {
    pub market_id: String,
    pub token_id: String,
}

/// Tokens of one event slug, requested together in every sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WatchedEvent {
    pub slug: String,
    pub tokens: Vec<WatchedToken>,
}

impl WatchedEvent {
    pub fn from_markets(slug: impl Into<String>, markets: &[MarketDescriptor]) -> Self {
        WatchedEvent {
            slug: slug.into(),
            tokens: markets
                .iter()
                .flat_map(|m| {
                    m.tokens.iter().map(|t| WatchedToken {
                        market_id: m.market_id.clone(),
                        token_id: t.clone(),
                    })
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailureKind {
    /// Connection, timeout or body errors that survived every retry.
    Transport(String),
    Status(u16),
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchFailure {
    pub slug: String,
    pub token_id: String,
    pub kind: FailureKind,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub batch: u64,
    pub started: Timestamp,
    pub wall: Span,
    /// New records in emission order: by slug, then `(ts, token)`.
    pub records: Vec<SnapshotRecord>,
    pub responses: usize,
    /// Responses whose hash equalled the last persisted hash.
    pub suppressed: usize,
    pub failures: Vec<FetchFailure>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CadenceStats {
    pub sweeps: usize,
    pub intervals: Vec<Span>,
    pub wall_times: Vec<Span>,
}

impl CadenceStats {
    pub fn min_interval(&self) -> Option<Span> {
        self.intervals.iter().copied().min()
    }

    pub fn max_interval(&self) -> Option<Span> {
        self.intervals.iter().copied().max()
    }

    pub fn median_interval(&self) -> Option<Span> {
        crate::analytics::lower_median(&self.intervals)
    }
}

#[derive(Debug, Deserialize)]
struct WireLevel {
    price: Value,
    size: Value,
}

#[derive(Debug, Deserialize)]
struct BookResponse {
    #[serde(default)]
    hash: Option<String>,
    #[serde(default)]
    timestamp: Option<Value>,
    #[serde(default)]
    bids: Vec<WireLevel>,
    #[serde(default)]
    asks: Vec<WireLevel>,
}

fn value_str(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_server_ts(v: &Value) -> Option<Timestamp> {
    let s = value_str(v)?;
    if let Ok(ms) = s.parse::<i64>() {
        return Some(Timestamp::from_micros(ms * 1_000));
    }
    Timestamp::parse(&s).ok()
}

/// Best level of one side; sizes at the best price are summed.
fn best_level(levels: &[WireLevel], want_max: bool) -> std::result::Result<Option<Quote>, String> {
    let mut best: Option<Quote> = None;
    for l in levels {
        let p = value_str(&l.price).ok_or("non-scalar price")?;
        let s = value_str(&l.size).ok_or("non-scalar size")?;
        let price = Price::parse_quote(&p).map_err(|e| e.to_string())?;
        let size = Qty::parse(&s).map_err(|e| e.to_string())?;
        best = match best {
            None => Some(Quote::new(price, size)),
            Some(b) if b.price == price => Some(Quote::new(price, b.size + size)),
            Some(b) if (price > b.price) == want_max => Some(Quote::new(price, size)),
            keep => keep,
        };
    }
    Ok(best)
}

/// Stable digest of a token's Level-1 content, used when the venue sends no hash.
pub fn content_hash(token_id: &str, bid: Option<Quote>, ask: Option<Quote>) -> String {
    let side = |q: Option<Quote>| match q {
        Some(q) => format!("{}@{}", q.price, q.size),
        None => "-".to_string(),
    };
    let mut h = Sha256::new();
    h.update(format!("{token_id}|{}|{}", side(bid), side(ask)).as_bytes());
    hex::encode(&h.finalize()[..16])
}

struct Fetched {
    ts: Option<Timestamp>,
    bid: Option<Quote>,
    ask: Option<Quote>,
    hash: String,
}

pub struct Collector {
    http: reqwest::Client,
    cfg: CollectorConfig,
    events: Vec<WatchedEvent>,
    last_hash: HashMap<String, String>,
    last_ts: HashMap<String, Timestamp>,
    next_batch: u64,
    rng: ChaCha8Rng,
    cadence: CadenceStats,
    last_start: Option<Timestamp>,
}

impl Collector {
    pub fn new(cfg: CollectorConfig, events: Vec<WatchedEvent>) -> Result<Self> {
        if events.is_empty() || events.iter().all(|e| e.tokens.is_empty()) {
            return Err(Error::Config("collector needs at least one slug with tokens".into()));
        }
        if cfg.concurrency == 0 {
            return Err(Error::Config("concurrency must be at least 1".into()));
        }
        let http = reqwest::Client::builder()
            .timeout(cfg.request_timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Collector {
            http,
            cfg,
            events,
            last_hash: HashMap::new(),
            last_ts: HashMap::new(),
            next_batch: 0,
            rng,
            cadence: CadenceStats::default(),
            last_start: None,
        })
    }

    /// Seeds the suppression state, e.g. from the tail of an existing log.
    pub fn remember(&mut self, token_id: &str, hash: &str, ts: Option<(&str, Timestamp)>) {
        self.last_hash.insert(token_id.to_string(), hash.to_string());
        if let Some((slug, ts)) = ts {
            let e = self.last_ts.entry(slug.to_string()).or_insert(ts);
            *e = (*e).max(ts);
        }
    }

    pub fn cadence(&self) -> &CadenceStats {
        &self.cadence
    }

    async fn fetch(&self, token_id: &str) -> std::result::Result<Fetched, FailureKind> {
        let url = format!("{}/book", self.cfg.endpoint.trim_end_matches('/'));
        let mut attempt = 0;
        let resp = loop {
            let res = self
                .http
                .get(&url)
                .query(&[("token_id", token_id)])
                .send()
                .await;
            let err = match res {
                Ok(r) if r.status().is_success() => match r.text().await {
                    Ok(body) => break body,
                    Err(e) => e.to_string(),
                },
                Ok(r) => {
                    let code = r.status().as_u16();
                    tracing::warn!(token_id, status = code, "book request rejected");
                    return Err(FailureKind::Status(code));
                }
                Err(e) => e.to_string(),
            };
            if attempt >= self.cfg.max_retries {
                tracing::warn!(token_id, attempts = attempt + 1, error = %err, "book request failed");
                return Err(FailureKind::Transport(err));
            }
            tokio::time::sleep(self.cfg.backoff_base * 2u32.pow(attempt)).await;
            attempt += 1;
        };
        let book: BookResponse =
            serde_json::from_str(&resp).map_err(|e| FailureKind::Malformed(e.to_string()))?;
        let bid = best_level(&book.bids, true).map_err(FailureKind::Malformed)?;
        let ask = best_level(&book.asks, false).map_err(FailureKind::Malformed)?;
        let hash = book
            .hash
            .unwrap_or_else(|| content_hash(token_id, bid, ask));
        Ok(Fetched {
            ts: book.timestamp.as_ref().and_then(parse_server_ts),
            bid,
            ask,
            hash,
        })
    }

    /// Runs one sweep over every watched slug.
    pub async fn sweep(&mut self) -> Result<SweepReport> {
        let batch = self.next_batch;
        self.next_batch += 1;
        let started = Timestamp::now();
        let clock = Instant::now();
        if let Some(prev) = self.last_start {
            self.cadence.intervals.push(started.since(prev));
        }
        self.last_start = Some(started);

        let mut report = SweepReport {
            batch,
            started,
            wall: Span::ZERO,
            records: Vec::new(),
            responses: 0,
            suppressed: 0,
            failures: Vec::new(),
        };
        let mut transport_failures = 0usize;

        let events = self.events.clone();
        for event in &events {
            let this = &*self;
            let results: Vec<_> = stream::iter(event.tokens.iter())
                .map(|t| async move { (t, this.fetch(&t.token_id).await) })
                .buffered(this.cfg.concurrency)
                .collect()
                .await;

            let mut slug_records = Vec::new();
            for (t, res) in results {
                match res {
                    Ok(f) => {
                        report.responses += 1;
                        if self.last_hash.get(&t.token_id) == Some(&f.hash) {
                            report.suppressed += 1;
                            continue;
                        }
                        slug_records.push(SnapshotRecord {
                            event_slug: event.slug.clone(),
                            market_id: t.market_id.clone(),
                            token_id: t.token_id.clone(),
                            ts: f.ts.unwrap_or(started),
                            bid: f.bid,
                            ask: f.ask,
                            book_hash: f.hash,
                            recv_ts: Some(started),
                            batch: Some(batch),
                        });
                    }
                    Err(kind) => {
                        if matches!(kind, FailureKind::Transport(_)) {
                            transport_failures += 1;
                        }
                        report.failures.push(FetchFailure {
                            slug: event.slug.clone(),
                            token_id: t.token_id.clone(),
                            kind,
                        });
                    }
                }
            }
            slug_records.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| a.token_id.cmp(&b.token_id)));
            // server clocks can lag the previous sweep; logs must stay chronological
            let floor = self.last_ts.get(&event.slug).copied();
            for r in &mut slug_records {
                if let Some(f) = floor {
                    r.ts = r.ts.max(f);
                }
                self.last_hash.insert(r.token_id.clone(), r.book_hash.clone());
            }
            if let Some(last) = slug_records.last() {
                self.last_ts.insert(event.slug.clone(), last.ts);
            }
            report.records.extend(slug_records);
        }

        report.wall = Span::from_micros(clock.elapsed().as_micros() as i64);
        self.cadence.sweeps += 1;
        self.cadence.wall_times.push(report.wall);

        if report.responses == 0 && transport_failures > 0 {
            return Err(Error::Network(format!(
                "endpoint {} unreachable: all {} requests in sweep {batch} failed",
                self.cfg.endpoint, transport_failures
            )));
        }
        Ok(report)
    }

    /// Sweeps until `max_sweeps` is reached or `shutdown` resolves, handing
    /// each sweep to `sink` before sleeping.
    pub async fn run<S, F>(&mut self, max_sweeps: Option<u64>, shutdown: S, mut sink: F) -> Result<CadenceStats>
    where
        S: Future<Output = ()>,
        F: FnMut(&SweepReport) -> Result<()>,
    {
        tokio::pin!(shutdown);
        let mut done = 0u64;
        loop {
            if max_sweeps.is_some_and(|m| done >= m) {
                break;
            }
            let start = Instant::now();
            let report = tokio::select! {
                r = self.sweep() => r?,
                _ = &mut shutdown => break,
            };
            sink(&report)?;
            done += 1;
            if max_sweeps.is_some_and(|m| done >= m) {
                break;
            }
            let wait = self.cfg.interval.draw(&mut self.rng);
            tokio::select! {
                _ = tokio::time::sleep_until(start + wait) => {}
                _ = &mut shutdown => break,
            }
        }
        Ok(self.cadence.clone())
    }
}
