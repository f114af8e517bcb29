//! In-process stand-in for a venue's `GET /book?token_id=...` endpoint.
//!
//! Each token is scripted with a [`Behavior`]; request counts are kept so
//! tests can assert what the collector actually asked for.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::task::JoinHandle;

/// A book as served by the endpoint; levels are `(price, size)` strings.
#[derive(Debug, Clone, Default)]
pub struct MockBook {
    pub bids: Vec<(String, String)>,
    pub asks: Vec<(String, String)>,
    pub hash: Option<String>,
    pub timestamp_ms: Option<i64>,
}

impl MockBook {
    pub fn top(bid: (&str, &str), ask: (&str, &str), hash: &str) -> Self {
        MockBook {
            bids: vec![(bid.0.into(), bid.1.into())],
            asks: vec![(ask.0.into(), ask.1.into())],
            hash: Some(hash.into()),
            timestamp_ms: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Behavior {
    Static(MockBook),
    /// Serves the books in rotation, one per request.
    Cycle(Vec<MockBook>),
    /// Sleeps before answering, to trip client timeouts.
    Delay(Duration, MockBook),
    Status(u16),
}

#[derive(Default)]
struct Inner {
    scripts: HashMap<String, Behavior>,
    requests: HashMap<String, usize>,
}

type Shared = Arc<Mutex<Inner>>;

#[derive(Deserialize)]
struct BookQuery {
    token_id: String,
}

async fn book(State(state): State<Shared>, Query(q): Query<BookQuery>) -> Response {
    let (behavior, n) = {
        let mut inner = state.lock().unwrap();
        let n = {
            let c = inner.requests.entry(q.token_id.clone()).or_insert(0);
            *c += 1;
            *c - 1
        };
        (inner.scripts.get(&q.token_id).cloned(), n)
    };
    let book = match behavior {
        None => return (StatusCode::NOT_FOUND, "unknown token").into_response(),
        Some(Behavior::Status(code)) => {
            let code = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            return (code, "scripted failure").into_response();
        }
        Some(Behavior::Static(b)) => b,
        Some(Behavior::Cycle(books)) => books[n % books.len()].clone(),
        Some(Behavior::Delay(d, b)) => {
            tokio::time::sleep(d).await;
            b
        }
    };
    let levels = |v: &[(String, String)]| {
        v.iter()
            .map(|(p, s)| json!({ "price": p, "size": s }))
            .collect::<Vec<_>>()
    };
    let mut body = json!({
        "market": "mock",
        "asset_id": q.token_id,
        "bids": levels(&book.bids),
        "asks": levels(&book.asks),
        "tick_size": "0.01",
        "min_order_size": "5",
    });
    if let Some(h) = book.hash {
        body["hash"] = json!(h);
    }
    if let Some(ts) = book.timestamp_ms {
        body["timestamp"] = json!(ts.to_string());
    }
    Json(body).into_response()
}

pub struct MockVenue {
    addr: SocketAddr,
    state: Shared,
    task: JoinHandle<()>,
}

impl MockVenue {
    /// Binds an ephemeral local port and serves on the current runtime.
    pub async fn start() -> std::io::Result<Self> {
        let state: Shared = Arc::default();
        let app = Router::new()
            .route("/book", get(book))
            .with_state(state.clone());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(MockVenue { addr, state, task })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn set(&self, token_id: &str, behavior: Behavior) {
        self.state
            .lock()
            .unwrap()
            .scripts
            .insert(token_id.to_string(), behavior);
    }

    pub fn requests(&self, token_id: &str) -> usize {
        self.state
            .lock()
            .unwrap()
            .requests
            .get(token_id)
            .copied()
            .unwrap_or(0)
    }
}

impl Drop for MockVenue {
    fn drop(&mut self) {
        self.task.abort();
    }
}
