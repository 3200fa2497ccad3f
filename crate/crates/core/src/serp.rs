//! Search-engine result acquisition: top-20 organic entries per
//! (engine, question) pair, from live adapters or recorded fixtures, cached
//! in the run store for deterministic replay.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{NetworkPolicy, PolicyError};
use crate::store::{key_hash_of, RunKind, RunStore, StoreError};
use crate::topics::{normalize_question, Topic};

/// The four evaluated web search engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Google,
    Bing,
    Yahoo,
    DuckDuckGo,
}

impl Engine {
    pub const ALL: [Engine; 4] = [Engine::Google, Engine::Bing, Engine::Yahoo, Engine::DuckDuckGo];

    pub fn as_str(&self) -> &'static str {
        match self {
            Engine::Google => "google",
            Engine::Bing => "bing",
            Engine::Yahoo => "yahoo",
            Engine::DuckDuckGo => "duckduckgo",
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

impl std::str::FromStr for Engine {
    type Err = SerpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "google" => Ok(Engine::Google),
            "bing" => Ok(Engine::Bing),
            "yahoo" => Ok(Engine::Yahoo),
            "duckduckgo" => Ok(Engine::DuckDuckGo),
            other => Err(SerpError::UnknownEngine(other.to_string())),
        }
    }
}

/// One ranked organic search result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerpEntry {
    /// 1-based rank position.
    pub rank: u32,
    pub url: String,
    pub title: String,
    #[serde(default)]
    pub snippet: Option<String>,
}

/// Ordered result list for one (engine, topic) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Serp {
    pub engine: Engine,
    pub topic_id: u32,
    pub entries: Vec<SerpEntry>,
    pub retrieved_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum SerpError {
    #[error("serp provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("rate limited by provider, retry after {retry_after_secs} s")]
    RateLimited { retry_after_secs: u64 },
    #[error("engine {engine} returned zero organic results for `{question}`")]
    EmptySerp { engine: Engine, question: String },
    #[error("invalid result url `{0}`")]
    InvalidUrl(String),
    #[error("search depth {0} outside [1, 20]")]
    InvalidDepth(u32),
    #[error("unknown engine `{0}`")]
    UnknownEngine(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Canonical form of a result URL used for deduplication and page cache
/// keys: lowercase host, fragment stripped, trailing slash stripped.
pub fn canonicalize_url(raw: &str) -> Result<String, SerpError> {
    let mut parsed = url::Url::parse(raw).map_err(|_| SerpError::InvalidUrl(raw.to_string()))?;
    match parsed.scheme() {
        "http" | "https" => {}
        _ => return Err(SerpError::InvalidUrl(raw.to_string())),
    }
    if parsed.host_str().is_none() {
        return Err(SerpError::InvalidUrl(raw.to_string()));
    }
    parsed.set_fragment(None);
    let mut canonical = parsed.to_string();
    if canonical.ends_with('/') {
        canonical.pop();
    }
    Ok(canonical)
}

/// Drops entries whose canonical URL already appeared at a better rank and
/// re-ranks the survivors contiguously from 1. Unparsable URLs are dropped
/// outright (a live scraper can emit junk hrefs).
pub fn dedup_entries(entries: Vec<SerpEntry>) -> Vec<SerpEntry> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for entry in entries {
        let Ok(canonical) = canonicalize_url(&entry.url) else {
            continue;
        };
        if seen.insert(canonical) {
            out.push(entry);
        }
    }
    for (i, entry) in out.iter_mut().enumerate() {
        entry.rank = (i + 1) as u32;
    }
    out
}

/// Source of raw SERP entries for one engine.
pub trait SerpProvider {
    /// Returns entries in engine order; dedup and depth truncation happen in
    /// [`search`].
    fn fetch(&self, engine: Engine, question: &str, depth: u32)
        -> Result<Vec<SerpEntry>, SerpError>;
    fn name(&self) -> &str;
}

/// Offline provider reading recorded SERPs from a fixture directory laid out
/// as `<dir>/<engine>/<topic_id>.json`, each file containing a [`Serp`].
///
/// Fixture files are keyed by topic id while searches are keyed by question,
/// so the provider carries the topic list to translate between the two.
pub struct FixtureSerpProvider {
    dir: PathBuf,
    question_to_topic: HashMap<String, u32>,
}

impl FixtureSerpProvider {
    pub fn new(dir: &std::path::Path, topics: &[Topic]) -> Self {
        let question_to_topic = topics
            .iter()
            .map(|t| (normalize_question(&t.question), t.id))
            .collect();
        FixtureSerpProvider {
            dir: dir.to_path_buf(),
            question_to_topic,
        }
    }
}

impl SerpProvider for FixtureSerpProvider {
    fn fetch(
        &self,
        engine: Engine,
        question: &str,
        _depth: u32,
    ) -> Result<Vec<SerpEntry>, SerpError> {
        let topic_id = self
            .question_to_topic
            .get(&normalize_question(question))
            .ok_or_else(|| {
                SerpError::ProviderUnavailable(format!("no fixture topic for `{question}`"))
            })?;
        let path = self.dir.join(engine.as_str()).join(format!("{topic_id}.json"));
        let bytes = std::fs::read(&path).map_err(|e| {
            SerpError::ProviderUnavailable(format!("fixture {} unreadable: {e}", path.display()))
        })?;
        let serp: Serp = serde_json::from_slice(&bytes).map_err(|e| {
            SerpError::ProviderUnavailable(format!("fixture {} malformed: {e}", path.display()))
        })?;
        Ok(serp.entries)
    }

    fn name(&self) -> &str {
        "fixture"
    }
}

/// Live provider speaking a neutral JSON API:
/// GET `<endpoint>?engine=<e>&q=<question>&depth=<n>` →
/// `[{url, title, snippet}]`. Requests to one provider instance are spaced
/// by a politeness delay; HTTP 429 surfaces as a retryable error.
pub struct HttpSerpProvider {
    endpoint: String,
    api_key: Option<String>,
    policy: Arc<NetworkPolicy>,
    min_delay: Duration,
    last_call: std::sync::Mutex<Option<Instant>>,
    client: reqwest::blocking::Client,
}

impl HttpSerpProvider {
    pub fn new(endpoint: &str, api_key: Option<String>, policy: Arc<NetworkPolicy>) -> Self {
        HttpSerpProvider {
            endpoint: endpoint.to_string(),
            api_key,
            policy,
            min_delay: Duration::from_secs(2),
            last_call: std::sync::Mutex::new(None),
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn with_min_delay(mut self, delay: Duration) -> Self {
        self.min_delay = delay;
        self
    }

    fn wait_politely(&self) {
        let mut last = self.last_call.lock().expect("rate limiter poisoned");
        if let Some(at) = *last {
            let elapsed = at.elapsed();
            if elapsed < self.min_delay {
                std::thread::sleep(self.min_delay - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

#[derive(Deserialize)]
struct WireEntry {
    url: String,
    title: String,
    #[serde(default)]
    snippet: Option<String>,
}

impl SerpProvider for HttpSerpProvider {
    fn fetch(
        &self,
        engine: Engine,
        question: &str,
        depth: u32,
    ) -> Result<Vec<SerpEntry>, SerpError> {
        self.policy.authorize_live_call(&self.endpoint)?;
        self.wait_politely();
        let mut builder = self.client.get(&self.endpoint).query(&[
            ("engine", engine.as_str()),
            ("q", question),
            ("depth", &depth.to_string()),
        ]);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| SerpError::ProviderUnavailable(e.to_string()))?;
        if response.status().as_u16() == 429 {
            let retry_after_secs = response
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse().ok())
                .unwrap_or(2);
            return Err(SerpError::RateLimited { retry_after_secs });
        }
        if !response.status().is_success() {
            return Err(SerpError::ProviderUnavailable(format!(
                "http status {}",
                response.status()
            )));
        }
        let wire: Vec<WireEntry> = response
            .json()
            .map_err(|e| SerpError::ProviderUnavailable(format!("malformed body: {e}")))?;
        Ok(wire
            .into_iter()
            .enumerate()
            .map(|(i, e)| SerpEntry {
                rank: (i + 1) as u32,
                url: e.url,
                title: e.title,
                snippet: e.snippet,
            })
            .collect())
    }

    fn name(&self) -> &str {
        "http"
    }
}

/// Fetches, deduplicates and truncates the organic results for one question.
pub fn search(
    engine: Engine,
    question: &str,
    topic_id: u32,
    depth: u32,
    provider: &dyn SerpProvider,
) -> Result<Serp, SerpError> {
    if !(1..=20).contains(&depth) {
        return Err(SerpError::InvalidDepth(depth));
    }
    let raw = provider.fetch(engine, question, depth)?;
    let mut entries = dedup_entries(raw);
    entries.truncate(depth as usize);
    if entries.is_empty() {
        return Err(SerpError::EmptySerp {
            engine,
            question: question.to_string(),
        });
    }
    Ok(Serp {
        engine,
        topic_id,
        entries,
        retrieved_at: Utc::now(),
    })
}

/// Cache key of a search: engine, canonical question and depth.
pub fn serp_key(engine: Engine, question: &str, depth: u32) -> String {
    key_hash_of(&[
        "serp",
        engine.as_str(),
        &normalize_question(question),
        &depth.to_string(),
    ])
}

/// Replays a search from the run store or performs it and persists the
/// result. Repeated calls never change the store after the first.
pub fn cached_search(
    engine: Engine,
    question: &str,
    topic_id: u32,
    depth: u32,
    provider: &dyn SerpProvider,
    store: &RunStore,
    run_id: &str,
) -> Result<Serp, SerpError> {
    let key = serp_key(engine, question, depth);
    if let Some(record) = store.get(RunKind::Serp, &key)? {
        let serp: Serp = serde_json::from_value(record.payload)
            .map_err(|e| StoreError::StoreCorrupt(format!("serp payload: {e}")))?;
        return Ok(serp);
    }
    store.stats().record_provider_call();
    let serp = search(engine, question, topic_id, depth, provider)?;
    let payload = serde_json::to_value(&serp)
        .map_err(|e| StoreError::StoreCorrupt(format!("serp encode: {e}")))?;
    store.put(run_id, RunKind::Serp, &key, payload)?;
    Ok(serp)
}
