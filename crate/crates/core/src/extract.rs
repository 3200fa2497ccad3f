//! Result-page extraction: fetch the raw HTML, boil it down to workable
//! plain text and split that into overlapping word-window passages.
//!
//! Network failures are data here, not errors: a page that cannot be
//! fetched (or strips to nothing) flows downstream as a no-answer entry.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::NetworkPolicy;
use crate::serp::canonicalize_url;
use crate::store::{key_hash_of, RunKind, RunStore, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageStatus {
    Ok,
    FetchFailed,
    EmptyAfterStrip,
}

/// Plain-text form of one fetched result page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageText {
    pub url: String,
    pub text: String,
    pub fetched_at: DateTime<Utc>,
    pub status: PageStatus,
}

/// One word window cut from a page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub source_url: String,
    /// 0-based position within the page.
    pub index: usize,
    pub text: String,
    /// Word offsets `(start, end)` into the page text, end exclusive.
    pub word_span: (usize, usize),
}

pub const DEFAULT_WINDOW_WORDS: usize = 120;
pub const DEFAULT_STRIDE_WORDS: usize = 60;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("invalid page url `{0}`")]
    InvalidUrl(String),
    #[error("page `{0}` has no extractable words")]
    EmptyPage(String),
    #[error("window {window} / stride {stride} violates window >= stride >= 1")]
    InvalidWindow { window: usize, stride: usize },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Source of raw page bodies.
pub trait PageProvider {
    /// Returns the HTML body, or a human-readable failure reason. The reason
    /// is folded into `status: fetch_failed`, never raised.
    fn fetch(&self, url: &str) -> Result<String, String>;
    fn name(&self) -> &str;
}

/// Live fetcher with bounded redirects and timeout. Non-HTML content types
/// are treated as fetch failures.
pub struct LivePageProvider {
    policy: Arc<NetworkPolicy>,
    client: reqwest::blocking::Client,
}

impl LivePageProvider {
    pub fn new(policy: Arc<NetworkPolicy>) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(15))
            .redirect(reqwest::redirect::Policy::limited(5))
            .build()
            .expect("reqwest client construction cannot fail with static options");
        LivePageProvider { policy, client }
    }
}

impl PageProvider for LivePageProvider {
    fn fetch(&self, url: &str) -> Result<String, String> {
        self.policy
            .authorize_live_call(url)
            .map_err(|e| e.to_string())?;
        let response = self.client.get(url).send().map_err(|e| e.to_string())?;
        if !response.status().is_success() {
            return Err(format!("http status {}", response.status()));
        }
        let content_type = response
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("")
            .to_string();
        if !content_type.is_empty()
            && !content_type.contains("html")
            && !content_type.contains("text/plain")
        {
            return Err(format!("unsupported content type {content_type}"));
        }
        response.text().map_err(|e| e.to_string())
    }

    fn name(&self) -> &str {
        "live"
    }
}

/// Offline page source: files named `<sha256 of canonical url>.html` under a
/// fixture directory.
pub struct FixturePageProvider {
    dir: PathBuf,
}

impl FixturePageProvider {
    pub fn new(dir: &std::path::Path) -> Self {
        FixturePageProvider { dir: dir.to_path_buf() }
    }

    /// File name a page fixture for `url` must use.
    pub fn fixture_file_name(url: &str) -> Result<String, ExtractError> {
        let canonical = canonicalize_url(url).map_err(|_| ExtractError::InvalidUrl(url.into()))?;
        Ok(format!("{}.html", key_hash_of(&["page-file", &canonical])))
    }
}

impl PageProvider for FixturePageProvider {
    fn fetch(&self, url: &str) -> Result<String, String> {
        let name = Self::fixture_file_name(url).map_err(|e| e.to_string())?;
        let path = self.dir.join(name);
        std::fs::read_to_string(&path).map_err(|e| format!("fixture {}: {e}", path.display()))
    }

    fn name(&self) -> &str {
        "fixture"
    }
}

/// Elements whose entire subtree is boilerplate, never page content.
const STRIP_ELEMENTS: [&str; 6] = ["script", "style", "nav", "header", "footer", "aside"];

/// Elements that terminate a text line on both sides.
const BLOCK_ELEMENTS: [&str; 32] = [
    "address", "article", "blockquote", "dd", "details", "div", "dl", "dt", "fieldset",
    "figcaption", "figure", "form", "h1", "h2", "h3", "h4", "h5", "h6", "hr", "li", "main", "ol",
    "p", "pre", "section", "table", "tbody", "td", "th", "thead", "tr", "ul",
];

/// Converts HTML to normalized plain text.
///
/// Boilerplate containers and comments are dropped, block elements become
/// line boundaries, entities are decoded, and each line has its internal
/// whitespace collapsed. Newlines inside text survive as line boundaries,
/// which makes the function idempotent on its own output.
pub fn html_to_text(html: &str) -> String {
    use scraper::node::Node;

    fn walk(node: ego_tree::NodeRef<'_, Node>, out: &mut String) {
        for child in node.children() {
            match child.value() {
                Node::Text(text) => out.push_str(&text.text),
                Node::Element(element) => {
                    let name = element.name();
                    if STRIP_ELEMENTS.contains(&name) {
                        continue;
                    }
                    if name == "br" {
                        out.push('\n');
                        continue;
                    }
                    let block = BLOCK_ELEMENTS.contains(&name);
                    if block {
                        out.push('\n');
                    }
                    walk(child, out);
                    if block {
                        out.push('\n');
                    }
                }
                _ => {}
            }
        }
    }

    let document = scraper::Html::parse_document(html);
    let mut raw = String::new();
    walk(document.tree.root(), &mut raw);

    let mut lines = Vec::new();
    for line in raw.split('\n') {
        let collapsed = line.split_whitespace().collect::<Vec<_>>().join(" ");
        if !collapsed.is_empty() {
            lines.push(collapsed);
        }
    }
    lines.join("\n")
}

/// Fetches one page and converts it to plain text. Fetch failures are
/// encoded in the returned status; only a malformed URL raises.
pub fn fetch_page(url: &str, provider: &dyn PageProvider) -> Result<PageText, ExtractError> {
    canonicalize_url(url).map_err(|_| ExtractError::InvalidUrl(url.to_string()))?;
    let fetched_at = Utc::now();
    match provider.fetch(url) {
        Ok(html) => {
            let text = html_to_text(&html);
            let status = if text.is_empty() {
                PageStatus::EmptyAfterStrip
            } else {
                PageStatus::Ok
            };
            Ok(PageText {
                url: url.to_string(),
                text,
                fetched_at,
                status,
            })
        }
        Err(_) => Ok(PageText {
            url: url.to_string(),
            text: String::new(),
            fetched_at,
            status: PageStatus::FetchFailed,
        }),
    }
}

#[derive(Serialize, Deserialize)]
struct CachedPage {
    page: PageText,
    raw_html: Option<String>,
}

/// Cache key of a page fetch: the canonical URL.
pub fn page_key(url: &str) -> Result<String, ExtractError> {
    let canonical = canonicalize_url(url).map_err(|_| ExtractError::InvalidUrl(url.into()))?;
    Ok(key_hash_of(&["page", &canonical]))
}

/// Replays a page fetch from the run store or performs it and persists both
/// the raw body and the derived text.
pub fn cached_fetch_page(
    url: &str,
    provider: &dyn PageProvider,
    store: &RunStore,
    run_id: &str,
) -> Result<PageText, ExtractError> {
    let key = page_key(url)?;
    if let Some(record) = store.get(RunKind::Page, &key)? {
        let cached: CachedPage = serde_json::from_value(record.payload)
            .map_err(|e| StoreError::StoreCorrupt(format!("page payload: {e}")))?;
        return Ok(cached.page);
    }
    store.stats().record_provider_call();
    let raw_html = provider.fetch(url).ok();
    let page = match &raw_html {
        Some(html) => {
            let text = html_to_text(html);
            let status = if text.is_empty() {
                PageStatus::EmptyAfterStrip
            } else {
                PageStatus::Ok
            };
            PageText {
                url: url.to_string(),
                text,
                fetched_at: Utc::now(),
                status,
            }
        }
        None => PageText {
            url: url.to_string(),
            text: String::new(),
            fetched_at: Utc::now(),
            status: PageStatus::FetchFailed,
        },
    };
    let payload = serde_json::to_value(CachedPage {
        page: page.clone(),
        raw_html,
    })
    .map_err(|e| StoreError::StoreCorrupt(format!("page encode: {e}")))?;
    store.put(run_id, RunKind::Page, &key, payload)?;
    Ok(page)
}

/// Splits page text into sliding word windows of `window_words` words with
/// stride `stride_words`. The final partial window is emitted only when it
/// contributes at least one new word.
pub fn split_passages(
    page: &PageText,
    window_words: usize,
    stride_words: usize,
) -> Result<Vec<Passage>, ExtractError> {
    if window_words < stride_words || stride_words == 0 {
        return Err(ExtractError::InvalidWindow {
            window: window_words,
            stride: stride_words,
        });
    }
    if page.status != PageStatus::Ok {
        return Err(ExtractError::EmptyPage(page.url.clone()));
    }
    let words: Vec<&str> = page.text.split_whitespace().collect();
    if words.is_empty() {
        return Err(ExtractError::EmptyPage(page.url.clone()));
    }
    let mut passages = Vec::new();
    let mut start = 0usize;
    let mut prev_end = 0usize;
    loop {
        let end = (start + window_words).min(words.len());
        if passages.is_empty() || end > prev_end {
            passages.push(Passage {
                source_url: page.url.clone(),
                index: passages.len(),
                text: words[start..end].join(" "),
                word_span: (start, end),
            });
            prev_end = end;
        }
        if end == words.len() {
            break;
        }
        start += stride_words;
    }
    Ok(passages)
}
