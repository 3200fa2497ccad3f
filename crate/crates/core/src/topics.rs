//! TREC Health Misinformation topic sets: loading, validation and the
//! ground-truth stance for every downstream evaluation.
//!
//! Topic files come in an XML-like element format (one `<topic>` element per
//! topic with `<number>`, `<query>`, `<description>`, `<narrative>` and
//! `<stance>` children) or a JSON mirror (array of objects with the same
//! field names, accepted for `.json` files). Tag names that drift across
//! years are handled through a per-year alias table rather than guesswork.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The medically correct yes/no answer to a topic's question.
///
/// Only equality comparisons are meaningful; no ordering is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryStance {
    Yes,
    No,
}

impl BinaryStance {
    /// Lowercase rendering used in prompt templates.
    pub fn as_lower(&self) -> &'static str {
        match self {
            BinaryStance::Yes => "yes",
            BinaryStance::No => "no",
        }
    }

    /// Stance encoding used by the topic files.
    pub fn as_stance_str(&self) -> &'static str {
        match self {
            BinaryStance::Yes => "helpful",
            BinaryStance::No => "unhelpful",
        }
    }
}

impl fmt::Display for BinaryStance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinaryStance::Yes => write!(f, "Yes"),
            BinaryStance::No => write!(f, "No"),
        }
    }
}

/// Dataset year of a topic set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum TopicYear {
    Y2020,
    Y2021,
    Y2022,
}

impl TopicYear {
    pub fn as_u16(&self) -> u16 {
        match self {
            TopicYear::Y2020 => 2020,
            TopicYear::Y2021 => 2021,
            TopicYear::Y2022 => 2022,
        }
    }
}

impl TryFrom<u16> for TopicYear {
    type Error = TopicError;

    fn try_from(value: u16) -> Result<Self, Self::Error> {
        match value {
            2020 => Ok(TopicYear::Y2020),
            2021 => Ok(TopicYear::Y2021),
            2022 => Ok(TopicYear::Y2022),
            other => Err(TopicError::UnknownYear(other)),
        }
    }
}

impl From<TopicYear> for u16 {
    fn from(year: TopicYear) -> u16 {
        year.as_u16()
    }
}

impl fmt::Display for TopicYear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u16())
    }
}

/// One binary health question with its ground-truth stance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub id: u32,
    pub query: String,
    /// Full natural-language question (the topic's description field).
    pub question: String,
    pub stance: BinaryStance,
    pub narrative: String,
    pub year: TopicYear,
    /// Non-canonical child elements, preserved verbatim in document order.
    #[serde(default)]
    pub extras: Vec<(String, String)>,
}

impl Topic {
    /// Builds a topic, normalising the question and enforcing its invariants.
    pub fn new(
        id: u32,
        query: String,
        question: &str,
        stance: BinaryStance,
        narrative: String,
        year: TopicYear,
        extras: Vec<(String, String)>,
    ) -> Result<Self, TopicError> {
        let question = normalize_question(question);
        if question.is_empty() {
            return Err(TopicError::InvalidTopic {
                id,
                reason: "question is empty after normalization".into(),
            });
        }
        if !question.ends_with('?') {
            return Err(TopicError::InvalidTopic {
                id,
                reason: "question does not end with a question mark".into(),
            });
        }
        Ok(Topic {
            id,
            query,
            question,
            stance,
            narrative,
            year,
            extras,
        })
    }
}

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("malformed topic file: {0}")]
    MalformedTopicFile(String),
    #[error("topic {id} lacks required field `{field}`")]
    MissingField { id: String, field: &'static str },
    #[error("duplicate topic id {0}")]
    DuplicateTopicId(u32),
    #[error("unknown stance value `{0}` (expected `helpful` or `unhelpful`)")]
    UnknownStance(String),
    #[error("invalid topic {id}: {reason}")]
    InvalidTopic { id: u32, reason: String },
    #[error("unknown topic set year {0}")]
    UnknownYear(u16),
    #[error("failed to read topic file: {0}")]
    Io(#[from] std::io::Error),
}

/// Maps a raw stance string (lowercased, trimmed) to a [`BinaryStance`].
pub fn stance_to_label(raw: &str) -> Result<BinaryStance, TopicError> {
    match raw.trim().to_lowercase().as_str() {
        "helpful" => Ok(BinaryStance::Yes),
        "unhelpful" => Ok(BinaryStance::No),
        other => Err(TopicError::UnknownStance(other.to_string())),
    }
}

/// Collapses internal whitespace runs to a single space and trims the ends.
pub fn normalize_question(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical field names of a topic element.
const CANONICAL_FIELDS: [&str; 5] = ["number", "query", "description", "narrative", "stance"];

/// Tag-name alias table mapping observed element names to canonical ones.
///
/// The official files are not perfectly uniform across years, so the loader
/// accepts a configured table instead of guessing. Unlisted tags are kept as
/// opaque extras.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldAliases(HashMap<String, String>);

impl Default for FieldAliases {
    fn default() -> Self {
        let mut map = HashMap::new();
        for field in CANONICAL_FIELDS {
            map.insert(field.to_string(), field.to_string());
        }
        // Variants seen in the wild.
        map.insert("id".into(), "number".into());
        map.insert("title".into(), "query".into());
        map.insert("question".into(), "description".into());
        map.insert("answer".into(), "stance".into());
        FieldAliases(map)
    }
}

impl FieldAliases {
    /// Extends the default table with extra `observed -> canonical` entries.
    pub fn with_overrides<I>(overrides: I) -> Self
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut aliases = FieldAliases::default();
        for (observed, canonical) in overrides {
            aliases.0.insert(observed.to_lowercase(), canonical.to_lowercase());
        }
        aliases
    }

    fn resolve<'a>(&'a self, tag: &'a str) -> Option<&'a str> {
        self.0.get(&tag.to_lowercase()).map(String::as_str)
    }
}

/// Input format of a topic file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopicFormat {
    Xml,
    Json,
}

/// Parses a topic file from raw bytes.
///
/// Returns exactly one [`Topic`] per topic element, in file order. Stance
/// strings are mapped through [`stance_to_label`]; invariant violations in
/// the input raise errors rather than being repaired.
pub fn parse_topics(
    source: &[u8],
    year: TopicYear,
    format: TopicFormat,
    aliases: &FieldAliases,
) -> Result<Vec<Topic>, TopicError> {
    let topics = match format {
        TopicFormat::Xml => parse_topics_xml(source, year, aliases)?,
        TopicFormat::Json => parse_topics_json(source, year, aliases)?,
    };
    let mut seen = std::collections::HashSet::new();
    for topic in &topics {
        if !seen.insert(topic.id) {
            return Err(TopicError::DuplicateTopicId(topic.id));
        }
    }
    Ok(topics)
}

/// Loads topics from a file, choosing the parser by extension (`.json` uses
/// the JSON mirror format, everything else the XML-like element format).
pub fn load_topics(
    path: &Path,
    year: TopicYear,
    aliases: &FieldAliases,
) -> Result<Vec<Topic>, TopicError> {
    let bytes = std::fs::read(path)?;
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => TopicFormat::Json,
        _ => TopicFormat::Xml,
    };
    parse_topics(&bytes, year, format, aliases)
}

pub fn parse_topics_xml(
    source: &[u8],
    year: TopicYear,
    aliases: &FieldAliases,
) -> Result<Vec<Topic>, TopicError> {
    let text = String::from_utf8_lossy(source);
    let doc = roxmltree::Document::parse(&text)
        .map_err(|e| TopicError::MalformedTopicFile(e.to_string()))?;

    let mut topics = Vec::new();
    for node in doc
        .descendants()
        .filter(|n| n.is_element() && n.tag_name().name().eq_ignore_ascii_case("topic"))
    {
        let mut fields: HashMap<&str, String> = HashMap::new();
        let mut extras = Vec::new();
        for child in node.children().filter(|c| c.is_element()) {
            let tag = child.tag_name().name();
            let value = element_text(child);
            match aliases.resolve(tag) {
                Some(canonical) => {
                    let canonical = CANONICAL_FIELDS
                        .iter()
                        .find(|f| **f == canonical)
                        .copied()
                        .unwrap_or("extras");
                    if canonical == "extras" {
                        extras.push((tag.to_string(), value));
                    } else {
                        fields.insert(canonical, value);
                    }
                }
                None => extras.push((tag.to_string(), value)),
            }
        }
        topics.push(build_topic(fields, extras, year)?);
    }
    if topics.is_empty() {
        return Err(TopicError::MalformedTopicFile(
            "no <topic> elements found".into(),
        ));
    }
    Ok(topics)
}

fn element_text(node: roxmltree::Node<'_, '_>) -> String {
    let mut out = String::new();
    for child in node.children() {
        if let Some(t) = child.text() {
            out.push_str(t);
        }
    }
    out.trim().to_string()
}

fn parse_topics_json(
    source: &[u8],
    year: TopicYear,
    aliases: &FieldAliases,
) -> Result<Vec<Topic>, TopicError> {
    let values: Vec<serde_json::Map<String, serde_json::Value>> = serde_json::from_slice(source)
        .map_err(|e| TopicError::MalformedTopicFile(e.to_string()))?;
    if values.is_empty() {
        return Err(TopicError::MalformedTopicFile("empty topic array".into()));
    }
    let mut topics = Vec::new();
    for object in values {
        let mut fields: HashMap<&str, String> = HashMap::new();
        let mut extras = Vec::new();
        for (key, value) in &object {
            let rendered = match value {
                serde_json::Value::String(s) => s.trim().to_string(),
                other => other.to_string(),
            };
            match aliases.resolve(key) {
                Some(canonical) => {
                    let canonical = CANONICAL_FIELDS
                        .iter()
                        .find(|f| **f == canonical)
                        .copied()
                        .unwrap_or("extras");
                    if canonical == "extras" {
                        extras.push((key.clone(), rendered));
                    } else {
                        fields.insert(canonical, rendered);
                    }
                }
                None => extras.push((key.clone(), rendered)),
            }
        }
        topics.push(build_topic(fields, extras, year)?);
    }
    Ok(topics)
}

fn build_topic(
    mut fields: HashMap<&str, String>,
    extras: Vec<(String, String)>,
    year: TopicYear,
) -> Result<Topic, TopicError> {
    let id_raw = fields.remove("number").ok_or(TopicError::MissingField {
        id: "<unknown>".into(),
        field: "number",
    })?;
    let id: u32 = id_raw.trim().parse().map_err(|_| TopicError::MalformedTopicFile(
        format!("topic number `{id_raw}` is not an integer"),
    ))?;
    let question = fields.remove("description").ok_or(TopicError::MissingField {
        id: id_raw.clone(),
        field: "description",
    })?;
    let stance_raw = fields.remove("stance").ok_or(TopicError::MissingField {
        id: id_raw.clone(),
        field: "stance",
    })?;
    let stance = stance_to_label(&stance_raw)?;
    let query = fields.remove("query").unwrap_or_default();
    let narrative = fields.remove("narrative").unwrap_or_default();
    Topic::new(id, query, &question, stance, narrative, year, extras)
}

/// Serialises topics back to the XML-like element format.
///
/// Round-trip guarantee: `parse_topics(serialize_topics_xml(ts))` yields a
/// topic list equal to `ts`.
pub fn serialize_topics_xml(topics: &[Topic]) -> String {
    let mut out = String::from("<topics>\n");
    for topic in topics {
        out.push_str("  <topic>\n");
        push_element(&mut out, "number", &topic.id.to_string());
        push_element(&mut out, "query", &topic.query);
        push_element(&mut out, "description", &topic.question);
        push_element(&mut out, "narrative", &topic.narrative);
        push_element(&mut out, "stance", topic.stance.as_stance_str());
        for (tag, value) in &topic.extras {
            push_element(&mut out, tag, value);
        }
        out.push_str("  </topic>\n");
    }
    out.push_str("</topics>\n");
    out
}

fn push_element(out: &mut String, tag: &str, value: &str) {
    out.push_str("    <");
    out.push_str(tag);
    out.push('>');
    out.push_str(&escape_xml(value));
    out.push_str("</");
    out.push_str(tag);
    out.push_str(">\n");
}

fn escape_xml(value: &str) -> String {
    value
        .replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
