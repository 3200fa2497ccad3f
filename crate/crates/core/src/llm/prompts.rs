//! Prompt assembly for the question-answering runs.
//!
//! All builders are pure and byte-exact; golden-file tests freeze their
//! output. Context texts are quoted verbatim from the evaluation protocol
//! and must not be reworded.

use sha2::{Digest, Sha256};

use crate::llm::{LlmError, PromptKind};
use crate::topics::BinaryStance;

/// Fixed instruction suffix forcing a one-token answer.
pub const YES_NO_SUFFIX: &str = "Answer only 'yes' or 'no'.";

/// Context sentence framing the asker as a regular end user.
pub const NON_EXPERT_CONTEXT: &str =
    "I am a non-expert user searching for medical advice online";

/// Context paragraph framing the asker as a medical expert committee.
pub const EXPERT_CONTEXT: &str = "We are a committee of leading scientific experts and medical doctors reviewing the latest and highest quality of research from PubMED. For each question, we have chosen an answer, either 'yes' or 'no', based on our best understanding of current medical practice and literature.";

/// Context block for a prompt kind; `NoContext` has none.
pub fn context_block(kind: PromptKind) -> Option<&'static str> {
    match kind {
        PromptKind::NoContext => None,
        PromptKind::NonExpert => Some(NON_EXPERT_CONTEXT),
        PromptKind::Expert => Some(EXPERT_CONTEXT),
    }
}

/// Zero-shot question prompt: optional context block, the question, then the
/// yes/no instruction suffix, newline separated.
pub fn build_qa_prompt(question: &str, kind: PromptKind) -> String {
    match context_block(kind) {
        Some(context) => format!("{context}\n{question}\n{YES_NO_SUFFIX}"),
        None => format!("{question}\n{YES_NO_SUFFIX}"),
    }
}

/// The three fixed demonstration pairs used for few-shot runs.
pub fn default_demos() -> Vec<(String, String)> {
    vec![
        (
            "Will wearing an ankle brace help heal achilles tendonitis?".to_string(),
            "No".to_string(),
        ),
        ("Does yoga help manage asthma?".to_string(), "Yes".to_string()),
        ("Is starving a fever effective?".to_string(), "No".to_string()),
    ]
}

/// Few-shot prompt: context block (per kind), one `Question:`/`Answer:` pair
/// per demonstration in the given order, then the target question with an
/// open `Answer:`.
pub fn build_fewshot_prompt(
    question: &str,
    kind: PromptKind,
    demos: &[(String, String)],
) -> Result<String, LlmError> {
    if demos.is_empty() {
        return Err(LlmError::EmptyDemos);
    }
    let mut out = String::new();
    if let Some(context) = context_block(kind) {
        out.push_str(context);
        out.push('\n');
    }
    for (q, a) in demos {
        out.push_str(&format!("Question: {q}\nAnswer: {a}\n"));
    }
    out.push_str(&format!("Question: {question}\nAnswer:"));
    Ok(out)
}

/// Maps raw completion text to a yes/no stance.
///
/// Scans the first 10 whitespace-delimited tokens; each token is stripped of
/// non-alphanumeric characters and compared case-insensitively. The first
/// token equal to "yes" or "no" decides. Anything else is unparsable and is
/// counted as incorrect by the metrics layer.
pub fn parse_binary_answer(raw_text: &str) -> Result<BinaryStance, LlmError> {
    for token in raw_text.split_whitespace().take(10) {
        let cleaned: String = token.chars().filter(|c| c.is_alphanumeric()).collect();
        if cleaned.eq_ignore_ascii_case("yes") {
            return Ok(BinaryStance::Yes);
        }
        if cleaned.eq_ignore_ascii_case("no") {
            return Ok(BinaryStance::No);
        }
    }
    Err(LlmError::UnparsableAnswer(raw_text.to_string()))
}

/// Hex sha256 of the exact prompt bytes; the shared key between stub
/// responder maps and the fixture generator.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}
