//! Reading-comprehension labeling of ranked search results: does the most
//! relevant passage of a result page answer the health question yes, no, or
//! not at all?

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{
    cached_fetch_page, split_passages, ExtractError, PageProvider, PageStatus, Passage,
};
use crate::llm::{complete, CompletionProvider, LlmError, ModelSpec};
use crate::rank::{top_passage, RankError, ScorerConfig};
use crate::serp::{Engine, Serp};
use crate::store::{key_hash_of, RunKind, RunStore, StoreError};
use crate::topics::{BinaryStance, Topic};

/// Verdict extracted from one passage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerLabel {
    Yes,
    No,
    NoAnswer,
}

impl AnswerLabel {
    pub fn matches(&self, stance: BinaryStance) -> bool {
        matches!(
            (self, stance),
            (AnswerLabel::Yes, BinaryStance::Yes) | (AnswerLabel::No, BinaryStance::No)
        )
    }

    pub fn is_answer(&self) -> bool {
        *self != AnswerLabel::NoAnswer
    }
}

/// Label attributed to one ranked entry, with correctness against the topic
/// stance. `correct` is false whenever the entry gave no answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub engine: Engine,
    pub topic_id: u32,
    /// 1-based rank of the entry this label belongs to.
    pub rank: u32,
    pub label: AnswerLabel,
    pub correct: bool,
    pub url: String,
    pub passage_index: Option<usize>,
}

impl AnswerRecord {
    pub fn new(
        engine: Engine,
        topic_id: u32,
        rank: u32,
        label: AnswerLabel,
        stance: BinaryStance,
        url: &str,
        passage_index: Option<usize>,
    ) -> Self {
        AnswerRecord {
            engine,
            topic_id,
            rank,
            label,
            correct: label.is_answer() && label.matches(stance),
            url: url.to_string(),
            passage_index,
        }
    }
}

#[derive(Debug, Error)]
pub enum AnswerError {
    #[error("reading-comprehension prompt needs a non-empty {0}")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Builds the reading-comprehension prompt. The passage is followed by a
/// period unless it already ends with one, then the fixed instruction and
/// the question.
pub fn build_rc_prompt(passage: &str, question: &str) -> Result<String, AnswerError> {
    if passage.is_empty() {
        return Err(AnswerError::EmptyInput("passage"));
    }
    if question.is_empty() {
        return Err(AnswerError::EmptyInput("question"));
    }
    let joiner = if passage.ends_with('.') { "" } else { "." };
    Ok(format!(
        "{passage}{joiner} Based on the previous text, answer 'yes', 'no' or 'no answer provided' to the following question: {question}"
    ))
}

/// Maps raw reader output to a label.
///
/// The phrase "no answer" anywhere in the first sentence wins before the
/// bare yes/no token scan, so "no answer provided." is never misread as a
/// negative answer. Unrecognized output is NoAnswer.
pub fn map_rc_completion(raw_text: &str) -> AnswerLabel {
    let first_sentence_end = raw_text
        .find(['.', '!', '?'])
        .map(|i| i + 1)
        .unwrap_or(raw_text.len());
    let first_sentence = raw_text[..first_sentence_end].to_lowercase();
    if first_sentence.contains("no answer") {
        return AnswerLabel::NoAnswer;
    }
    for token in raw_text.split_whitespace().take(10) {
        let cleaned: String = token.chars().filter(|c| c.is_alphanumeric()).collect();
        if cleaned.eq_ignore_ascii_case("yes") {
            return AnswerLabel::Yes;
        }
        if cleaned.eq_ignore_ascii_case("no") {
            return AnswerLabel::No;
        }
    }
    AnswerLabel::NoAnswer
}

/// Runs the reading-comprehension step for one passage.
pub fn extract_answer(
    passage: &str,
    question: &str,
    model: &ModelSpec,
    reader: &dyn CompletionProvider,
    store: &RunStore,
    run_id: &str,
) -> Result<AnswerLabel, AnswerError> {
    let prompt = build_rc_prompt(passage, question)?;
    let completion = complete(model, &prompt, reader, store, run_id)?;
    Ok(map_rc_completion(&completion.raw_text))
}

/// Labels every entry of one ranking in rank order.
///
/// All pages of the ranking are fetched first because the BM25 corpus is
/// the passage set of the whole page set for this (engine, topic) pair.
/// Entries whose page fails to fetch or strips to nothing become NoAnswer
/// records rather than errors.
#[allow(clippy::too_many_arguments)]
pub fn label_ranking(
    serp: &Serp,
    topic: &Topic,
    reader_model: &ModelSpec,
    reader: &dyn CompletionProvider,
    pages: &dyn PageProvider,
    scorer_config: &ScorerConfig,
    window_words: usize,
    stride_words: usize,
    store: &RunStore,
    run_id: &str,
) -> Result<Vec<AnswerRecord>, AnswerError> {
    let mut page_passages: Vec<Option<Vec<Passage>>> = Vec::with_capacity(serp.entries.len());
    let mut corpus: Vec<Passage> = Vec::new();
    for entry in &serp.entries {
        let page = cached_fetch_page(&entry.url, pages, store, run_id)?;
        if page.status == PageStatus::Ok {
            let passages = split_passages(&page, window_words, stride_words)?;
            corpus.extend(passages.iter().cloned());
            page_passages.push(Some(passages));
        } else {
            page_passages.push(None);
        }
    }
    let scorer = scorer_config.build(&corpus);

    let mut records = Vec::with_capacity(serp.entries.len());
    for (entry, passages) in serp.entries.iter().zip(&page_passages) {
        let record = match passages {
            Some(passages) => {
                let best = top_passage(&topic.question, passages, scorer.as_ref())?;
                let label =
                    extract_answer(&best.passage.text, &topic.question, reader_model, reader, store, run_id)?;
                AnswerRecord::new(
                    serp.engine,
                    topic.id,
                    entry.rank,
                    label,
                    topic.stance,
                    &entry.url,
                    Some(best.passage.index),
                )
            }
            None => AnswerRecord::new(
                serp.engine,
                topic.id,
                entry.rank,
                AnswerLabel::NoAnswer,
                topic.stance,
                &entry.url,
                None,
            ),
        };
        records.push(record);
    }
    Ok(records)
}

/// Store key of one answer record: engine, topic, rank and the reader model
/// that produced the label.
pub fn answer_key(engine: Engine, topic_id: u32, rank: u32, reader_model_id: &str) -> String {
    key_hash_of(&[
        "answer",
        engine.as_str(),
        &topic_id.to_string(),
        &rank.to_string(),
        reader_model_id,
    ])
}

/// Persists answer records so curve/score/usersim commands can replay them.
pub fn persist_answer_records(
    records: &[AnswerRecord],
    reader_model_id: &str,
    store: &RunStore,
    run_id: &str,
) -> Result<(), AnswerError> {
    for record in records {
        let key = answer_key(record.engine, record.topic_id, record.rank, reader_model_id);
        let payload = serde_json::to_value(record)
            .map_err(|e| StoreError::StoreCorrupt(format!("answer encode: {e}")))?;
        store.put(run_id, RunKind::Answer, &key, payload)?;
    }
    Ok(())
}

/// Loads every stored answer record, ordered by (engine, topic, rank).
pub fn load_answer_records(store: &RunStore) -> Result<Vec<AnswerRecord>, AnswerError> {
    let mut records = Vec::new();
    for record in store.records(RunKind::Answer) {
        let answer: AnswerRecord = serde_json::from_value(record.payload)
            .map_err(|e| StoreError::StoreCorrupt(format!("answer payload: {e}")))?;
        records.push(answer);
    }
    records.sort_by(|a, b| {
        (a.engine, a.topic_id, a.rank).cmp(&(b.engine, b.topic_id, b.rank))
    });
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::prompts::prompt_hash;
    use crate::llm::StubResponder;
    use crate::serp::SerpEntry;
    use crate::topics::TopicYear;
    use std::collections::HashMap;

    #[test]
    fn rc_prompt_matches_template() {
        let prompt = build_rc_prompt("Garlic lowers blood pressure", "Does garlic lower blood pressure?")
            .unwrap();
        assert_eq!(
            prompt,
            "Garlic lowers blood pressure. Based on the previous text, answer 'yes', 'no' or 'no answer provided' to the following question: Does garlic lower blood pressure?"
        );
    }

    #[test]
    fn rc_prompt_does_not_double_periods() {
        let prompt = build_rc_prompt("Text already ends.", "Q?").unwrap();
        assert!(prompt.starts_with("Text already ends. Based on the previous text"));
        assert!(!prompt.contains(".."));
    }

    #[test]
    fn rc_prompt_rejects_empty_inputs() {
        assert!(matches!(
            build_rc_prompt("", "Q?"),
            Err(AnswerError::EmptyInput("passage"))
        ));
        assert!(matches!(
            build_rc_prompt("P", ""),
            Err(AnswerError::EmptyInput("question"))
        ));
    }

    #[test]
    fn no_answer_phrase_beats_bare_no() {
        assert_eq!(map_rc_completion("no"), AnswerLabel::No);
        assert_eq!(map_rc_completion("no answer provided."), AnswerLabel::NoAnswer);
        assert_eq!(map_rc_completion("No answer provided"), AnswerLabel::NoAnswer);
        assert_eq!(map_rc_completion("Yes, it does."), AnswerLabel::Yes);
        assert_eq!(map_rc_completion("the text is unrelated"), AnswerLabel::NoAnswer);
    }

    #[test]
    fn no_answer_check_is_limited_to_first_sentence() {
        // The phrase appears late, after a decisive first sentence.
        assert_eq!(
            map_rc_completion("Yes. Though some say no answer exists."),
            AnswerLabel::Yes
        );
    }

    fn topic() -> Topic {
        Topic::new(
            1,
            "garlic blood pressure".into(),
            "Does garlic lower blood pressure?",
            BinaryStance::Yes,
            "Narrative.".into(),
            TopicYear::Y2021,
            vec![],
        )
        .unwrap()
    }

    struct MapPages(HashMap<String, String>);

    impl PageProvider for MapPages {
        fn fetch(&self, url: &str) -> Result<String, String> {
            self.0.get(url).cloned().ok_or_else(|| "missing".to_string())
        }
        fn name(&self) -> &str {
            "map"
        }
    }

    #[test]
    fn label_ranking_emits_one_record_per_entry_in_rank_order() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let topic = topic();
        let serp = Serp {
            engine: Engine::Google,
            topic_id: topic.id,
            entries: vec![
                SerpEntry { rank: 1, url: "https://a.com/1".into(), title: "a".into(), snippet: None },
                SerpEntry { rank: 2, url: "https://b.com/2".into(), title: "b".into(), snippet: None },
                SerpEntry { rank: 3, url: "https://c.com/3".into(), title: "c".into(), snippet: None },
            ],
            retrieved_at: chrono::Utc::now(),
        };
        let mut pages = HashMap::new();
        pages.insert(
            "https://a.com/1".into(),
            "<p>garlic lowers blood pressure in trials</p>".to_string(),
        );
        // b.com is missing: fetch fails, folds to NoAnswer.
        pages.insert(
            "https://c.com/3".into(),
            "<p>garlic does not lower blood pressure</p>".to_string(),
        );
        let page_provider = MapPages(pages);

        let model = ModelSpec::new("stub", "reader");
        let mut responses = HashMap::new();
        let prompt_a = build_rc_prompt(
            "garlic lowers blood pressure in trials",
            &topic.question,
        )
        .unwrap();
        let prompt_c = build_rc_prompt(
            "garlic does not lower blood pressure",
            &topic.question,
        )
        .unwrap();
        responses.insert(prompt_hash(&prompt_a), "Yes".to_string());
        responses.insert(prompt_hash(&prompt_c), "No".to_string());
        let reader = StubResponder::new(responses);

        let records = label_ranking(
            &serp,
            &topic,
            &model,
            &reader,
            &page_provider,
            &ScorerConfig::Bm25,
            120,
            60,
            &store,
            "r",
        )
        .unwrap();

        assert_eq!(records.len(), 3);
        assert_eq!(
            records.iter().map(|r| r.label).collect::<Vec<_>>(),
            vec![AnswerLabel::Yes, AnswerLabel::NoAnswer, AnswerLabel::No]
        );
        // Stance is Yes: only the rank-1 record is correct.
        assert_eq!(
            records.iter().map(|r| r.correct).collect::<Vec<_>>(),
            vec![true, false, false]
        );
        assert_eq!(records[1].passage_index, None);
    }

    #[test]
    fn no_answer_records_are_never_correct() {
        let record = AnswerRecord::new(
            Engine::Bing,
            9,
            4,
            AnswerLabel::NoAnswer,
            BinaryStance::Yes,
            "https://x.com/y",
            None,
        );
        assert!(!record.correct);
    }

    #[test]
    fn records_round_trip_through_the_store() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let records = vec![
            AnswerRecord::new(Engine::Bing, 2, 1, AnswerLabel::Yes, BinaryStance::Yes, "https://x.com/1", Some(0)),
            AnswerRecord::new(Engine::Bing, 1, 1, AnswerLabel::No, BinaryStance::Yes, "https://x.com/2", Some(1)),
        ];
        persist_answer_records(&records, "reader", &store, "r").unwrap();
        let loaded = load_answer_records(&store).unwrap();
        assert_eq!(loaded.len(), 2);
        // Sorted by (engine, topic, rank).
        assert_eq!(loaded[0].topic_id, 1);
        assert_eq!(loaded[1].topic_id, 2);
    }
}
