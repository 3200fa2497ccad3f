//! LLM experiment grids: zero-shot, few-shot and retrieval-augmented runs
//! over a topic set, producing one row per grid cell.
//!
//! Provider failures never abort a grid; they are recorded in the affected
//! cell, which counts as incorrect, so every run has the full cross-product
//! cardinality.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{cached_fetch_page, split_passages, ExtractError, PageProvider, PageStatus};
use crate::llm::prompts::{build_fewshot_prompt, build_qa_prompt, context_block, parse_binary_answer};
use crate::llm::{complete, CompletionProvider, LlmError, ModelSpec, PromptKind};
use crate::rank::{top_passage, RankError, ScorerConfig};
use crate::serp::Serp;
use crate::store::RunStore;
use crate::topics::{BinaryStance, Topic, TopicYear};

/// Evidence placeholder for results whose page could not be fetched.
pub const NO_EVIDENCE: &str = "(no evidence retrieved)";

/// Declarative description of one experiment grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunPlan {
    pub models: Vec<ModelSpec>,
    pub prompt_kinds: Vec<PromptKind>,
    /// In-context demonstration counts; 0 means zero-shot.
    #[serde(default)]
    pub shots: Vec<u8>,
    /// SERP positions whose page feeds the RAG evidence; empty when not a
    /// RAG run.
    #[serde(default)]
    pub rag_ranks: Vec<u32>,
    pub topic_year: TopicYear,
    /// Demonstration pairs for few-shot prompts; defaults to the fixed
    /// three-pair list.
    #[serde(default = "crate::llm::prompts::default_demos")]
    pub demo_pairs: Vec<(String, String)>,
}

impl RunPlan {
    pub fn validate(&self) -> Result<(), QaError> {
        if self.models.is_empty() {
            return Err(QaError::InvalidPlan("no models listed".into()));
        }
        if self.prompt_kinds.is_empty() {
            return Err(QaError::InvalidPlan("no prompt kinds listed".into()));
        }
        if self.shots.is_empty() && self.rag_ranks.is_empty() {
            return Err(QaError::InvalidPlan(
                "plan needs shots (possibly just 0) or rag_ranks".into(),
            ));
        }
        if let Some(bad) = self.shots.iter().find(|s| **s > 3) {
            return Err(QaError::InvalidPlan(format!("shot count {bad} outside 0..=3")));
        }
        if let Some(bad) = self.rag_ranks.iter().find(|r| !(1..=5).contains(*r)) {
            return Err(QaError::InvalidPlan(format!("rag rank {bad} outside 1..=5")));
        }
        let max_shots = self.shots.iter().copied().max().unwrap_or(0) as usize;
        if max_shots > self.demo_pairs.len() {
            return Err(QaError::InvalidPlan(format!(
                "plan asks for {max_shots}-shot prompts but lists {} demo pairs",
                self.demo_pairs.len()
            )));
        }
        for model in &self.models {
            model.validate()?;
        }
        Ok(())
    }
}

/// One grid cell: a model's answer to one topic under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmAnswerRow {
    pub model_id: String,
    pub prompt_kind: PromptKind,
    /// Demonstration count for prompting runs, absent for RAG rows.
    pub shots: Option<u8>,
    /// Evidence rank for RAG rows, absent for prompting rows.
    pub rag_rank: Option<u32>,
    pub topic_id: u32,
    /// Parsed yes/no; `None` when the cell failed or was unparsable, which
    /// counts as incorrect.
    pub predicted: Option<BinaryStance>,
    pub truth: BinaryStance,
    pub correct: bool,
    pub raw_text: String,
    /// Failure note (provider error, unparsable output, missing evidence).
    pub note: Option<String>,
}

#[derive(Debug, Error)]
pub enum QaError {
    #[error("invalid run plan: {0}")]
    InvalidPlan(String),
    #[error("demonstration question `{0}` also appears in the evaluated topic set")]
    DemoTopicOverlap(String),
    #[error("topic {topic_id} has no rank-{rank} search result")]
    MissingSerp { topic_id: u32, rank: u32 },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Rank(#[from] RankError),
}

/// Answers one prompt, folding provider failures and unparsable output into
/// the row rather than propagating them.
fn answer_cell(
    model: &ModelSpec,
    prompt: &str,
    provider: &dyn CompletionProvider,
    store: &RunStore,
    run_id: &str,
) -> (Option<BinaryStance>, String, Option<String>) {
    match complete(model, prompt, provider, store, run_id) {
        Ok(completion) => match parse_binary_answer(&completion.raw_text) {
            Ok(stance) => (Some(stance), completion.raw_text, None),
            Err(_) => (
                None,
                completion.raw_text,
                Some("unparsable answer".to_string()),
            ),
        },
        Err(e) => (None, String::new(), Some(e.to_string())),
    }
}

fn make_row(
    model: &ModelSpec,
    kind: PromptKind,
    shots: Option<u8>,
    rag_rank: Option<u32>,
    topic: &Topic,
    cell: (Option<BinaryStance>, String, Option<String>),
) -> LlmAnswerRow {
    let (predicted, raw_text, note) = cell;
    LlmAnswerRow {
        model_id: model.model_id.clone(),
        prompt_kind: kind,
        shots,
        rag_rank,
        topic_id: topic.id,
        predicted,
        truth: topic.stance,
        correct: predicted == Some(topic.stance),
        raw_text,
        note,
    }
}

fn sorted_by_id<'a>(topics: &'a [Topic]) -> Vec<&'a Topic> {
    let mut refs: Vec<&Topic> = topics.iter().collect();
    refs.sort_by_key(|t| t.id);
    refs
}

/// Runs the zero-shot grid: every (model, kind, topic) cell.
pub fn run_zero_shot(
    plan: &RunPlan,
    topics: &[Topic],
    provider: &dyn CompletionProvider,
    store: &RunStore,
    run_id: &str,
) -> Result<Vec<LlmAnswerRow>, QaError> {
    plan.validate()?;
    let topics = sorted_by_id(topics);
    let mut rows = Vec::new();
    for model in &plan.models {
        for &kind in &plan.prompt_kinds {
            for topic in &topics {
                let prompt = build_qa_prompt(&topic.question, kind);
                let cell = answer_cell(model, &prompt, provider, store, run_id);
                rows.push(make_row(model, kind, Some(0), None, topic, cell));
            }
        }
    }
    Ok(rows)
}

/// Runs the few-shot grid for every k in `plan.shots` greater than zero,
/// using the first k demonstration pairs in fixed order.
pub fn run_few_shot(
    plan: &RunPlan,
    topics: &[Topic],
    provider: &dyn CompletionProvider,
    store: &RunStore,
    run_id: &str,
) -> Result<Vec<LlmAnswerRow>, QaError> {
    plan.validate()?;
    let evaluated: std::collections::HashSet<String> = topics
        .iter()
        .map(|t| crate::topics::normalize_question(&t.question))
        .collect();
    for (question, _) in &plan.demo_pairs {
        if evaluated.contains(&crate::topics::normalize_question(question)) {
            return Err(QaError::DemoTopicOverlap(question.clone()));
        }
    }
    let mut shot_counts: Vec<u8> = plan.shots.iter().copied().filter(|k| *k > 0).collect();
    shot_counts.sort_unstable();
    shot_counts.dedup();
    let topics = sorted_by_id(topics);
    let mut rows = Vec::new();
    for model in &plan.models {
        for &kind in &plan.prompt_kinds {
            for &k in &shot_counts {
                let demos = &plan.demo_pairs[..k as usize];
                for topic in &topics {
                    let prompt = build_fewshot_prompt(&topic.question, kind, demos)?;
                    let cell = answer_cell(model, &prompt, provider, store, run_id);
                    rows.push(make_row(model, kind, Some(k), None, topic, cell));
                }
            }
        }
    }
    Ok(rows)
}

/// Runs the whole prompting grid (all shot counts in the plan, zero
/// included), ordered by (model, kind, shots, topic id).
pub fn run_prompt_grid(
    plan: &RunPlan,
    topics: &[Topic],
    provider: &dyn CompletionProvider,
    store: &RunStore,
    run_id: &str,
) -> Result<Vec<LlmAnswerRow>, QaError> {
    plan.validate()?;
    let mut shot_counts = plan.shots.clone();
    shot_counts.sort_unstable();
    shot_counts.dedup();
    let evaluated: std::collections::HashSet<String> = topics
        .iter()
        .map(|t| crate::topics::normalize_question(&t.question))
        .collect();
    if shot_counts.iter().any(|k| *k > 0) {
        for (question, _) in &plan.demo_pairs {
            if evaluated.contains(&crate::topics::normalize_question(question)) {
                return Err(QaError::DemoTopicOverlap(question.clone()));
            }
        }
    }
    let topics = sorted_by_id(topics);
    let mut rows = Vec::new();
    for model in &plan.models {
        for &kind in &plan.prompt_kinds {
            for &k in &shot_counts {
                for topic in &topics {
                    let prompt = if k == 0 {
                        build_qa_prompt(&topic.question, kind)
                    } else {
                        build_fewshot_prompt(&topic.question, kind, &plan.demo_pairs[..k as usize])?
                    };
                    let cell = answer_cell(model, &prompt, provider, store, run_id);
                    rows.push(make_row(model, kind, Some(k), None, topic, cell));
                }
            }
        }
    }
    Ok(rows)
}

/// Retrieval-augmented prompt: the evidence-contrasting template, preceded
/// by the kind's context block when it has one.
pub fn build_rag_prompt(question: &str, evidence: &str, kind: PromptKind) -> String {
    let core = format!(
        "Provide an answer to the question using the provided evidence and contrasting it with your internal knowledge. Evidence: {evidence}. Question: {question}. Your answer:"
    );
    match context_block(kind) {
        Some(context) => format!("{context}\n{core}"),
        None => core,
    }
}

/// Evidence text for one (topic, rank): the top passage of that result's
/// page, or the no-evidence literal with a note when the page is unusable.
fn evidence_for(
    serp: &Serp,
    topic: &Topic,
    rank: u32,
    pages: &dyn PageProvider,
    scorer_config: &ScorerConfig,
    window_words: usize,
    stride_words: usize,
    store: &RunStore,
    run_id: &str,
) -> Result<(String, Option<String>), QaError> {
    let entry = serp
        .entries
        .iter()
        .find(|e| e.rank == rank)
        .ok_or(QaError::MissingSerp {
            topic_id: topic.id,
            rank,
        })?;
    let page = cached_fetch_page(&entry.url, pages, store, run_id)?;
    if page.status != PageStatus::Ok {
        return Ok((
            NO_EVIDENCE.to_string(),
            Some(format!("page {} unusable, no evidence fed", entry.url)),
        ));
    }
    let passages = split_passages(&page, window_words, stride_words)?;
    let scorer = scorer_config.build(&passages);
    let best = top_passage(&topic.question, &passages, scorer.as_ref())?;
    Ok((best.passage.text, None))
}

/// Runs the RAG grid: for each rank in the plan, the page at that SERP
/// position supplies the evidence passage.
#[allow(clippy::too_many_arguments)]
pub fn run_rag(
    plan: &RunPlan,
    topics: &[Topic],
    serps: &BTreeMap<u32, Serp>,
    pages: &dyn PageProvider,
    scorer_config: &ScorerConfig,
    provider: &dyn CompletionProvider,
    window_words: usize,
    stride_words: usize,
    store: &RunStore,
    run_id: &str,
) -> Result<Vec<LlmAnswerRow>, QaError> {
    plan.validate()?;
    if plan.rag_ranks.is_empty() {
        return Err(QaError::InvalidPlan("rag run needs rag_ranks".into()));
    }
    let mut ranks = plan.rag_ranks.clone();
    ranks.sort_unstable();
    ranks.dedup();
    let topics = sorted_by_id(topics);

    // Evidence depends only on (topic, rank); compute it once.
    let mut evidence: BTreeMap<(u32, u32), (String, Option<String>)> = BTreeMap::new();
    for topic in &topics {
        let serp = serps.get(&topic.id).ok_or(QaError::MissingSerp {
            topic_id: topic.id,
            rank: 0,
        })?;
        for &rank in &ranks {
            let value = evidence_for(
                serp,
                topic,
                rank,
                pages,
                scorer_config,
                window_words,
                stride_words,
                store,
                run_id,
            )?;
            evidence.insert((topic.id, rank), value);
        }
    }

    let mut rows = Vec::new();
    for model in &plan.models {
        for &kind in &plan.prompt_kinds {
            for &rank in &ranks {
                for topic in &topics {
                    let (text, note) = &evidence[&(topic.id, rank)];
                    let prompt = build_rag_prompt(&topic.question, text, kind);
                    let mut cell = answer_cell(model, &prompt, provider, store, run_id);
                    if cell.2.is_none() {
                        cell.2 = note.clone();
                    }
                    rows.push(make_row(model, kind, None, Some(rank), topic, cell));
                }
            }
        }
    }
    Ok(rows)
}

/// RAG variant concatenating the top passages of ranks 1..=k, joined by
/// blank lines in rank order, into a single evidence block.
#[allow(clippy::too_many_arguments)]
pub fn run_rag_concat(
    plan: &RunPlan,
    topics: &[Topic],
    serps: &BTreeMap<u32, Serp>,
    pages: &dyn PageProvider,
    scorer_config: &ScorerConfig,
    provider: &dyn CompletionProvider,
    concat_top: u32,
    window_words: usize,
    stride_words: usize,
    store: &RunStore,
    run_id: &str,
) -> Result<Vec<LlmAnswerRow>, QaError> {
    plan.validate()?;
    if !(1..=5).contains(&concat_top) {
        return Err(QaError::InvalidPlan(format!(
            "concat_top {concat_top} outside 1..=5"
        )));
    }
    let topics = sorted_by_id(topics);
    let mut evidence: BTreeMap<u32, (String, Option<String>)> = BTreeMap::new();
    for topic in &topics {
        let serp = serps.get(&topic.id).ok_or(QaError::MissingSerp {
            topic_id: topic.id,
            rank: 0,
        })?;
        let mut pieces = Vec::new();
        let mut notes = Vec::new();
        for rank in 1..=concat_top {
            let (text, note) = evidence_for(
                serp,
                topic,
                rank,
                pages,
                scorer_config,
                window_words,
                stride_words,
                store,
                run_id,
            )?;
            if note.is_none() {
                pieces.push(text);
            } else {
                notes.push(note.unwrap());
            }
        }
        let value = if pieces.is_empty() {
            (NO_EVIDENCE.to_string(), Some(notes.join("; ")))
        } else {
            let note = if notes.is_empty() { None } else { Some(notes.join("; ")) };
            (pieces.join("\n\n"), note)
        };
        evidence.insert(topic.id, value);
    }

    let mut rows = Vec::new();
    for model in &plan.models {
        for &kind in &plan.prompt_kinds {
            for topic in &topics {
                let (text, note) = &evidence[&topic.id];
                let prompt = build_rag_prompt(&topic.question, text, kind);
                let mut cell = answer_cell(model, &prompt, provider, store, run_id);
                if cell.2.is_none() {
                    cell.2 = note.clone();
                }
                rows.push(make_row(model, kind, None, Some(concat_top), topic, cell));
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::prompts::{default_demos, prompt_hash};
    use crate::llm::StubResponder;
    use crate::serp::{Engine, SerpEntry};
    use std::collections::HashMap;

    fn topic(id: u32, question: &str, stance: BinaryStance) -> Topic {
        Topic::new(
            id,
            format!("query {id}"),
            question,
            stance,
            "narrative".into(),
            TopicYear::Y2022,
            vec![],
        )
        .unwrap()
    }

    fn topics() -> Vec<Topic> {
        vec![
            topic(1, "Does garlic lower blood pressure?", BinaryStance::Yes),
            topic(2, "Can drinking bleach cure COVID-19?", BinaryStance::No),
        ]
    }

    fn plan(models: usize, shots: Vec<u8>) -> RunPlan {
        RunPlan {
            models: (0..models)
                .map(|i| ModelSpec::new("stub", &format!("model-{i}")))
                .collect(),
            prompt_kinds: PromptKind::ALL.to_vec(),
            shots,
            rag_ranks: vec![],
            topic_year: TopicYear::Y2022,
            demo_pairs: default_demos(),
        }
    }

    /// Stub that answers the truth for every known question, regardless of
    /// prompt framing.
    fn truthful_stub(topics: &[Topic], plan: &RunPlan) -> StubResponder {
        let mut map = HashMap::new();
        for topic in topics {
            let answer = topic.stance.as_lower().to_string();
            for &kind in &plan.prompt_kinds {
                map.insert(prompt_hash(&build_qa_prompt(&topic.question, kind)), answer.clone());
                for k in 1..=3usize {
                    let prompt =
                        build_fewshot_prompt(&topic.question, kind, &plan.demo_pairs[..k]).unwrap();
                    map.insert(prompt_hash(&prompt), answer.clone());
                }
            }
        }
        StubResponder::new(map)
    }

    #[test]
    fn zero_shot_grid_has_full_cardinality() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let topics = topics();
        let plan = plan(2, vec![0]);
        let stub = truthful_stub(&topics, &plan);
        let rows = run_zero_shot(&plan, &topics, &stub, &store, "r").unwrap();
        assert_eq!(rows.len(), 2 * 3 * 2);
        assert!(rows.iter().all(|r| r.correct));
        assert!(rows.iter().all(|r| r.shots == Some(0)));
    }

    #[test]
    fn provider_failures_become_incorrect_cells_not_errors() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let topics = topics();
        let plan = plan(1, vec![0]);
        // Empty stub: every completion fails.
        let stub = StubResponder::new(HashMap::new());
        let rows = run_zero_shot(&plan, &topics, &stub, &store, "r").unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| !r.correct && r.predicted.is_none()));
        assert!(rows.iter().all(|r| r.note.is_some()));
    }

    #[test]
    fn unparsable_output_counts_as_incorrect() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let topics = vec![topic(1, "Does garlic lower blood pressure?", BinaryStance::Yes)];
        let plan = RunPlan {
            prompt_kinds: vec![PromptKind::NoContext],
            ..plan(1, vec![0])
        };
        let mut map = HashMap::new();
        map.insert(
            prompt_hash(&build_qa_prompt(&topics[0].question, PromptKind::NoContext)),
            "It depends".to_string(),
        );
        let rows = run_zero_shot(&plan, &topics, &StubResponder::new(map), &store, "r").unwrap();
        assert_eq!(rows.len(), 1);
        assert!(!rows[0].correct);
        assert_eq!(rows[0].raw_text, "It depends");
        assert_eq!(rows[0].note.as_deref(), Some("unparsable answer"));
    }

    #[test]
    fn full_grid_cardinality_with_all_shot_counts() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let topics = topics();
        let plan = plan(2, vec![0, 1, 2, 3]);
        let stub = truthful_stub(&topics, &plan);
        let rows = run_prompt_grid(&plan, &topics, &stub, &store, "r").unwrap();
        // 2 models x 3 kinds x 4 shot counts x 2 topics.
        assert_eq!(rows.len(), 48);
        assert!(rows.iter().all(|r| r.predicted.is_some()));
    }

    #[test]
    fn demo_overlapping_a_topic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let topics = vec![topic(1, "Does yoga help manage asthma?", BinaryStance::Yes)];
        let plan = plan(1, vec![1, 2]);
        let stub = StubResponder::new(HashMap::new());
        let err = run_few_shot(&plan, &topics, &stub, &store, "r").unwrap_err();
        assert!(matches!(err, QaError::DemoTopicOverlap(_)));
    }

    #[test]
    fn rag_prompt_template_is_fixed() {
        let prompt = build_rag_prompt(
            "Can Vitamin D cure COVID-19?",
            "Vitamin D supports immunity",
            PromptKind::NoContext,
        );
        assert_eq!(
            prompt,
            "Provide an answer to the question using the provided evidence and contrasting it with your internal knowledge. Evidence: Vitamin D supports immunity. Question: Can Vitamin D cure COVID-19?. Your answer:"
        );
        let expert = build_rag_prompt("Q?", "E", PromptKind::Expert);
        assert!(expert.starts_with("We are a committee of leading scientific experts"));
        assert!(expert.contains("contrasting it with your internal knowledge"));
    }

    #[test]
    fn rag_feeds_rank_specific_evidence() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let topics = vec![topic(1, "Does garlic lower blood pressure?", BinaryStance::Yes)];
        let plan = RunPlan {
            prompt_kinds: vec![PromptKind::NoContext],
            shots: vec![],
            rag_ranks: vec![1, 2],
            ..plan(1, vec![])
        };

        let serp = Serp {
            engine: Engine::Google,
            topic_id: 1,
            entries: vec![
                SerpEntry { rank: 1, url: "https://a.com/1".into(), title: "a".into(), snippet: None },
                SerpEntry { rank: 2, url: "https://b.com/2".into(), title: "b".into(), snippet: None },
            ],
            retrieved_at: chrono::Utc::now(),
        };
        let serps: BTreeMap<u32, Serp> = [(1u32, serp)].into();

        struct MapPages(HashMap<String, String>);
        impl PageProvider for MapPages {
            fn fetch(&self, url: &str) -> Result<String, String> {
                self.0.get(url).cloned().ok_or_else(|| "missing".into())
            }
            fn name(&self) -> &str {
                "map"
            }
        }
        let mut pagemap = HashMap::new();
        pagemap.insert("https://a.com/1".to_string(), "<p>garlic lowers pressure</p>".to_string());
        // b.com missing: rank 2 evidence falls back to the literal.
        let pages = MapPages(pagemap);

        let mut responses = HashMap::new();
        responses.insert(
            prompt_hash(&build_rag_prompt(
                &topics[0].question,
                "garlic lowers pressure",
                PromptKind::NoContext,
            )),
            "yes".to_string(),
        );
        responses.insert(
            prompt_hash(&build_rag_prompt(
                &topics[0].question,
                NO_EVIDENCE,
                PromptKind::NoContext,
            )),
            "no".to_string(),
        );
        let stub = StubResponder::new(responses);

        let rows = run_rag(
            &plan,
            &topics,
            &serps,
            &pages,
            &ScorerConfig::Bm25,
            &stub,
            120,
            60,
            &store,
            "r",
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        let rank1 = rows.iter().find(|r| r.rag_rank == Some(1)).unwrap();
        let rank2 = rows.iter().find(|r| r.rag_rank == Some(2)).unwrap();
        assert!(rank1.correct);
        assert!(!rank2.correct);
        assert!(rank2.note.as_deref().unwrap().contains("unusable"));
    }

    #[test]
    fn rag_missing_rank_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let topics = vec![topic(1, "Does garlic lower blood pressure?", BinaryStance::Yes)];
        let plan = RunPlan {
            prompt_kinds: vec![PromptKind::NoContext],
            shots: vec![],
            rag_ranks: vec![3],
            ..plan(1, vec![])
        };
        let serp = Serp {
            engine: Engine::Google,
            topic_id: 1,
            entries: vec![SerpEntry { rank: 1, url: "https://a.com/1".into(), title: "a".into(), snippet: None }],
            retrieved_at: chrono::Utc::now(),
        };
        let serps: BTreeMap<u32, Serp> = [(1u32, serp)].into();
        struct NoPages;
        impl PageProvider for NoPages {
            fn fetch(&self, _: &str) -> Result<String, String> {
                Err("none".into())
            }
            fn name(&self) -> &str {
                "none"
            }
        }
        let err = run_rag(
            &plan,
            &topics,
            &serps,
            &NoPages,
            &ScorerConfig::Bm25,
            &StubResponder::new(HashMap::new()),
            120,
            60,
            &store,
            "r",
        )
        .unwrap_err();
        assert!(matches!(err, QaError::MissingSerp { topic_id: 1, rank: 3 }));
    }
}
