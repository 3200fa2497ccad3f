//! Benchmark contamination probing: compare completions from a general
//! instruction against a guided one that names the dataset, and measure
//! which lands closer to the ground-truth narrative.
//!
//! This heuristic has high precision but low recall: a flagged model very
//! likely saw the topics in training, an unflagged one may still have.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{complete, CompletionProvider, LlmError, ModelSpec};
use crate::rank::tokenize;
use crate::stats::{wilcoxon_signed_rank, MetricsError};
use crate::store::RunStore;
use crate::topics::{Topic, TopicYear};

/// The two probe completions for one topic plus the reference narrative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionPair {
    pub topic_id: u32,
    pub general_text: String,
    pub guided_text: String,
    /// The topic's narrative field.
    pub reference: String,
}

/// Similarity of one completion to the reference under each metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTriple {
    pub levenshtein: f64,
    pub rouge_l: f64,
    /// Present only when an external semantic scorer is configured.
    pub semantic: Option<f64>,
}

#[derive(Debug, Error)]
pub enum MemorizationError {
    #[error("contamination report needs at least 2 completion pairs, got {0}")]
    TooFewPairs(usize),
    #[error("topic {0} has an empty narrative, nothing to compare against")]
    EmptyNarrative(u32),
    #[error("semantic scorer failed: {0}")]
    SemanticScorer(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Stats(#[from] MetricsError),
}

/// Instruction that never mentions the dataset.
pub fn build_general_prompt(topic: &Topic) -> String {
    format!(
        "Complete the narrative field based on the query, question and answer fields such that the narrative provides an explanation for the answer to the given question. Query: {}, Question: {}, Answer: {}, Narrative:",
        topic.query,
        topic.question,
        topic.stance.as_lower()
    )
}

/// Instruction that names the dataset and demands its original wording.
pub fn build_guided_prompt(topic: &Topic, year: TopicYear) -> String {
    format!(
        "You are provided with the query, question and answer fields of a topic from the TREC {} Health Misinformation topic set. Complete the narrative field of the topic as exactly appeared in the dataset. Only rely in the original form of the topic in the dataset to complete the narrative field. Query: {}, Question: {}, Answer: {}, Narrative:",
        year.as_u16(),
        topic.query,
        topic.question,
        topic.stance.as_lower()
    )
}

/// Character-level similarity: 1 − edit_distance / max(len), with unit
/// insert/delete/substitute costs over Unicode scalar values. Two empty
/// strings are identical (1.0).
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    let a_chars: Vec<char> = a.chars().collect();
    let b_chars: Vec<char> = b.chars().collect();
    let max_len = a_chars.len().max(b_chars.len());
    if max_len == 0 {
        return 1.0;
    }
    let distance = levenshtein_distance(&a_chars, &b_chars);
    1.0 - distance as f64 / max_len as f64
}

fn levenshtein_distance(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut previous: Vec<usize> = (0..=b.len()).collect();
    let mut current = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        current[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let substitution = previous[j] + usize::from(ca != cb);
            current[j + 1] = substitution.min(previous[j + 1] + 1).min(current[j] + 1);
        }
        std::mem::swap(&mut previous, &mut current);
    }
    previous[b.len()]
}

/// Token-level longest-common-subsequence F1 between candidate and
/// reference. Both token sequences empty is a perfect match; an LCS of zero
/// scores zero.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() && refr.is_empty() {
        return 1.0;
    }
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let lcs = lcs_length(&cand, &refr);
    if lcs == 0 {
        return 0.0;
    }
    let precision = lcs as f64 / cand.len() as f64;
    let recall = lcs as f64 / refr.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn lcs_length(a: &[String], b: &[String]) -> usize {
    let mut previous = vec![0usize; b.len() + 1];
    let mut current = vec![0usize; b.len() + 1];
    for ca in a {
        for (j, cb) in b.iter().enumerate() {
            current[j + 1] = if ca == cb {
                previous[j] + 1
            } else {
                previous[j + 1].max(current[j])
            };
        }
        std::mem::swap(&mut previous, &mut current);
    }
    previous[b.len()]
}

/// External similarity scorer (the BLEURT slot). Never reimplemented in
/// process; reached over the same wire contract as the passage scorer with
/// the reference in the question slot.
pub trait SemanticScorer {
    fn similarity(&self, reference: &str, candidate: &str) -> Result<f64, MemorizationError>;
}

/// HTTP semantic scorer: POST `{question: reference, passages: [candidate]}`
/// → `{scores: [value]}`. Scores are clamped into [0, 1].
pub struct HttpSemanticScorer {
    endpoint: String,
    policy: std::sync::Arc<crate::policy::NetworkPolicy>,
    client: reqwest::blocking::Client,
}

impl HttpSemanticScorer {
    pub fn new(endpoint: &str, policy: std::sync::Arc<crate::policy::NetworkPolicy>) -> Self {
        HttpSemanticScorer {
            endpoint: endpoint.to_string(),
            policy,
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl SemanticScorer for HttpSemanticScorer {
    fn similarity(&self, reference: &str, candidate: &str) -> Result<f64, MemorizationError> {
        self.policy
            .authorize_live_call(&self.endpoint)
            .map_err(|e| MemorizationError::SemanticScorer(e.to_string()))?;
        #[derive(Serialize)]
        struct Request<'a> {
            question: &'a str,
            passages: Vec<&'a str>,
        }
        #[derive(Deserialize)]
        struct Response {
            scores: Vec<f64>,
        }
        let response = self
            .client
            .post(&self.endpoint)
            .json(&Request {
                question: reference,
                passages: vec![candidate],
            })
            .send()
            .map_err(|e| MemorizationError::SemanticScorer(e.to_string()))?;
        if !response.status().is_success() {
            return Err(MemorizationError::SemanticScorer(format!(
                "http status {}",
                response.status()
            )));
        }
        let body: Response = response
            .json()
            .map_err(|e| MemorizationError::SemanticScorer(format!("malformed body: {e}")))?;
        let score = body
            .scores
            .first()
            .copied()
            .ok_or_else(|| MemorizationError::SemanticScorer("empty scores array".into()))?;
        Ok(score.clamp(0.0, 1.0))
    }
}

/// Similarity of one candidate text against the reference.
pub fn similarity_triple(
    candidate: &str,
    reference: &str,
    scorer: Option<&dyn SemanticScorer>,
) -> Result<SimilarityTriple, MemorizationError> {
    let semantic = match scorer {
        Some(s) => Some(s.similarity(reference, candidate)?),
        None => None,
    };
    Ok(SimilarityTriple {
        levenshtein: levenshtein_similarity(candidate, reference),
        rouge_l: rouge_l(candidate, reference),
        semantic,
    })
}

/// Collects the general/guided completion pair for every topic.
pub fn gather_pairs(
    topics: &[Topic],
    year: TopicYear,
    model: &ModelSpec,
    provider: &dyn CompletionProvider,
    store: &RunStore,
    run_id: &str,
) -> Result<Vec<CompletionPair>, MemorizationError> {
    let mut pairs = Vec::with_capacity(topics.len());
    for topic in topics {
        if topic.narrative.is_empty() {
            return Err(MemorizationError::EmptyNarrative(topic.id));
        }
        let general = complete(model, &build_general_prompt(topic), provider, store, run_id)?;
        let guided = complete(
            model,
            &build_guided_prompt(topic, year),
            provider,
            store,
            run_id,
        )?;
        pairs.push(CompletionPair {
            topic_id: topic.id,
            general_text: general.raw_text,
            guided_text: guided.raw_text,
            reference: topic.narrative.clone(),
        });
    }
    Ok(pairs)
}

/// One metric's verdict in the contamination report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVerdict {
    pub metric: String,
    pub mean_general: f64,
    pub mean_guided: f64,
    /// One-sided Wilcoxon p for guided > general.
    pub p_value: f64,
    pub flagged: bool,
    /// True when every per-topic difference was zero.
    pub degenerate: bool,
}

/// Contamination verdicts per metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationReport {
    pub verdicts: Vec<MetricVerdict>,
    pub pairs: usize,
}

/// Compares guided vs general similarity per metric: a metric is flagged
/// when the guided mean exceeds the general mean and the one-sided Wilcoxon
/// signed-rank test over per-topic differences is significant at 0.05.
pub fn contamination_report(
    pairs: &[CompletionPair],
    scorer: Option<&dyn SemanticScorer>,
) -> Result<ContaminationReport, MemorizationError> {
    if pairs.len() < 2 {
        return Err(MemorizationError::TooFewPairs(pairs.len()));
    }
    let mut general: Vec<SimilarityTriple> = Vec::with_capacity(pairs.len());
    let mut guided: Vec<SimilarityTriple> = Vec::with_capacity(pairs.len());
    for pair in pairs {
        general.push(similarity_triple(&pair.general_text, &pair.reference, scorer)?);
        guided.push(similarity_triple(&pair.guided_text, &pair.reference, scorer)?);
    }

    let mut metrics: Vec<(&str, Vec<f64>, Vec<f64>)> = vec![
        (
            "levenshtein",
            general.iter().map(|t| t.levenshtein).collect(),
            guided.iter().map(|t| t.levenshtein).collect(),
        ),
        (
            "rouge_l",
            general.iter().map(|t| t.rouge_l).collect(),
            guided.iter().map(|t| t.rouge_l).collect(),
        ),
    ];
    if scorer.is_some() {
        metrics.push((
            "semantic",
            general.iter().map(|t| t.semantic.unwrap_or(0.0)).collect(),
            guided.iter().map(|t| t.semantic.unwrap_or(0.0)).collect(),
        ));
    }

    let mut verdicts = Vec::new();
    for (name, general_scores, guided_scores) in metrics {
        let n = general_scores.len() as f64;
        let mean_general = general_scores.iter().sum::<f64>() / n;
        let mean_guided = guided_scores.iter().sum::<f64>() / n;
        let diffs: Vec<f64> = guided_scores
            .iter()
            .zip(&general_scores)
            .map(|(g, b)| g - b)
            .collect();
        let test = wilcoxon_signed_rank(&diffs)?;
        verdicts.push(MetricVerdict {
            metric: name.to_string(),
            mean_general,
            mean_guided,
            p_value: test.p_value,
            flagged: mean_guided > mean_general && test.p_value < 0.05,
            degenerate: test.degenerate,
        });
    }
    Ok(ContaminationReport {
        verdicts,
        pairs: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topics::BinaryStance;

    fn topic() -> Topic {
        Topic::new(
            42,
            "ginger nausea".into(),
            "Does ginger reduce nausea?",
            BinaryStance::Yes,
            "Ginger has been shown to reduce nausea in several trials.".into(),
            TopicYear::Y2021,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn general_prompt_fills_all_fields_without_naming_the_dataset() {
        let prompt = build_general_prompt(&topic());
        assert!(prompt.contains("the narrative provides an explanation for the answer"));
        assert!(prompt.contains("Query: ginger nausea,"));
        assert!(prompt.contains(", Answer: yes,"));
        assert!(prompt.ends_with("Narrative:"));
        assert!(!prompt.contains("TREC"));
    }

    #[test]
    fn guided_prompt_names_the_dataset_and_year() {
        let prompt = build_guided_prompt(&topic(), TopicYear::Y2021);
        assert!(prompt.contains("TREC 2021 Health Misinformation topic set"));
        assert!(prompt.contains("Only rely in the original form of the topic"));
        assert_ne!(prompt, build_general_prompt(&topic()));
    }

    #[test]
    fn levenshtein_similarity_matches_hand_values() {
        assert_eq!(levenshtein_similarity("abc", "abc"), 1.0);
        assert_eq!(levenshtein_similarity("", "abc"), 0.0);
        assert_eq!(levenshtein_similarity("", ""), 1.0);
        // kitten -> sitting needs 3 edits over max length 7.
        let expected = 1.0 - 3.0 / 7.0;
        assert!((levenshtein_similarity("kitten", "sitting") - expected).abs() < 1e-12);
    }

    #[test]
    fn levenshtein_similarity_is_symmetric() {
        let pairs = [("kitten", "sitting"), ("", "x"), ("añejo", "anejo")];
        for (a, b) in pairs {
            assert_eq!(levenshtein_similarity(a, b), levenshtein_similarity(b, a));
        }
    }

    #[test]
    fn rouge_l_matches_hand_values() {
        assert_eq!(rouge_l("the cat sat", "the cat sat"), 1.0);
        assert_eq!(rouge_l("alpha beta", "gamma delta"), 0.0);
        assert_eq!(rouge_l("", ""), 1.0);
        assert_eq!(rouge_l("something", ""), 0.0);
        // LCS("the cat sat", "the dog sat") = 2; P = R = 2/3; F1 = 2/3.
        assert!((rouge_l("the cat sat", "the dog sat") - 2.0 / 3.0).abs() < 1e-12);
    }

    fn pair(id: u32, general: &str, guided: &str, reference: &str) -> CompletionPair {
        CompletionPair {
            topic_id: id,
            general_text: general.to_string(),
            guided_text: guided.to_string(),
            reference: reference.to_string(),
        }
    }

    #[test]
    fn identical_completions_are_never_flagged() {
        let pairs: Vec<_> = (0..4)
            .map(|i| pair(i, "same text", "same text", "reference text"))
            .collect();
        let report = contamination_report(&pairs, None).unwrap();
        for verdict in &report.verdicts {
            assert!(!verdict.flagged);
            assert!(verdict.degenerate);
            assert_eq!(verdict.p_value, 1.0);
        }
    }

    #[test]
    fn verbatim_guided_recall_is_flagged() {
        // Guided output reproduces the narrative; general output is noise.
        let references = [
            "ginger reduces nausea in most trials",
            "masks lower transmission of airborne viruses",
            "bleach ingestion is toxic and never curative",
            "yoga breathing improves asthma control modestly",
            "ankle braces immobilize but do not heal tendons",
            "vitamin c does not prevent the common cold",
        ];
        let pairs: Vec<_> = references
            .iter()
            .enumerate()
            .map(|(i, r)| pair(i as u32, "completely unrelated words here", r, r))
            .collect();
        let report = contamination_report(&pairs, None).unwrap();
        let lev = report.verdicts.iter().find(|v| v.metric == "levenshtein").unwrap();
        assert!(lev.flagged);
        assert!((lev.p_value - 1.0 / 64.0).abs() < 1e-12);
        assert_eq!(lev.mean_guided, 1.0);
    }

    #[test]
    fn guided_worse_than_general_is_not_flagged() {
        let pairs: Vec<_> = (0..6)
            .map(|i| pair(i, "reference text exactly", "unrelated words", "reference text exactly"))
            .collect();
        let report = contamination_report(&pairs, None).unwrap();
        assert!(report.verdicts.iter().all(|v| !v.flagged));
    }

    #[test]
    fn too_few_pairs_is_an_error() {
        let pairs = vec![pair(1, "a", "b", "c")];
        assert!(matches!(
            contamination_report(&pairs, None),
            Err(MemorizationError::TooFewPairs(1))
        ));
    }

    #[test]
    fn gather_pairs_requires_narratives() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let mut bare = topic();
        bare.narrative = String::new();
        let model = ModelSpec::new("stub", "m");
        let stub = crate::llm::StubResponder::new(Default::default());
        let err = gather_pairs(&[bare], TopicYear::Y2021, &model, &stub, &store, "r").unwrap_err();
        assert!(matches!(err, MemorizationError::EmptyNarrative(42)));
    }

    #[test]
    fn gather_pairs_collects_both_completions() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let topic = topic();
        let model = ModelSpec::new("stub", "m");
        let mut map = std::collections::HashMap::new();
        map.insert(
            crate::llm::prompts::prompt_hash(&build_general_prompt(&topic)),
            "general completion".to_string(),
        );
        map.insert(
            crate::llm::prompts::prompt_hash(&build_guided_prompt(&topic, TopicYear::Y2021)),
            "guided completion".to_string(),
        );
        let stub = crate::llm::StubResponder::new(map);
        let pairs = gather_pairs(&[topic], TopicYear::Y2021, &model, &stub, &store, "r").unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].general_text, "general completion");
        assert_eq!(pairs[0].guided_text, "guided completion");
    }
}
