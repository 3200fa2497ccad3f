//! Passage relevance scoring and top-passage selection.
//!
//! Two scorers are built in: Okapi BM25 over the page set under evaluation,
//! and a remote neural scorer reached over a small JSON contract. Scores
//! from different scorers are never comparable.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::Passage;
use crate::policy::{NetworkPolicy, PolicyError};

/// A passage with its relevance score against one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage: Passage,
    pub score: f64,
    pub scorer_id: String,
}

#[derive(Debug, Error)]
pub enum RankError {
    #[error("no passages to score")]
    EmptyInput,
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("scorer returned {got} scores for {expected} passages")]
    ScoreCountMismatch { expected: usize, got: usize },
    #[error("scorer returned a non-finite score")]
    NonFiniteScore,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Scores passages against a question. Implementations must be
/// deterministic for identical inputs.
pub trait PassageScorer {
    fn scorer_id(&self) -> &str;
    fn score(&self, question: &str, passages: &[Passage]) -> Result<Vec<f64>, RankError>;
}

/// Lowercase alphanumeric tokens, split on everything else, no stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Okapi BM25 with the non-negative idf variant
/// `ln(1 + (N - df + 0.5) / (df + 0.5))`.
///
/// Corpus statistics (document frequencies, average length) come from the
/// passage set the scorer was built over, which by convention is every
/// passage of the page set under evaluation for one (engine, topic) pair.
pub struct Bm25Scorer {
    k1: f64,
    b: f64,
    df: HashMap<String, usize>,
    corpus_size: usize,
    avg_len: f64,
}

impl Bm25Scorer {
    pub const DEFAULT_K1: f64 = 1.2;
    pub const DEFAULT_B: f64 = 0.75;

    pub fn from_corpus(corpus: &[Passage]) -> Self {
        Self::from_corpus_with_params(corpus, Self::DEFAULT_K1, Self::DEFAULT_B)
    }

    pub fn from_corpus_with_params(corpus: &[Passage], k1: f64, b: f64) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut total_len = 0usize;
        for passage in corpus {
            let tokens = tokenize(&passage.text);
            total_len += tokens.len();
            let unique: std::collections::HashSet<String> = tokens.into_iter().collect();
            for token in unique {
                *df.entry(token).or_insert(0) += 1;
            }
        }
        let corpus_size = corpus.len();
        let avg_len = if corpus_size == 0 {
            0.0
        } else {
            total_len as f64 / corpus_size as f64
        };
        Bm25Scorer {
            k1,
            b,
            df,
            corpus_size,
            avg_len,
        }
    }

    fn idf(&self, term: &str) -> f64 {
        let df = *self.df.get(term).unwrap_or(&0) as f64;
        let n = self.corpus_size as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn score_one(&self, query_tokens: &[String], passage: &Passage) -> f64 {
        let tokens = tokenize(&passage.text);
        let mut tf: HashMap<&str, usize> = HashMap::new();
        for token in &tokens {
            *tf.entry(token.as_str()).or_insert(0) += 1;
        }
        let dl = tokens.len() as f64;
        let norm = if self.avg_len > 0.0 { dl / self.avg_len } else { 0.0 };
        let mut score = 0.0;
        // Query terms contribute once per occurrence, so repeated terms in a
        // question weigh proportionally more.
        for term in query_tokens {
            let f = *tf.get(term.as_str()).unwrap_or(&0) as f64;
            if f == 0.0 {
                continue;
            }
            let saturation = (f * (self.k1 + 1.0)) / (f + self.k1 * (1.0 - self.b + self.b * norm));
            score += self.idf(term) * saturation;
        }
        score
    }
}

impl PassageScorer for Bm25Scorer {
    fn scorer_id(&self) -> &str {
        "bm25"
    }

    fn score(&self, question: &str, passages: &[Passage]) -> Result<Vec<f64>, RankError> {
        let query_tokens = tokenize(question);
        Ok(passages
            .iter()
            .map(|p| self.score_one(&query_tokens, p))
            .collect())
    }
}

/// Remote scorer contract: POST `{question, passages: [strings]}` →
/// `{scores: [numbers]}`, same length and order.
pub struct NeuralScorer {
    endpoint: String,
    policy: Arc<NetworkPolicy>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    question: &'a str,
    passages: Vec<&'a str>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

impl NeuralScorer {
    pub fn new(endpoint: &str, policy: Arc<NetworkPolicy>) -> Self {
        NeuralScorer {
            endpoint: endpoint.to_string(),
            policy,
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl PassageScorer for NeuralScorer {
    fn scorer_id(&self) -> &str {
        "neural"
    }

    fn score(&self, question: &str, passages: &[Passage]) -> Result<Vec<f64>, RankError> {
        self.policy.authorize_live_call(&self.endpoint)?;
        let request = ScoreRequest {
            question,
            passages: passages.iter().map(|p| p.text.as_str()).collect(),
        };
        let response = self
            .client
            .post(&self.endpoint)
            .json(&request)
            .send()
            .map_err(|e| RankError::ScorerUnavailable(e.to_string()))?;
        if !response.status().is_success() {
            return Err(RankError::ScorerUnavailable(format!(
                "http status {}",
                response.status()
            )));
        }
        let body: ScoreResponse = response
            .json()
            .map_err(|e| RankError::ScorerUnavailable(format!("malformed body: {e}")))?;
        if body.scores.len() != passages.len() {
            return Err(RankError::ScoreCountMismatch {
                expected: passages.len(),
                got: body.scores.len(),
            });
        }
        Ok(body.scores)
    }
}

/// Declarative scorer choice, turned into a concrete scorer once the corpus
/// under evaluation is known. The corpus only matters for BM25; the remote
/// scorer carries its own model.
pub enum ScorerConfig {
    Bm25,
    Neural {
        endpoint: String,
        policy: Arc<NetworkPolicy>,
    },
}

impl ScorerConfig {
    pub fn build(&self, corpus: &[Passage]) -> Box<dyn PassageScorer> {
        match self {
            ScorerConfig::Bm25 => Box::new(Bm25Scorer::from_corpus(corpus)),
            ScorerConfig::Neural { endpoint, policy } => {
                Box::new(NeuralScorer::new(endpoint, Arc::clone(policy)))
            }
        }
    }
}

/// Scores every passage, order-preserving, one output per input.
pub fn score_passages(
    question: &str,
    passages: &[Passage],
    scorer: &dyn PassageScorer,
) -> Result<Vec<ScoredPassage>, RankError> {
    if passages.is_empty() {
        return Err(RankError::EmptyInput);
    }
    let scores = scorer.score(question, passages)?;
    if scores.len() != passages.len() {
        return Err(RankError::ScoreCountMismatch {
            expected: passages.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(RankError::NonFiniteScore);
    }
    Ok(passages
        .iter()
        .zip(scores)
        .map(|(passage, score)| ScoredPassage {
            passage: passage.clone(),
            score,
            scorer_id: scorer.scorer_id().to_string(),
        })
        .collect())
}

/// Picks the most relevant passage. Ties go to the lowest passage index and
/// then the lexicographically smallest source URL, so the winner does not
/// depend on input order.
pub fn top_passage(
    question: &str,
    passages: &[Passage],
    scorer: &dyn PassageScorer,
) -> Result<ScoredPassage, RankError> {
    let scored = score_passages(question, passages, scorer)?;
    scored
        .into_iter()
        .max_by(|a, b| {
            a.score
                .partial_cmp(&b.score)
                .expect("scores validated finite")
                .then_with(|| b.passage.index.cmp(&a.passage.index))
                .then_with(|| b.passage.source_url.cmp(&a.passage.source_url))
        })
        .ok_or(RankError::EmptyInput)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn passage(index: usize, text: &str) -> Passage {
        Passage {
            source_url: "https://example.com/p".into(),
            index,
            text: text.to_string(),
            word_span: (0, text.split_whitespace().count()),
        }
    }

    #[test]
    fn tokenizer_lowercases_and_splits_on_non_alphanumerics() {
        assert_eq!(
            tokenize("Does Yoga-help, ASTHMA?"),
            vec!["does", "yoga", "help", "asthma"]
        );
        assert_eq!(tokenize("...!?"), Vec::<String>::new());
    }

    #[test]
    fn matching_passage_dominates_nonmatching() {
        let passages = vec![
            passage(0, "yoga breathing exercises can ease asthma symptoms"),
            passage(1, "car engines require regular oil changes"),
        ];
        let scorer = Bm25Scorer::from_corpus(&passages);
        let scored = score_passages("yoga asthma", &passages, &scorer).unwrap();
        assert!(scored[0].score > scored[1].score);
        assert_eq!(scored[1].score, 0.0);
    }

    #[test]
    fn identical_passages_score_identically() {
        let passages = vec![passage(0, "alpha beta gamma"), passage(1, "alpha beta gamma")];
        let scorer = Bm25Scorer::from_corpus(&passages);
        let scored = score_passages("alpha", &passages, &scorer).unwrap();
        assert_eq!(scored[0].score, scored[1].score);
    }

    #[test]
    fn single_passage_single_occurrence_matches_formula() {
        // One document, the query term once among five words. The document
        // length equals the average, so the length normalization cancels and
        // the term-frequency factor is exactly 1, leaving score = idf =
        // ln(1 + (1 - 1 + 0.5) / (1 + 0.5)) = ln(4/3).
        let passages = vec![passage(0, "garlic lowers blood pressure naturally")];
        let scorer = Bm25Scorer::from_corpus(&passages);
        let scored = score_passages("garlic", &passages, &scorer).unwrap();
        let expected = (4.0f64 / 3.0).ln();
        assert!((scored[0].score - expected).abs() < 1e-12);
    }

    #[test]
    fn top_passage_breaks_ties_by_earliest_index() {
        let passages = vec![
            passage(0, "nothing relevant here at all"),
            passage(1, "garlic garlic garlic is discussed"),
            passage(2, "garlic garlic garlic is discussed"),
        ];
        let scorer = Bm25Scorer::from_corpus(&passages);
        let top = top_passage("garlic", &passages, &scorer).unwrap();
        assert_eq!(top.passage.index, 1);
    }

    #[test]
    fn top_passage_is_permutation_invariant() {
        let passages = vec![
            passage(0, "irrelevant filler text"),
            passage(1, "honey soothes a sore throat"),
            passage(2, "honey is sweet"),
        ];
        let scorer = Bm25Scorer::from_corpus(&passages);
        let forward = top_passage("honey sore throat", &passages, &scorer).unwrap();
        let mut reversed = passages.clone();
        reversed.reverse();
        let backward = top_passage("honey sore throat", &reversed, &scorer).unwrap();
        assert_eq!(forward.passage, backward.passage);
        assert_eq!(forward.score, backward.score);
    }

    #[test]
    fn all_zero_scores_select_index_zero() {
        let passages = vec![passage(0, "aaa"), passage(1, "bbb"), passage(2, "ccc")];
        let scorer = Bm25Scorer::from_corpus(&passages);
        let top = top_passage("zzz", &passages, &scorer).unwrap();
        assert_eq!(top.passage.index, 0);
        assert_eq!(top.score, 0.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        let scorer = Bm25Scorer::from_corpus(&[]);
        assert!(matches!(
            score_passages("q", &[], &scorer),
            Err(RankError::EmptyInput)
        ));
    }

    #[test]
    fn unreachable_neural_scorer_is_unavailable() {
        let policy = Arc::new(NetworkPolicy::unrestricted());
        let scorer = NeuralScorer::new("http://127.0.0.1:1/score", policy);
        let passages = vec![passage(0, "text")];
        assert!(matches!(
            score_passages("q", &passages, &scorer),
            Err(RankError::ScorerUnavailable(_))
        ));
    }

    #[test]
    fn idf_never_negative_even_for_ubiquitous_terms() {
        let passages: Vec<Passage> = (0..10)
            .map(|i| passage(i, "common term everywhere"))
            .collect();
        let scorer = Bm25Scorer::from_corpus(&passages);
        let scored = score_passages("common", &passages, &scorer).unwrap();
        assert!(scored.iter().all(|s| s.score >= 0.0));
        assert!(scored[0].score > 0.0);
    }
}
