//! Quantitative measures over answer records plus the paired significance
//! tests (exact McNemar, Wilcoxon signed-rank).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::AnswerRecord;
use crate::serp::Engine;
use crate::topics::BinaryStance;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no records to aggregate")]
    EmptyInput,
    #[error("no answered records (every label is no-answer)")]
    NoAnsweredRecords,
    #[error("paired outcome vectors differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("curve depth {0} outside [1, 20]")]
    InvalidDepth(u32),
}

/// Denominator convention for the cumulative correct curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    /// Correct entries within the top n over all entries seen (n × topics).
    PerEntry,
    /// Topics with at least one correct entry within the top n over topics.
    PerTopic,
}

/// Proportion-per-position curve for one engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCurve {
    pub engine: Engine,
    /// (position, proportion) with positions strictly increasing.
    pub points: Vec<(u32, f64)>,
}

fn topic_ids(records: &[AnswerRecord]) -> BTreeSet<u32> {
    records.iter().map(|r| r.topic_id).collect()
}

/// Proportion of correct answers accumulated over rank positions.
///
/// Ranks a topic has no record for count as no-answer, which is never
/// correct.
pub fn cumulative_correct_curve(
    engine: Engine,
    records: &[AnswerRecord],
    depth: u32,
    mode: CurveMode,
) -> Result<RankCurve, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if !(1..=20).contains(&depth) {
        return Err(MetricsError::InvalidDepth(depth));
    }
    let topics = topic_ids(records);
    let n_topics = topics.len() as f64;
    // correct_at[n-1] = number of correct records at rank n across topics
    let mut correct_at = vec![0u32; depth as usize];
    // first_correct[topic] = best rank with a correct record
    let mut first_correct: BTreeMap<u32, u32> = BTreeMap::new();
    for record in records {
        if record.correct && record.rank >= 1 && record.rank <= depth {
            correct_at[(record.rank - 1) as usize] += 1;
            first_correct
                .entry(record.topic_id)
                .and_modify(|r| *r = (*r).min(record.rank))
                .or_insert(record.rank);
        }
    }
    let mut points = Vec::with_capacity(depth as usize);
    let mut cumulative = 0u32;
    for n in 1..=depth {
        cumulative += correct_at[(n - 1) as usize];
        let proportion = match mode {
            CurveMode::PerEntry => cumulative as f64 / (n as f64 * n_topics),
            CurveMode::PerTopic => {
                first_correct.values().filter(|r| **r <= n).count() as f64 / n_topics
            }
        };
        points.push((n, proportion));
    }
    Ok(RankCurve { engine, points })
}

/// Mean over positions 1..depth of the number of topics whose record at
/// that position answers at all. Ranges over [0, #topics].
pub fn answering_score(records: &[AnswerRecord], depth: u32) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if !(1..=20).contains(&depth) {
        return Err(MetricsError::InvalidDepth(depth));
    }
    let mut answered_at = vec![0u32; depth as usize];
    for record in records {
        if record.label.is_answer() && record.rank >= 1 && record.rank <= depth {
            answered_at[(record.rank - 1) as usize] += 1;
        }
    }
    let total: u32 = answered_at.iter().sum();
    Ok(total as f64 / depth as f64)
}

/// Correct over answered, ignoring no-answer entries entirely.
pub fn conditional_correct_rate(records: &[AnswerRecord]) -> Result<f64, MetricsError> {
    let answered: Vec<_> = records.iter().filter(|r| r.label.is_answer()).collect();
    if answered.is_empty() {
        return Err(MetricsError::NoAnsweredRecords);
    }
    let correct = answered.iter().filter(|r| r.correct).count();
    Ok(correct as f64 / answered.len() as f64)
}

/// Fraction of predictions equal to the truth. Unparsable predictions come
/// in as `None` and count as incorrect.
pub fn llm_accuracy(pairs: &[(Option<BinaryStance>, BinaryStance)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let hits = pairs
        .iter()
        .filter(|(predicted, truth)| *predicted == Some(*truth))
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Discordant-pair counts and the exact binomial p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// Topics where A is correct and B is not.
    pub b: u64,
    /// Topics where B is correct and A is not.
    pub c: u64,
    pub p_value: f64,
}

/// Exact McNemar test on aligned correctness vectors.
///
/// Two-sided p = min(1, 2 · P(X ≥ max(b, c))) with X ~ Binomial(b + c, ½),
/// by direct summation; b + c = 0 yields p = 1.
pub fn mcnemar_test(a: &[bool], b_outcomes: &[bool]) -> Result<McNemarResult, MetricsError> {
    if a.len() != b_outcomes.len() {
        return Err(MetricsError::LengthMismatch {
            a: a.len(),
            b: b_outcomes.len(),
        });
    }
    let mut b = 0u64;
    let mut c = 0u64;
    for (&x, &y) in a.iter().zip(b_outcomes) {
        match (x, y) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    let n = b + c;
    let p_value = if n == 0 {
        1.0
    } else {
        let k = b.max(c);
        // Sum of C(n, i) for i in k..=n; exact in f64 for n <= 53.
        let mut coefficient = 1.0f64; // C(n, 0)
        let mut tail = 0.0f64;
        for i in 0..=n {
            if i >= k {
                tail += coefficient;
            }
            if i < n {
                coefficient = coefficient * (n - i) as f64 / (i + 1) as f64;
            }
        }
        (2.0 * tail / 2f64.powi(n as i32)).min(1.0)
    };
    Ok(McNemarResult { b, c, p_value })
}

/// Wilcoxon signed-rank outcome. `w` is the sum of the ranks of positive
/// differences; the p-value is one-sided for a positive shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub w: f64,
    pub p_value: f64,
    /// Sign of the median difference: -1, 0 or 1.
    pub direction: i8,
    /// True when every difference was zero; p is then 1 by convention.
    pub degenerate: bool,
    /// Differences remaining after dropping zeros.
    pub n_nonzero: usize,
}

/// Threshold up to which the exact null distribution is used.
const WILCOXON_EXACT_MAX_N: usize = 25;

/// Wilcoxon signed-rank test over paired differences.
///
/// Zero differences are dropped; tied absolute values share their average
/// rank. For n ≤ 25 the p-value is exact over all 2^n sign assignments
/// (computed by integer subset-sum counting, identical to enumeration); for
/// larger n a normal approximation with tie and continuity corrections is
/// used.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<WilcoxonResult, MetricsError> {
    if diffs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let direction = median_sign(diffs);
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return Ok(WilcoxonResult {
            w: 0.0,
            p_value: 1.0,
            direction,
            degenerate: true,
            n_nonzero: 0,
        });
    }
    let n = nonzero.len();

    // Sort indices by |diff| and assign doubled ranks (2 × average rank),
    // which stay integral under tie averaging.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        nonzero[i]
            .abs()
            .partial_cmp(&nonzero[j].abs())
            .expect("diffs must not be NaN")
    });
    let mut doubled_ranks = vec![0u64; n];
    let mut pos = 0usize;
    while pos < n {
        let mut end = pos;
        while end + 1 < n && nonzero[order[end + 1]].abs() == nonzero[order[pos]].abs() {
            end += 1;
        }
        // 1-based sorted positions pos+1 ..= end+1 share the average rank
        // ((pos+1) + (end+1)) / 2, i.e. a doubled rank of pos + end + 2.
        let doubled = (pos + end + 2) as u64;
        for &idx in &order[pos..=end] {
            doubled_ranks[idx] = doubled;
        }
        pos = end + 1;
    }

    let w_doubled: u64 = (0..n)
        .filter(|&i| nonzero[i] > 0.0)
        .map(|i| doubled_ranks[i])
        .sum();
    let w = w_doubled as f64 / 2.0;

    let p_value = if n <= WILCOXON_EXACT_MAX_N {
        exact_upper_tail(&doubled_ranks, w_doubled)
    } else {
        normal_upper_tail(&doubled_ranks, w)
    };

    Ok(WilcoxonResult {
        w,
        p_value,
        direction,
        degenerate: false,
        n_nonzero: n,
    })
}

/// P(W' ≥ observed) under random signs, exactly: a subset-sum count over
/// the doubled ranks divided by 2^n.
fn exact_upper_tail(doubled_ranks: &[u64], observed_doubled: u64) -> f64 {
    let total: u64 = doubled_ranks.iter().sum();
    let mut ways = vec![0u64; (total + 1) as usize];
    ways[0] = 1;
    for &rank in doubled_ranks {
        for sum in (rank..=total).rev() {
            ways[sum as usize] += ways[(sum - rank) as usize];
        }
    }
    let favorable: u64 = ways[observed_doubled as usize..].iter().sum();
    favorable as f64 / 2f64.powi(doubled_ranks.len() as i32)
}

/// Upper-tail normal approximation with tie correction and a 0.5 continuity
/// correction.
fn normal_upper_tail(doubled_ranks: &[u64], w: f64) -> f64 {
    let n = doubled_ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    // Tie correction: subtract sum(t^3 - t)/48 over tie groups.
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for &rank in doubled_ranks {
        *counts.entry(rank).or_insert(0) += 1;
    }
    let tie_penalty: f64 = counts
        .values()
        .map(|&t| {
            let t = t as f64;
            (t * t * t - t) / 48.0
        })
        .sum();
    let variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_penalty;
    if variance <= 0.0 {
        // Every diff tied at the same magnitude and sign pattern degenerate.
        return if w > mean { 0.0 } else { 1.0 };
    }
    let z = (w - 0.5 - mean) / variance.sqrt();
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

fn median_sign(diffs: &[f64]) -> i8 {
    let mut sorted = diffs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("diffs must not be NaN"));
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    if median > 0.0 {
        1
    } else if median < 0.0 {
        -1
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answer::AnswerLabel;

    fn rec(topic_id: u32, rank: u32, label: AnswerLabel, correct: bool) -> AnswerRecord {
        AnswerRecord {
            engine: Engine::Google,
            topic_id,
            rank,
            label,
            correct,
            url: format!("https://example.com/{topic_id}/{rank}"),
            passage_index: Some(0),
        }
    }

    #[test]
    fn curve_counts_correct_entries_per_position() {
        // Topic 1: [correct, no-answer]; topic 2: [incorrect, correct].
        let records = vec![
            rec(1, 1, AnswerLabel::Yes, true),
            rec(1, 2, AnswerLabel::NoAnswer, false),
            rec(2, 1, AnswerLabel::No, false),
            rec(2, 2, AnswerLabel::Yes, true),
        ];
        let curve =
            cumulative_correct_curve(Engine::Google, &records, 2, CurveMode::PerEntry).unwrap();
        assert_eq!(curve.points[0], (1, 0.5));
        assert_eq!(curve.points[1], (2, 0.5));
    }

    #[test]
    fn curve_is_one_when_everything_is_correct_and_zero_when_nothing_answers() {
        let full: Vec<_> = (1..=3)
            .flat_map(|t| (1..=5).map(move |r| rec(t, r, AnswerLabel::Yes, true)))
            .collect();
        let curve = cumulative_correct_curve(Engine::Bing, &full, 5, CurveMode::PerEntry).unwrap();
        assert!(curve.points.iter().all(|(_, p)| *p == 1.0));

        let none: Vec<_> = (1..=3)
            .flat_map(|t| (1..=5).map(move |r| rec(t, r, AnswerLabel::NoAnswer, false)))
            .collect();
        let curve = cumulative_correct_curve(Engine::Bing, &none, 5, CurveMode::PerEntry).unwrap();
        assert!(curve.points.iter().all(|(_, p)| *p == 0.0));
    }

    #[test]
    fn per_topic_mode_counts_topics_with_any_correct() {
        // Topic 1 first correct at rank 2; topic 2 never correct.
        let records = vec![
            rec(1, 1, AnswerLabel::No, false),
            rec(1, 2, AnswerLabel::Yes, true),
            rec(2, 1, AnswerLabel::NoAnswer, false),
            rec(2, 2, AnswerLabel::NoAnswer, false),
        ];
        let curve =
            cumulative_correct_curve(Engine::Google, &records, 2, CurveMode::PerTopic).unwrap();
        assert_eq!(curve.points[0], (1, 0.0));
        assert_eq!(curve.points[1], (2, 0.5));
    }

    #[test]
    fn answering_score_averages_positions() {
        // Both topics answer at position 1, one at position 2.
        let records = vec![
            rec(1, 1, AnswerLabel::Yes, true),
            rec(1, 2, AnswerLabel::NoAnswer, false),
            rec(2, 1, AnswerLabel::No, false),
            rec(2, 2, AnswerLabel::Yes, true),
        ];
        assert_eq!(answering_score(&records, 2).unwrap(), 1.5);

        let silent = vec![rec(1, 1, AnswerLabel::NoAnswer, false)];
        assert_eq!(answering_score(&silent, 1).unwrap(), 0.0);
    }

    #[test]
    fn conditional_rate_ignores_no_answers() {
        let mut records = vec![
            rec(1, 1, AnswerLabel::Yes, true),
            rec(1, 2, AnswerLabel::Yes, true),
            rec(1, 3, AnswerLabel::Yes, true),
            rec(1, 4, AnswerLabel::No, false),
        ];
        for r in 5..=10 {
            records.push(rec(1, r, AnswerLabel::NoAnswer, false));
        }
        assert_eq!(conditional_correct_rate(&records).unwrap(), 0.75);

        let silent = vec![rec(1, 1, AnswerLabel::NoAnswer, false)];
        assert!(matches!(
            conditional_correct_rate(&silent),
            Err(MetricsError::NoAnsweredRecords)
        ));
    }

    #[test]
    fn llm_accuracy_counts_unparsable_as_incorrect() {
        let pairs = vec![
            (Some(BinaryStance::Yes), BinaryStance::Yes),
            (Some(BinaryStance::No), BinaryStance::Yes),
        ];
        assert_eq!(llm_accuracy(&pairs).unwrap(), 0.5);

        let with_unparsable = vec![
            (Some(BinaryStance::Yes), BinaryStance::Yes),
            (None, BinaryStance::No),
        ];
        assert_eq!(llm_accuracy(&with_unparsable).unwrap(), 0.5);
    }

    #[test]
    fn mcnemar_matches_hand_computed_values() {
        // Identical vectors: no discordance.
        let same = vec![true, false, true];
        let result = mcnemar_test(&same, &same).unwrap();
        assert_eq!((result.b, result.c), (0, 0));
        assert_eq!(result.p_value, 1.0);

        // b=10, c=0: p = 2 * (1/2)^10 = 0.001953125 exactly.
        let a = vec![true; 10];
        let b = vec![false; 10];
        let result = mcnemar_test(&a, &b).unwrap();
        assert_eq!((result.b, result.c), (10, 0));
        assert!((result.p_value - 0.001953125).abs() < 1e-15);

        // b=5, c=5: clamped to 1.
        let mut a = vec![true; 5];
        a.extend(vec![false; 5]);
        let mut b = vec![false; 5];
        b.extend(vec![true; 5]);
        let result = mcnemar_test(&a, &b).unwrap();
        assert_eq!(result.p_value, 1.0);
    }

    #[test]
    fn mcnemar_is_symmetric() {
        let a = vec![true, true, false, true, false, false, true];
        let b = vec![false, true, true, true, false, true, false];
        let ab = mcnemar_test(&a, &b).unwrap();
        let ba = mcnemar_test(&b, &a).unwrap();
        assert_eq!(ab.b, ba.c);
        assert_eq!(ab.c, ba.b);
        assert_eq!(ab.p_value, ba.p_value);
    }

    #[test]
    fn mcnemar_rejects_mismatched_lengths() {
        assert!(matches!(
            mcnemar_test(&[true], &[true, false]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn wilcoxon_matches_hand_enumeration() {
        // {+1, -1}: tied magnitudes share rank 1.5; W = 1.5. Of the four
        // sign assignments, {1.5+1.5, 1.5, 1.5, 0}, three reach >= 1.5.
        let result = wilcoxon_signed_rank(&[1.0, -1.0]).unwrap();
        assert_eq!(result.p_value, 0.75);
        assert_eq!(result.w, 1.5);

        // Six distinct positive diffs: only the all-positive assignment
        // reaches W = 21, so p = 1/64.
        let result = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(result.p_value, 1.0 / 64.0);
        assert_eq!(result.w, 21.0);
        assert_eq!(result.direction, 1);

        // {+1, +1, -1}: all magnitudes tie at rank 2; sums over {2,2,2}
        // reaching >= 4 are 4 of 8.
        let result = wilcoxon_signed_rank(&[1.0, 1.0, -1.0]).unwrap();
        assert_eq!(result.p_value, 0.5);
    }

    #[test]
    fn wilcoxon_all_zero_is_degenerate_not_an_error() {
        let result = wilcoxon_signed_rank(&[0.0, 0.0, 0.0]).unwrap();
        assert!(result.degenerate);
        assert_eq!(result.p_value, 1.0);
        assert_eq!(result.direction, 0);
        assert_eq!(result.n_nonzero, 0);
    }

    #[test]
    fn wilcoxon_drops_zeros_before_ranking() {
        let with_zeros = wilcoxon_signed_rank(&[0.0, 1.0, 2.0, 0.0, 3.0]).unwrap();
        let without = wilcoxon_signed_rank(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(with_zeros.p_value, without.p_value);
        assert_eq!(with_zeros.w, without.w);
        assert_eq!(with_zeros.n_nonzero, 3);
    }

    #[test]
    fn wilcoxon_large_n_uses_normal_tail() {
        let diffs: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let result = wilcoxon_signed_rank(&diffs).unwrap();
        assert!(result.p_value < 1e-4);
        assert_eq!(result.direction, 1);

        let mixed: Vec<f64> = (1..=30).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let result = wilcoxon_signed_rank(&mixed).unwrap();
        assert!(result.p_value > 0.2);
    }

    #[test]
    fn wilcoxon_rejects_empty_input() {
        assert!(matches!(
            wilcoxon_signed_rank(&[]),
            Err(MetricsError::EmptyInput)
        ));
    }
}
