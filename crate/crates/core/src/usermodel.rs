//! Simulated searcher behaviors over labeled rankings.
//!
//! The lazy user accepts the first result that answers at all; the diligent
//! user gathers three answers and decides by majority, falling back to
//! whatever unanimous evidence exists when the list runs out first.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::AnswerRecord;

/// Final decision of one simulated search session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    CorrectResponse,
    IncorrectResponse,
    NoAnswer,
}

/// Decision plus the number of results inspected to reach it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InspectionOutcome {
    pub decision: Decision,
    pub effort: usize,
}

#[derive(Debug, Error)]
pub enum UserModelError {
    #[error("no outcomes to summarize")]
    EmptyInput,
}

/// Scans results in rank order and stops at the first one that answers;
/// exhausting the list without any answer is a no-answer session.
pub fn lazy_user(records: &[AnswerRecord]) -> InspectionOutcome {
    let mut effort = 0;
    for record in records {
        effort += 1;
        if record.label.is_answer() {
            let decision = if record.correct {
                Decision::CorrectResponse
            } else {
                Decision::IncorrectResponse
            };
            return InspectionOutcome { decision, effort };
        }
    }
    InspectionOutcome {
        decision: Decision::NoAnswer,
        effort,
    }
}

/// Scans results in rank order, counting correct and incorrect answers, and
/// decides by majority once three answers are collected. If the list ends
/// first, one or two answers that all agree still decide; zero answers or a
/// one-one tie yield no answer.
pub fn diligent_user(records: &[AnswerRecord]) -> InspectionOutcome {
    let mut correct = 0u32;
    let mut incorrect = 0u32;
    let mut effort = 0;
    for record in records {
        effort += 1;
        if record.label.is_answer() {
            if record.correct {
                correct += 1;
            } else {
                incorrect += 1;
            }
            if correct + incorrect == 3 {
                let decision = if correct >= 2 {
                    Decision::CorrectResponse
                } else {
                    Decision::IncorrectResponse
                };
                return InspectionOutcome { decision, effort };
            }
        }
    }
    let decision = if correct >= 1 && incorrect == 0 {
        Decision::CorrectResponse
    } else if incorrect >= 1 && correct == 0 {
        Decision::IncorrectResponse
    } else {
        Decision::NoAnswer
    };
    InspectionOutcome { decision, effort }
}

/// Aggregate view over many sessions: percentages sum to 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub pct_correct: f64,
    pub pct_incorrect: f64,
    pub pct_noanswer: f64,
    pub mean_effort: f64,
}

pub fn summarize_outcomes(outcomes: &[InspectionOutcome]) -> Result<OutcomeSummary, UserModelError> {
    if outcomes.is_empty() {
        return Err(UserModelError::EmptyInput);
    }
    let n = outcomes.len() as f64;
    let count = |d: Decision| outcomes.iter().filter(|o| o.decision == d).count() as f64;
    let total_effort: usize = outcomes.iter().map(|o| o.effort).sum();
    Ok(OutcomeSummary {
        pct_correct: count(Decision::CorrectResponse) / n * 100.0,
        pct_incorrect: count(Decision::IncorrectResponse) / n * 100.0,
        pct_noanswer: count(Decision::NoAnswer) / n * 100.0,
        mean_effort: total_effort as f64 / n,
    })
}
