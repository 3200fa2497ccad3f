//! Deterministic report emitters (CSV, SVG, markdown tables) plus the
//! error-taxonomy annotation workflow. All output is a pure function of the
//! input records: no timestamps, no randomness, so replaying a warm store
//! yields byte-identical files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::PromptKind;
use crate::memorization::ContaminationReport;
use crate::qa::LlmAnswerRow;
use crate::stats::{McNemarResult, RankCurve, WilcoxonResult};
use crate::usermodel::OutcomeSummary;

/// Manual failure classification for a topic a model got wrong.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    /// Incorrect understanding of current medical consensus.
    ConsensusMisunderstanding,
    /// Misinterpretation of the question.
    QuestionMisinterpretation,
    /// Ambiguous answer.
    AmbiguousAnswer,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 3] = [
        ErrorCategory::ConsensusMisunderstanding,
        ErrorCategory::QuestionMisinterpretation,
        ErrorCategory::AmbiguousAnswer,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCategory::ConsensusMisunderstanding => "consensus_misunderstanding",
            ErrorCategory::QuestionMisinterpretation => "question_misinterpretation",
            ErrorCategory::AmbiguousAnswer => "ambiguous_answer",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One hand-assigned annotation. Categories form a closed set, so an
/// unknown string in an annotation file fails at deserialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorAnnotation {
    pub topic_id: u32,
    pub model_id: String,
    /// Prompt condition under which the failure happened; tallies are
    /// reported per condition.
    pub prompt_kind: PromptKind,
    pub category: ErrorCategory,
    pub free_text_rationale: String,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("answer tables disagree on the topic set: {0}")]
    TopicSetMismatch(String),
    #[error("unknown report format '{0}' (expected csv, svg-plot or markdown-table)")]
    UnknownFormat(String),
}

/// Topics every model answered incorrectly under the given prompt kind.
pub fn find_universal_failures(
    tables: &[Vec<LlmAnswerRow>],
    kind: PromptKind,
) -> Result<Vec<u32>, ReportError> {
    if tables.is_empty() {
        return Err(ReportError::EmptyInput("tables"));
    }
    let mut per_model: Vec<BTreeMap<u32, bool>> = Vec::with_capacity(tables.len());
    for (i, table) in tables.iter().enumerate() {
        let mut map = BTreeMap::new();
        for row in table.iter().filter(|r| r.prompt_kind == kind) {
            if map.insert(row.topic_id, row.correct).is_some() {
                return Err(ReportError::TopicSetMismatch(format!(
                    "table {i} has multiple rows for topic {} under kind {kind}",
                    row.topic_id
                )));
            }
        }
        per_model.push(map);
    }
    let reference: BTreeSet<u32> = per_model[0].keys().copied().collect();
    for (i, map) in per_model.iter().enumerate().skip(1) {
        let this: BTreeSet<u32> = map.keys().copied().collect();
        if this != reference {
            return Err(ReportError::TopicSetMismatch(format!(
                "table {i} covers {} topics, table 0 covers {}",
                this.len(),
                reference.len()
            )));
        }
    }
    Ok(reference
        .into_iter()
        .filter(|topic| per_model.iter().all(|map| !map[topic]))
        .collect())
}

/// Category percentages for one prompt condition, summing to 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTally {
    pub prompt_kind: PromptKind,
    pub total: usize,
    pub pct_consensus_misunderstanding: f64,
    pub pct_question_misinterpretation: f64,
    pub pct_ambiguous_answer: f64,
}

/// Percentage of each error category, computed separately per prompt
/// condition and ordered by the prompt-kind declaration order.
pub fn tally_error_categories(
    annotations: &[ErrorAnnotation],
) -> Result<Vec<ErrorTally>, ReportError> {
    if annotations.is_empty() {
        return Err(ReportError::EmptyInput("annotations"));
    }
    let mut tallies = Vec::new();
    for kind in PromptKind::ALL {
        let of_kind: Vec<&ErrorAnnotation> =
            annotations.iter().filter(|a| a.prompt_kind == kind).collect();
        if of_kind.is_empty() {
            continue;
        }
        let total = of_kind.len();
        let pct = |category: ErrorCategory| {
            100.0 * of_kind.iter().filter(|a| a.category == category).count() as f64
                / total as f64
        };
        tallies.push(ErrorTally {
            prompt_kind: kind,
            total,
            pct_consensus_misunderstanding: pct(ErrorCategory::ConsensusMisunderstanding),
            pct_question_misinterpretation: pct(ErrorCategory::QuestionMisinterpretation),
            pct_ambiguous_answer: pct(ErrorCategory::AmbiguousAnswer),
        });
    }
    Ok(tallies)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg,
    Markdown,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Svg => "svg",
            ReportFormat::Markdown => "md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "svg" | "svg-plot" => Ok(ReportFormat::Svg),
            "md" | "markdown" | "markdown-table" => Ok(ReportFormat::Markdown),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

fn fmt_opt_u8(v: Option<u8>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt_u32(v: Option<u32>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `engine,position,proportion` rows, engines in input order.
pub fn curve_csv(curves: &[RankCurve]) -> String {
    let mut out = String::from("engine,position,proportion\n");
    for curve in curves {
        for (position, proportion) in &curve.points {
            out.push_str(&format!("{},{},{proportion:.6}\n", curve.engine, position));
        }
    }
    out
}

const SVG_WIDTH: f64 = 800.0;
const SVG_HEIGHT: f64 = 400.0;
const SVG_MARGIN: f64 = 50.0;
const SVG_PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

fn svg_open(out: &mut String) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
}

fn svg_axes(out: &mut String) {
    let x0 = SVG_MARGIN;
    let x1 = SVG_WIDTH - SVG_MARGIN;
    let y0 = SVG_HEIGHT - SVG_MARGIN;
    let y1 = SVG_MARGIN;
    out.push_str(&format!(
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>\n"
    ));
    out.push_str(&format!(
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\" stroke=\"black\"/>\n"
    ));
}

/// Line chart with one polyline per engine and one circle per data point,
/// so data vertices are countable in the emitted markup. The y axis spans
/// [0, 1]; the x axis spans rank 1 to the largest plotted position.
pub fn curve_svg(curves: &[RankCurve]) -> String {
    let mut out = String::new();
    svg_open(&mut out);
    svg_axes(&mut out);
    let max_position = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|(p, _)| *p))
        .max()
        .unwrap_or(1)
        .max(1);
    let plot_w = SVG_WIDTH - 2.0 * SVG_MARGIN;
    let plot_h = SVG_HEIGHT - 2.0 * SVG_MARGIN;
    let x_of = |position: u32| {
        if max_position == 1 {
            SVG_MARGIN + plot_w / 2.0
        } else {
            SVG_MARGIN + (position - 1) as f64 / (max_position - 1) as f64 * plot_w
        }
    };
    let y_of = |proportion: f64| SVG_MARGIN + (1.0 - proportion) * plot_h;
    for (i, curve) in curves.iter().enumerate() {
        let color = SVG_PALETTE[i % SVG_PALETTE.len()];
        let points: Vec<String> = curve
            .points
            .iter()
            .map(|(p, v)| format!("{:.2},{:.2}", x_of(*p), y_of(*v)))
            .collect();
        if !points.is_empty() {
            out.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
                points.join(" ")
            ));
        }
        for (p, v) in &curve.points {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                x_of(*p),
                y_of(*v)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"{color}\" font-size=\"12\">{}</text>\n",
            SVG_WIDTH - SVG_MARGIN + 4.0,
            SVG_MARGIN + 14.0 * i as f64,
            curve.engine
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// One aggregated accuracy figure for a (model, prompt configuration) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub model_id: String,
    pub prompt_kind: PromptKind,
    pub shots: Option<u8>,
    pub rag_rank: Option<u32>,
    pub topics: usize,
    pub accuracy: f64,
}

/// Collapses per-topic answer rows into per-configuration accuracies,
/// ordered by model, prompt kind, shots, then evidence rank.
pub fn accuracy_grid(rows: &[LlmAnswerRow]) -> Vec<AccuracyCell> {
    let mut groups: BTreeMap<(String, usize, Option<u8>, Option<u32>), (usize, usize)> =
        BTreeMap::new();
    for row in rows {
        let kind_index = PromptKind::ALL
            .iter()
            .position(|k| *k == row.prompt_kind)
            .unwrap_or(usize::MAX);
        let entry = groups
            .entry((row.model_id.clone(), kind_index, row.shots, row.rag_rank))
            .or_insert((0, 0));
        entry.0 += 1;
        entry.1 += usize::from(row.correct);
    }
    groups
        .into_iter()
        .map(|((model_id, kind_index, shots, rag_rank), (topics, correct))| AccuracyCell {
            model_id,
            prompt_kind: PromptKind::ALL[kind_index],
            shots,
            rag_rank,
            topics,
            accuracy: correct as f64 / topics as f64,
        })
        .collect()
}

pub fn accuracy_csv(cells: &[AccuracyCell]) -> String {
    let mut out = String::from("model,prompt_kind,shots,rag_rank,topics,accuracy\n");
    for cell in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6}\n",
            cell.model_id,
            cell.prompt_kind,
            fmt_opt_u8(cell.shots),
            fmt_opt_u32(cell.rag_rank),
            cell.topics,
            cell.accuracy
        ));
    }
    out
}

pub fn accuracy_markdown(cells: &[AccuracyCell]) -> String {
    let mut out = String::from(
        "| model | prompt_kind | shots | rag_rank | topics | accuracy |\n|---|---|---|---|---|---|\n",
    );
    for cell in cells {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.6} |\n",
            cell.model_id,
            cell.prompt_kind,
            fmt_opt_u8(cell.shots),
            fmt_opt_u32(cell.rag_rank),
            cell.topics,
            cell.accuracy
        ));
    }
    out
}

/// Grouped bar chart: one group per model, one bar per prompt
/// configuration within the group, bar height proportional to accuracy.
pub fn accuracy_svg(cells: &[AccuracyCell]) -> String {
    let mut out = String::new();
    svg_open(&mut out);
    svg_axes(&mut out);
    let models: Vec<String> = {
        let mut seen = BTreeSet::new();
        cells.iter().map(|c| c.model_id.clone()).filter(|m| seen.insert(m.clone())).collect()
    };
    let configs: Vec<(PromptKind, Option<u8>, Option<u32>)> = {
        let mut seen = BTreeSet::new();
        cells
            .iter()
            .map(|c| (c.prompt_kind, c.shots, c.rag_rank))
            .filter(|(k, s, r)| {
                let kind_index = PromptKind::ALL.iter().position(|x| x == k).unwrap_or(usize::MAX);
                seen.insert((kind_index, *s, *r))
            })
            .collect()
    };
    if !models.is_empty() && !configs.is_empty() {
        let plot_w = SVG_WIDTH - 2.0 * SVG_MARGIN;
        let plot_h = SVG_HEIGHT - 2.0 * SVG_MARGIN;
        let group_w = plot_w / models.len() as f64;
        let bar_w = group_w / (configs.len() as f64 + 1.0);
        for (gi, model) in models.iter().enumerate() {
            let group_x = SVG_MARGIN + gi as f64 * group_w;
            for (bi, config) in configs.iter().enumerate() {
                let Some(cell) = cells.iter().find(|c| {
                    c.model_id == *model && (c.prompt_kind, c.shots, c.rag_rank) == *config
                }) else {
                    continue;
                };
                let color = SVG_PALETTE[bi % SVG_PALETTE.len()];
                let height = cell.accuracy * plot_h;
                let x = group_x + (bi as f64 + 0.5) * bar_w;
                let y = SVG_HEIGHT - SVG_MARGIN - height;
                out.push_str(&format!(
                    "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{bar_w:.2}\" height=\"{height:.2}\" fill=\"{color}\"/>\n"
                ));
            }
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"black\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
                group_x + group_w / 2.0,
                SVG_HEIGHT - SVG_MARGIN + 16.0,
                model
            ));
        }
        for (bi, (kind, shots, rag_rank)) in configs.iter().enumerate() {
            let color = SVG_PALETTE[bi % SVG_PALETTE.len()];
            let mut label = kind.to_string();
            if let Some(s) = shots {
                label.push_str(&format!(" {s}-shot"));
            }
            if let Some(r) = rag_rank {
                label.push_str(&format!(" rank-{r}"));
            }
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"{color}\" font-size=\"12\">{label}</text>\n",
                SVG_MARGIN,
                16.0 + 14.0 * bi as f64,
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

/// A paired comparison between two labeled systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarRow {
    pub system_a: String,
    pub system_b: String,
    pub result: McNemarResult,
}

pub fn mcnemar_csv(rows: &[McNemarRow]) -> String {
    let mut out = String::from("system_a,system_b,b,c,p_value,significant_at_0.05\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{}\n",
            row.system_a,
            row.system_b,
            row.result.b,
            row.result.c,
            row.result.p_value,
            if row.result.p_value < 0.05 { "yes" } else { "no" }
        ));
    }
    out
}

pub fn mcnemar_markdown(rows: &[McNemarRow]) -> String {
    let mut out = String::from(
        "| system_a | system_b | b | c | p_value | significant_at_0.05 |\n|---|---|---|---|---|---|\n",
    );
    for row in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {:.6} | {} |\n",
            row.system_a,
            row.system_b,
            row.result.b,
            row.result.c,
            row.result.p_value,
            if row.result.p_value < 0.05 { "yes" } else { "no" }
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonRow {
    pub system_a: String,
    pub system_b: String,
    pub result: WilcoxonResult,
}

pub fn wilcoxon_csv(rows: &[WilcoxonRow]) -> String {
    let mut out = String::from("system_a,system_b,w,n_nonzero,direction,p_value,significant_at_0.05\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{:.1},{},{},{:.6},{}\n",
            row.system_a,
            row.system_b,
            row.result.w,
            row.result.n_nonzero,
            row.result.direction,
            row.result.p_value,
            if row.result.p_value < 0.05 { "yes" } else { "no" }
        ));
    }
    out
}

/// `label,pct_correct,pct_incorrect,pct_noanswer,mean_effort` rows, one
/// per labeled outcome set (typically engine x user model).
pub fn usersim_csv(summaries: &[(String, OutcomeSummary)]) -> String {
    let mut out = String::from("label,pct_correct,pct_incorrect,pct_noanswer,mean_effort\n");
    for (label, summary) in summaries {
        out.push_str(&format!(
            "{label},{:.6},{:.6},{:.6},{:.6}\n",
            summary.pct_correct, summary.pct_incorrect, summary.pct_noanswer, summary.mean_effort
        ));
    }
    out
}

pub fn error_tally_csv(tallies: &[ErrorTally]) -> String {
    let mut out = String::from(
        "prompt_kind,total,pct_consensus_misunderstanding,pct_question_misinterpretation,pct_ambiguous_answer\n",
    );
    for tally in tallies {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            tally.prompt_kind,
            tally.total,
            tally.pct_consensus_misunderstanding,
            tally.pct_question_misinterpretation,
            tally.pct_ambiguous_answer
        ));
    }
    out
}

pub fn contamination_csv(report: &ContaminationReport) -> String {
    let mut out = String::from("metric,pairs,mean_general,mean_guided,p_value,flagged\n");
    for verdict in &report.verdicts {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{}\n",
            verdict.metric,
            report.pairs,
            verdict.mean_general,
            verdict.mean_guided,
            verdict.p_value,
            if verdict.flagged { "yes" } else { "no" }
        ));
    }
    out
}

pub fn contamination_markdown(report: &ContaminationReport) -> String {
    let mut out = String::from(
        "| metric | mean_general | mean_guided | p_value | flagged |\n|---|---|---|---|---|\n",
    );
    for verdict in &report.verdicts {
        out.push_str(&format!(
            "| {} | {:.6} | {:.6} | {:.6} | {} |\n",
            verdict.metric,
            verdict.mean_general,
            verdict.mean_guided,
            verdict.p_value,
            if verdict.flagged { "yes" } else { "no" }
        ));
    }
    out.push_str(&format!("\nPairs compared: {}.\n", report.pairs));
    out.push_str(
        "Flagging is high precision but low recall: an unflagged model may still have seen the topics in training.\n",
    );
    out
}
