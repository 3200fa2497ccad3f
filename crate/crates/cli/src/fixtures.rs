//! Generator for the bundled offline fixture set: five topics, one recorded
//! SERP per engine and topic, canned result pages, a stub responder map
//! covering every prompt the pipeline can ask over this data, and plan files
//! for the prompting and evidence grids.
//!
//! The bundle is closed under replay: running the full pipeline against it
//! never needs a network and never hits a missing responder entry. Prompts
//! are derived with the same library functions the pipeline uses, so the
//! responder map cannot drift from the real prompt texts.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use chrono::{DateTime, TimeZone, Utc};
use medseek_core::answer::build_rc_prompt;
use medseek_core::extract::{
    html_to_text, split_passages, FixturePageProvider, PageStatus, PageText,
    DEFAULT_STRIDE_WORDS, DEFAULT_WINDOW_WORDS,
};
use medseek_core::llm::prompts::{build_fewshot_prompt, build_qa_prompt, default_demos, prompt_hash};
use medseek_core::memorization::{build_general_prompt, build_guided_prompt};
use medseek_core::qa::{build_rag_prompt, NO_EVIDENCE};
use medseek_core::topics::serialize_topics_xml;
use medseek_core::{BinaryStance, Engine, PromptKind, Serp, SerpEntry, Topic, TopicYear};

/// What [`write_bundle`] produced, for the command's summary output.
pub struct BundleSummary {
    pub topics: usize,
    pub serps: usize,
    pub pages: usize,
    pub responder_entries: usize,
}

const URLS_PER_TOPIC: usize = 5;

/// Per-page verdict the stub reader hands back for a passage of that page.
#[derive(Clone, Copy, PartialEq)]
enum Canned {
    Yes,
    No,
    NoAnswer,
}

impl Canned {
    fn reader_text(self) -> &'static str {
        match self {
            Canned::Yes => "Yes.",
            Canned::No => "No.",
            Canned::NoAnswer => "No answer provided.",
        }
    }
}

/// Reader verdict for (topic, url index); `None` marks the one page whose
/// fixture file is deliberately absent, exercising the fetch-failure path.
fn canned_label(topic_id: u32, url_idx: usize) -> Option<Canned> {
    use Canned::{No, NoAnswer, Yes};
    let table: [Canned; URLS_PER_TOPIC] = match topic_id {
        101 => [Yes, NoAnswer, No, NoAnswer, Yes],
        102 => [NoAnswer, Yes, Yes, No, NoAnswer],
        103 => [Yes, NoAnswer, NoAnswer, No, No],
        104 => [NoAnswer, NoAnswer, No, NoAnswer, NoAnswer],
        105 => [Yes, No, Yes, No, Yes],
        other => unreachable!("no canned labels for topic {other}"),
    };
    if topic_id == 105 && url_idx == 4 {
        return None;
    }
    Some(table[url_idx])
}

pub fn bundle_topics() -> Vec<Topic> {
    let year = TopicYear::Y2021;
    let specs: [(u32, &str, &str, BinaryStance, &str); 5] = [
        (
            101,
            "tea tree oil acne",
            "Can tea tree oil treat acne?",
            BinaryStance::Yes,
            "Tea tree oil has antibacterial and anti-inflammatory properties. Clinical trials found that five percent tea tree oil gel reduces acne lesion counts, although it acts more slowly than benzoyl peroxide.",
        ),
        (
            102,
            "cranberry urinary tract infections",
            "Do cranberry products prevent urinary tract infections?",
            BinaryStance::Yes,
            "Proanthocyanidins in cranberries stop bacteria from sticking to the bladder wall. Regular cranberry intake modestly lowers the rate of recurrent urinary tract infections in women.",
        ),
        (
            103,
            "vitamin c common cold",
            "Does vitamin C cure the common cold?",
            BinaryStance::No,
            "Regular vitamin C does not prevent or cure colds in the general population. At best it shortens symptom duration slightly, and starting it after symptoms appear shows no consistent benefit.",
        ),
        (
            104,
            "copper bracelets arthritis",
            "Do copper bracelets treat arthritis?",
            BinaryStance::No,
            "Randomized trials found copper bracelets perform no better than placebo for arthritis pain, stiffness or physical function. Any relief reported by wearers is attributable to placebo effects.",
        ),
        (
            105,
            "honey children cough",
            "Does honey reduce cough in children?",
            BinaryStance::Yes,
            "A spoonful of honey before bedtime reduces cough frequency and severity in children older than one year, outperforming no treatment and some over-the-counter cough suppressants.",
        ),
    ];
    specs
        .into_iter()
        .map(|(id, query, question, stance, narrative)| {
            Topic::new(id, query.into(), question, stance, narrative.into(), year, vec![])
                .expect("bundle topics are statically valid")
        })
        .collect()
}

fn url_for(topic_id: u32, url_idx: usize) -> String {
    format!("https://site{url_idx}.example.org/health/topic-{topic_id}")
}

/// Fixed acquisition timestamp so regenerated bundles are byte-identical.
fn bundle_timestamp() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 5, 15, 12, 0, 0).single().expect("valid timestamp")
}

/// Engines see the same five pages per topic in rotated order, so every
/// engine ranks every page somewhere and page fixtures are shared.
fn serp_for(engine_idx: usize, engine: Engine, topic: &Topic) -> Serp {
    let entries = (1..=URLS_PER_TOPIC as u32)
        .map(|rank| {
            let url_idx = (rank as usize - 1 + engine_idx) % URLS_PER_TOPIC;
            SerpEntry {
                rank,
                url: url_for(topic.id, url_idx),
                title: format!("Health article {url_idx} on {}", topic.query),
                snippet: Some(format!("Notes on {} from source {url_idx}.", topic.query)),
            }
        })
        .collect();
    Serp {
        engine,
        topic_id: topic.id,
        entries,
        retrieved_at: bundle_timestamp(),
    }
}

fn main_text(topic: &Topic, url_idx: usize, label: Canned) -> String {
    let query = &topic.query;
    let body = match label {
        Canned::Yes => format!(
            "Multiple clinical reviews of {query} conclude that it works. The pooled \
             evidence shows a consistent benefit over placebo across trials, and \
             practitioners interviewed for this piece report the same experience in \
             routine care. Side effects were rare and mild in every included study."
        ),
        Canned::No => format!(
            "Careful trials of {query} keep coming up empty. Controlled comparisons \
             show no advantage over placebo, and the few positive reports come from \
             small studies with serious design flaws. Reviewers conclude the popular \
             claims are not supported by the current evidence."
        ),
        Canned::NoAnswer => format!(
            "This page collects reader stories about {query} and related home \
             remedies. It lists where to buy supplies, typical prices, and community \
             discussion threads, but it offers no assessment of whether the remedy \
             actually works. Consult a clinician for personal medical advice."
        ),
    };
    format!("Report number {url_idx}. {body}")
}

/// Page markup with the boilerplate the text extractor must strip.
fn page_html(topic: &Topic, url_idx: usize, label: Canned) -> String {
    format!(
        "<!DOCTYPE html>\n<html>\n<head>\n<title>Source {url_idx}: {query}</title>\n\
         <script>var tracker = \"{query}\";</script>\n<style>p {{ margin: 1em; }}</style>\n\
         </head>\n<body>\n<nav><a href=\"/\">Home</a> <a href=\"/health\">Health</a></nav>\n\
         <header><h1>Looking into {query}</h1></header>\n<article>\n<p>{text}</p>\n</article>\n\
         <aside>Subscribe to our newsletter.</aside>\n<footer>Example health network.</footer>\n\
         </body>\n</html>\n",
        query = topic.query,
        text = main_text(topic, url_idx, label),
    )
}

/// Passage texts exactly as the pipeline will cut them from this page.
fn passages_of(html: &str, url: &str) -> Result<Vec<String>> {
    let text = html_to_text(html);
    ensure!(!text.is_empty(), "fixture page {url} strips to empty text");
    let page = PageText {
        url: url.to_string(),
        text,
        fetched_at: bundle_timestamp(),
        status: PageStatus::Ok,
    };
    let passages = split_passages(&page, DEFAULT_WINDOW_WORDS, DEFAULT_STRIDE_WORDS)?;
    Ok(passages.into_iter().map(|p| p.text).collect())
}

/// Varied but deterministic grid answers, derived from the prompt hash. One
/// pool entry is deliberately not a yes/no so unparsable cells stay covered.
fn grid_answer(prompt: &str) -> &'static str {
    const POOL: [&str; 6] = [
        "Yes.",
        "No.",
        "Yes, it does.",
        "no",
        "The answer is yes",
        "It depends on many factors.",
    ];
    let nibble = prompt_hash(prompt)
        .bytes()
        .next()
        .map(|b| b as usize)
        .unwrap_or(0);
    POOL[nibble % POOL.len()]
}

fn general_probe_text(topic: &Topic) -> String {
    format!(
        "People try {} for many reasons and results vary from person to person. \
         Ask a clinician before relying on it.",
        topic.query
    )
}

const PLAN_PROMPTING: &str = r#"# Prompting grid: 2 models x 3 prompt kinds x shots {0,1,2,3} x 5 topics.
topic_year = 2021
prompt_kinds = ["no_context", "non_expert", "expert"]
shots = [0, 1, 2, 3]

[[models]]
provider = "stub"
model_id = "alpha"

[[models]]
provider = "stub"
model_id = "beta"
"#;

const PLAN_RAG: &str = r#"# Evidence grid: 1 model x 3 prompt kinds x search ranks {1,2,3} x 5 topics.
topic_year = 2021
prompt_kinds = ["no_context", "non_expert", "expert"]
rag_ranks = [1, 2, 3]

[[models]]
provider = "stub"
model_id = "alpha"
"#;

/// Writes the whole bundle under `root`.
pub fn write_bundle(root: &Path) -> Result<BundleSummary> {
    let topics = bundle_topics();
    std::fs::create_dir_all(root)
        .with_context(|| format!("cannot create {}", root.display()))?;

    std::fs::write(root.join("topics.xml"), serialize_topics_xml(&topics))?;

    let mut serp_count = 0;
    for (engine_idx, engine) in Engine::ALL.iter().enumerate() {
        let dir = root.join("serp").join(engine.as_str());
        std::fs::create_dir_all(&dir)?;
        for topic in &topics {
            let serp = serp_for(engine_idx, *engine, topic);
            let path = dir.join(format!("{}.json", topic.id));
            std::fs::write(&path, serde_json::to_string_pretty(&serp)?)?;
            serp_count += 1;
        }
    }

    let pages_dir = root.join("pages");
    std::fs::create_dir_all(&pages_dir)?;
    let mut responder: BTreeMap<String, String> = BTreeMap::new();
    let mut page_count = 0;

    for topic in &topics {
        for url_idx in 0..URLS_PER_TOPIC {
            let Some(label) = canned_label(topic.id, url_idx) else {
                continue;
            };
            let url = url_for(topic.id, url_idx);
            let html = page_html(topic, url_idx, label);
            let name = FixturePageProvider::fixture_file_name(&url)?;
            std::fs::write(pages_dir.join(name), &html)?;
            page_count += 1;
            // Reader verdicts: one entry per passage the page can yield, all
            // agreeing, so the answer does not depend on which passage the
            // ranker picks.
            for passage in passages_of(&html, &url)? {
                let prompt = build_rc_prompt(&passage, &topic.question)?;
                responder.insert(prompt_hash(&prompt), label.reader_text().to_string());
            }
        }
    }

    // Prompting grid coverage: both plan models share prompt texts, so one
    // entry per (kind, shots, topic) suffices.
    let demos = default_demos();
    for kind in PromptKind::ALL {
        for shots in 0..=3usize {
            for topic in &topics {
                let prompt = if shots == 0 {
                    build_qa_prompt(&topic.question, kind)
                } else {
                    build_fewshot_prompt(&topic.question, kind, &demos[..shots])?
                };
                responder.insert(prompt_hash(&prompt), grid_answer(&prompt).to_string());
            }
        }
    }

    // Evidence grid coverage for the first engine's rank order (rank r reads
    // the page at url index r-1), plus the no-evidence fallback for safety.
    for kind in PromptKind::ALL {
        for topic in &topics {
            for rank in 1..=3usize {
                let url_idx = rank - 1;
                let Some(label) = canned_label(topic.id, url_idx) else {
                    continue;
                };
                let url = url_for(topic.id, url_idx);
                let html = page_html(topic, url_idx, label);
                for passage in passages_of(&html, &url)? {
                    let prompt = build_rag_prompt(&topic.question, &passage, kind);
                    responder.insert(prompt_hash(&prompt), grid_answer(&prompt).to_string());
                }
            }
            // Concatenated evidence: top passages of ranks 1..=k joined by
            // blank lines, matching the single-block prompt shape.
            for k in 2..=3usize {
                let mut pieces = Vec::new();
                for rank in 1..=k {
                    let url_idx = rank - 1;
                    let Some(label) = canned_label(topic.id, url_idx) else {
                        continue;
                    };
                    let url = url_for(topic.id, url_idx);
                    let html = page_html(topic, url_idx, label);
                    pieces.push(passages_of(&html, &url)?.remove(0));
                }
                let prompt = build_rag_prompt(&topic.question, &pieces.join("\n\n"), kind);
                responder.insert(prompt_hash(&prompt), grid_answer(&prompt).to_string());
            }
            let fallback = build_rag_prompt(&topic.question, NO_EVIDENCE, kind);
            responder.insert(prompt_hash(&fallback), "No.".to_string());
        }
    }

    // Memorization probe: the guided completion replays the narrative
    // verbatim while the general one stays generic, so the probe flags this
    // bundle by construction.
    for topic in &topics {
        let general = build_general_prompt(topic);
        responder.insert(prompt_hash(&general), general_probe_text(topic));
        let guided = build_guided_prompt(topic, TopicYear::Y2021);
        responder.insert(prompt_hash(&guided), topic.narrative.clone());
    }

    std::fs::write(
        root.join("responder.json"),
        serde_json::to_string_pretty(&responder)?,
    )?;
    std::fs::write(root.join("plan_prompting.toml"), PLAN_PROMPTING)?;
    std::fs::write(root.join("plan_rag.toml"), PLAN_RAG)?;

    Ok(BundleSummary {
        topics: topics.len(),
        serps: serp_count,
        pages: page_count,
        responder_entries: responder.len(),
    })
}
