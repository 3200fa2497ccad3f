//! Core pipeline for evaluating how well web search engines, large language
//! models and retrieval-augmented variants answer binary health questions.
//!
//! The crate is organized around an append-only [`store::RunStore`] that makes
//! every external interaction (search call, page fetch, model completion)
//! cache-keyed and replayable. Downstream computations (answer labeling, user
//! simulation, metrics, significance tests, memorization probes) are pure
//! functions over those records, so a finished run can be re-rendered
//! byte-for-byte without touching the network.

pub mod answer;
pub mod extract;
pub mod llm;
pub mod memorization;
pub mod policy;
pub mod qa;
pub mod rank;
pub mod report;
pub mod serp;
pub mod stats;
pub mod store;
pub mod topics;
pub mod usermodel;

pub use answer::{AnswerLabel, AnswerRecord};
pub use llm::{Completion, ModelSpec, PromptKind};
pub use policy::NetworkPolicy;
pub use serp::{Engine, Serp, SerpEntry};
pub use store::{RunKind, RunRecord, RunStats, RunStore};
pub use topics::{BinaryStance, Topic, TopicYear};
