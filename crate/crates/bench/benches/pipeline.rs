//! Benchmarks for the hot paths: passage scoring, simulated users over
//! labeled rankings, the exact signed-rank tail, and the overlap metrics.

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use medseek_core::answer::{AnswerLabel, AnswerRecord};
use medseek_core::extract::{split_passages, PageStatus, PageText};
use medseek_core::memorization::{levenshtein_similarity, rouge_l};
use medseek_core::rank::{score_passages, ScorerConfig};
use medseek_core::stats::{mcnemar_test, wilcoxon_signed_rank};
use medseek_core::usermodel::{diligent_user, lazy_user};
use medseek_core::{BinaryStance, Engine};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const WORDS: [&str; 16] = [
    "vitamin", "cold", "treatment", "clinical", "trial", "evidence", "honey", "cough",
    "children", "review", "randomized", "placebo", "dose", "symptom", "relief", "study",
];

fn synthetic_page(rng: &mut StdRng, words: usize) -> PageText {
    let text: Vec<&str> = (0..words).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
    PageText {
        url: "https://example.org/benchmark".to_string(),
        text: text.join(" "),
        fetched_at: chrono::DateTime::UNIX_EPOCH,
        status: PageStatus::Ok,
    }
}

fn bench_passage_scoring(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(7);
    let page = synthetic_page(&mut rng, 6000);
    let passages = split_passages(&page, 120, 60).unwrap();
    let scorer = ScorerConfig::Bm25.build(&passages);
    let question = "does vitamin treatment relieve cold symptom";
    c.bench_function("bm25_score_100_passages", |b| {
        b.iter(|| score_passages(black_box(question), black_box(&passages), &*scorer).unwrap())
    });
}

fn random_ranking(rng: &mut StdRng, depth: u32) -> Vec<AnswerRecord> {
    (1..=depth)
        .map(|rank| {
            let label = match rng.gen_range(0..3) {
                0 => AnswerLabel::Yes,
                1 => AnswerLabel::No,
                _ => AnswerLabel::NoAnswer,
            };
            AnswerRecord::new(
                Engine::Google,
                1,
                rank,
                label,
                BinaryStance::Yes,
                "https://example.org/r",
                Some(0),
            )
        })
        .collect()
}

fn bench_user_models(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(13);
    let rankings: Vec<Vec<AnswerRecord>> = (0..200).map(|_| random_ranking(&mut rng, 20)).collect();
    c.bench_function("user_models_200_rankings", |b| {
        b.iter(|| {
            for ranking in &rankings {
                black_box(lazy_user(ranking));
                black_box(diligent_user(ranking));
            }
        })
    });
}

fn bench_exact_tests(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(17);
    let diffs: Vec<f64> = (0..25).map(|_| rng.gen_range(-3i32..=3) as f64).collect();
    c.bench_function("wilcoxon_exact_n25", |b| {
        b.iter(|| wilcoxon_signed_rank(black_box(&diffs)).unwrap())
    });
    let a: Vec<bool> = (0..50).map(|_| rng.gen_bool(0.6)).collect();
    let other: Vec<bool> = (0..50).map(|_| rng.gen_bool(0.4)).collect();
    c.bench_function("mcnemar_50_topics", |b| {
        b.iter(|| mcnemar_test(black_box(&a), black_box(&other)).unwrap())
    });
}

fn bench_overlap_metrics(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(23);
    let narrative: String = (0..40)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ");
    let completion: String = (0..40)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ");
    c.bench_function("rouge_l_40_tokens", |b| {
        b.iter_batched(
            || (completion.clone(), narrative.clone()),
            |(cand, refr)| rouge_l(black_box(&cand), black_box(&refr)),
            BatchSize::SmallInput,
        )
    });
    c.bench_function("levenshtein_240_chars", |b| {
        b.iter_batched(
            || (completion.clone(), narrative.clone()),
            |(a, other)| levenshtein_similarity(black_box(&a), black_box(&other)),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(
    benches,
    bench_passage_scoring,
    bench_user_models,
    bench_exact_tests,
    bench_overlap_metrics
);
criterion_main!(benches);
