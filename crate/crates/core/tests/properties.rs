//! Randomized invariant checks over the core algorithms.

use proptest::prelude::*;

use medseek_core::answer::{AnswerLabel, AnswerRecord};
use medseek_core::extract::{html_to_text, split_passages, PageStatus, PageText, Passage};
use medseek_core::rank::{top_passage, Bm25Scorer};
use medseek_core::stats::{
    answering_score, cumulative_correct_curve, mcnemar_test, wilcoxon_signed_rank, CurveMode,
};
use medseek_core::topics::{parse_topics_xml, serialize_topics_xml, normalize_question};
use medseek_core::usermodel::{diligent_user, lazy_user};
use medseek_core::{BinaryStance, Engine, Topic, TopicYear};

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,8}"
}

fn phrase(max_words: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..=max_words).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn question_normalization_is_idempotent(raw in "[ \t]{0,2}[a-z]{1,6}([ \t\n]{1,3}[a-z]{1,6}){0,5}[ \t]{0,2}\\?") {
        let once = normalize_question(&raw);
        prop_assert_eq!(normalize_question(&once), once);
    }

    #[test]
    fn topic_xml_round_trips(
        queries in prop::collection::vec(phrase(4), 1..5),
        questions in prop::collection::vec(phrase(5), 1..5),
        narratives in prop::collection::vec(phrase(8), 1..5),
        stances in prop::collection::vec(prop::bool::ANY, 1..5),
        year_pick in 0usize..3,
    ) {
        let year = [TopicYear::Y2020, TopicYear::Y2021, TopicYear::Y2022][year_pick];
        let n = queries.len().min(questions.len()).min(narratives.len()).min(stances.len());
        let topics: Vec<Topic> = (0..n)
            .map(|i| {
                Topic::new(
                    i as u32 + 1,
                    queries[i].clone(),
                    &format!("{}?", questions[i]),
                    if stances[i] { BinaryStance::Yes } else { BinaryStance::No },
                    narratives[i].clone(),
                    year,
                    vec![("zzextra".to_string(), narratives[i].clone())],
                )
                .unwrap()
            })
            .collect();
        let xml = serialize_topics_xml(&topics);
        let reparsed = parse_topics_xml(xml.as_bytes(), year, &Default::default()).unwrap();
        prop_assert_eq!(reparsed, topics);
    }

    #[test]
    fn passage_windows_cover_every_word_exactly_once_per_stride(
        total in 1usize..400,
        window in 1usize..60,
        stride_offset in 0usize..60,
    ) {
        let stride = 1 + stride_offset % window;
        let words: Vec<String> = (0..total).map(|i| format!("w{i}")).collect();
        let page = PageText {
            url: "https://example.org/a".into(),
            text: words.join(" "),
            fetched_at: chrono::Utc::now(),
            status: PageStatus::Ok,
        };
        let passages = split_passages(&page, window, stride).unwrap();
        prop_assert!(!passages.is_empty());

        let mut covered = vec![false; total];
        let mut prev_start = None;
        let mut prev_end = 0usize;
        for (i, passage) in passages.iter().enumerate() {
            let (start, end) = passage.word_span;
            prop_assert_eq!(passage.index, i);
            prop_assert_eq!(start % stride, 0);
            prop_assert!(end <= total);
            prop_assert!(end - start <= window);
            if let Some(prev) = prev_start {
                prop_assert!(start > prev);
                prop_assert!(end > prev_end);
            }
            prop_assert_eq!(&passage.text, &words[start..end].join(" "));
            for flag in covered[start..end].iter_mut() {
                *flag = true;
            }
            prev_start = Some(start);
            prev_end = end;
        }
        prop_assert_eq!(prev_end, total);
        prop_assert!(covered.into_iter().all(|c| c));
    }

    #[test]
    fn plain_text_extraction_is_idempotent(text in "[a-zA-Z0-9 \n.,!?']{0,200}") {
        let once = html_to_text(&text);
        prop_assert_eq!(html_to_text(&once), once);
    }

    #[test]
    fn top_passage_ignores_input_order(
        texts in prop::collection::vec(phrase(10), 1..10),
        question in phrase(4),
        seed in 0u64..1000,
    ) {
        let passages: Vec<Passage> = texts
            .iter()
            .enumerate()
            .map(|(i, text)| Passage {
                source_url: format!("https://example.org/{}", i % 3),
                index: i,
                text: text.clone(),
                word_span: (0, 0),
            })
            .collect();
        let scorer = Bm25Scorer::from_corpus(&passages);
        let baseline = top_passage(&question, &passages, &scorer).unwrap();

        let mut shuffled = passages.clone();
        // Cheap deterministic shuffle driven by the seed.
        let mut state = seed.wrapping_add(1);
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            shuffled.swap(i, j);
        }
        let from_shuffled = top_passage(&question, &shuffled, &scorer).unwrap();
        prop_assert_eq!(
            (baseline.passage.source_url, baseline.passage.index),
            (from_shuffled.passage.source_url, from_shuffled.passage.index)
        );
    }

    #[test]
    fn diligent_inspects_at_least_as_much_as_lazy(codes in prop::collection::vec(0u8..3, 0..40)) {
        let records: Vec<AnswerRecord> = codes
            .iter()
            .enumerate()
            .map(|(i, code)| {
                let label = match code {
                    0 => AnswerLabel::Yes,
                    1 => AnswerLabel::No,
                    _ => AnswerLabel::NoAnswer,
                };
                AnswerRecord::new(
                    Engine::Google,
                    1,
                    i as u32 + 1,
                    label,
                    BinaryStance::Yes,
                    "https://example.org/r",
                    Some(0),
                )
            })
            .collect();
        let lazy = lazy_user(&records);
        let diligent = diligent_user(&records);
        prop_assert!(diligent.effort >= lazy.effort);

        let first_answer = records.iter().position(|r| r.label.is_answer());
        let expected_lazy_effort = first_answer.map(|i| i + 1).unwrap_or(records.len());
        prop_assert_eq!(lazy.effort, expected_lazy_effort);
    }

    #[test]
    fn curve_points_and_answering_score_stay_in_range(
        codes in prop::collection::vec((1u32..6, 1u32..21, 0u8..3), 1..60),
        depth in 1u32..21,
        per_topic in prop::bool::ANY,
    ) {
        let mut seen = std::collections::HashSet::new();
        let records: Vec<AnswerRecord> = codes
            .iter()
            .filter(|(topic, rank, _)| seen.insert((*topic, *rank)))
            .map(|(topic, rank, code)| {
                let label = match code {
                    0 => AnswerLabel::Yes,
                    1 => AnswerLabel::No,
                    _ => AnswerLabel::NoAnswer,
                };
                AnswerRecord::new(
                    Engine::Bing,
                    *topic,
                    *rank,
                    label,
                    BinaryStance::Yes,
                    "https://example.org/r",
                    Some(0),
                )
            })
            .collect();
        let mode = if per_topic { CurveMode::PerTopic } else { CurveMode::PerEntry };
        let curve = cumulative_correct_curve(Engine::Bing, &records, depth, mode).unwrap();
        prop_assert_eq!(curve.points.len(), depth as usize);
        for (i, (position, proportion)) in curve.points.iter().enumerate() {
            prop_assert_eq!(*position, i as u32 + 1);
            prop_assert!((0.0..=1.0).contains(proportion));
        }

        let topics = records.iter().map(|r| r.topic_id).collect::<std::collections::HashSet<_>>();
        let score = answering_score(&records, depth).unwrap();
        prop_assert!(score >= 0.0);
        prop_assert!(score <= topics.len() as f64 + 1e-12);
    }

    #[test]
    fn mcnemar_is_order_symmetric_and_bounded(
        pairs in prop::collection::vec((prop::bool::ANY, prop::bool::ANY), 1..30)
    ) {
        let a: Vec<bool> = pairs.iter().map(|(x, _)| *x).collect();
        let b: Vec<bool> = pairs.iter().map(|(_, y)| *y).collect();
        let ab = mcnemar_test(&a, &b).unwrap();
        let ba = mcnemar_test(&b, &a).unwrap();
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert_eq!(ab.b, ba.c);
        prop_assert!(ab.p_value > 0.0 && ab.p_value <= 1.0);
    }

    #[test]
    fn wilcoxon_matches_direct_sign_enumeration(values in prop::collection::vec(-5i8..=5, 1..10)) {
        let diffs: Vec<f64> = values.iter().map(|v| *v as f64).collect();
        let result = wilcoxon_signed_rank(&diffs).unwrap();

        let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
        if nonzero.is_empty() {
            prop_assert!(result.degenerate);
            prop_assert_eq!(result.p_value, 1.0);
            return Ok(());
        }

        // Average ranks over |diff|, doubled to stay integral.
        let n = nonzero.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| nonzero[i].abs().partial_cmp(&nonzero[j].abs()).unwrap());
        let mut doubled = vec![0u64; n];
        let mut pos = 0;
        while pos < n {
            let mut end = pos;
            while end + 1 < n && nonzero[order[end + 1]].abs() == nonzero[order[pos]].abs() {
                end += 1;
            }
            for &idx in &order[pos..=end] {
                doubled[idx] = (pos + end + 2) as u64;
            }
            pos = end + 1;
        }
        let observed: u64 = (0..n).filter(|&i| nonzero[i] > 0.0).map(|i| doubled[i]).sum();

        let mut favorable = 0u64;
        for mask in 0u64..(1 << n) {
            let w: u64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| doubled[i]).sum();
            if w >= observed {
                favorable += 1;
            }
        }
        let oracle = favorable as f64 / (1u64 << n) as f64;
        prop_assert!((result.p_value - oracle).abs() < 1e-12);
    }
}
