//! Prompt rendering, reply parsing, baseline role behavior and provider
//! caching. The rendered ranking prompts are pinned byte for byte against
//! golden files for all three entry-order variants.

use std::cell::{Cell, RefCell};
use std::collections::VecDeque;

use itertools::Itertools;

use sensemaker_core::corpus::{Question, QuestionSet, SectionRef};
use sensemaker_core::embedmetrics::EmbeddingProvider;
use sensemaker_core::llmroles::{
    aggregate_triplet_ranks, evaluator_baseline, extract_spans, rank_triplet, render_triplet_prompt,
    student_baseline, teacher_baseline, BaselineConfig, ChatProvider, ChatRequest, JudgeCategory,
    MockChatProvider, PromptTemplates, PromptVariant, TripletJudgment,
};
use sensemaker_core::provider::{CachedChat, CachedEmbedder, DiskCache, ProviderError};

// ------------------------------------------------------- test providers ---

struct Scripted {
    replies: RefCell<VecDeque<Result<String, ProviderError>>>,
    calls: Cell<usize>,
}

impl Scripted {
    fn new<I: IntoIterator<Item = Result<String, ProviderError>>>(replies: I) -> Self {
        Scripted { replies: RefCell::new(replies.into_iter().collect()), calls: Cell::new(0) }
    }

    fn ok<I: IntoIterator<Item = &'static str>>(replies: I) -> Self {
        Self::new(replies.into_iter().map(|r| Ok(r.to_string())))
    }
}

impl ChatProvider for Scripted {
    fn model_id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, _req: &ChatRequest) -> Result<String, ProviderError> {
        self.calls.set(self.calls.get() + 1);
        self.replies
            .borrow_mut()
            .pop_front()
            .unwrap_or_else(|| panic!("scripted provider ran out of replies"))
    }
}

struct CountingChat {
    calls: Cell<usize>,
}

impl ChatProvider for CountingChat {
    fn model_id(&self) -> &str {
        "counting"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        self.calls.set(self.calls.get() + 1);
        Ok(format!("reply to {} bytes", req.messages.iter().map(|m| m.content.len()).sum::<usize>()))
    }
}

// ------------------------------------------------------- prompt goldens ---

fn golden_sets() -> [(String, Vec<String>); 3] {
    [
        ("sys-one".to_string(), vec!["q one a".to_string(), "q one b".to_string()]),
        ("sys-two".to_string(), vec!["q two a".to_string()]),
        ("sys-three".to_string(), vec!["q three a".to_string()]),
    ]
}

#[test]
fn rendered_prompts_match_the_golden_files_for_all_variants() {
    let material = "Metals soften when heated.";
    let sets = golden_sets();
    let questions: [&[String]; 3] = [&sets[0].1, &sets[1].1, &sets[2].1];
    let template = &PromptTemplates::default().triplet;
    for (variant, golden) in [
        (PromptVariant::Original, include_str!("fixtures/triplet_prompt_original.txt")),
        (PromptVariant::PairSwapped, include_str!("fixtures/triplet_prompt_pair_swapped.txt")),
        (PromptVariant::Reversed, include_str!("fixtures/triplet_prompt_reversed.txt")),
    ] {
        let rendered = render_triplet_prompt(material, &questions, variant, template);
        assert_eq!(rendered, golden, "variant {variant:?} diverged from its golden file");
    }
}

#[test]
fn variant_prompts_differ_only_in_entry_statement_order() {
    let material = "Metals soften when heated.";
    let sets = golden_sets();
    let questions: [&[String]; 3] = [&sets[0].1, &sets[1].1, &sets[2].1];
    let template = &PromptTemplates::default().triplet;
    let original = render_triplet_prompt(material, &questions, PromptVariant::Original, template);
    let swapped = render_triplet_prompt(material, &questions, PromptVariant::PairSwapped, template);
    let orig_lines: Vec<&str> = original.lines().collect();
    let swap_lines: Vec<&str> = swapped.lines().collect();
    assert_eq!(orig_lines.len(), swap_lines.len());
    let entry_base = orig_lines.len() - 8;
    // everything before the entries is identical
    assert_eq!(orig_lines[..entry_base], swap_lines[..entry_base]);
    // labels stay sequential, statements swap in pairs
    let statement = |line: &str| line.split_once(": ").unwrap().1.to_string();
    for k in 0..8usize {
        let printed = swap_lines[entry_base + k];
        assert!(printed.starts_with(&format!("ENTRY{}:", k + 1)));
        let source = if k % 2 == 0 { k + 1 } else { k - 1 };
        assert_eq!(statement(printed), statement(orig_lines[entry_base + source]));
    }
}

// --------------------------------------------------------- reply parsing ---

fn doc() -> SectionRef {
    SectionRef::new("lecture", "s1")
}

fn judge_with_reply(reply: &'static str, variant: PromptVariant) -> TripletJudgment {
    let provider = Scripted::ok([reply]);
    let sets = golden_sets();
    rank_triplet(
        &doc(),
        "Metals soften when heated.",
        &sets,
        variant,
        5,
        &provider,
        &PromptTemplates::default().triplet,
    )
    .unwrap()
}

const FULL_REPLY: &str = "ENTRY1: QUESTIONSET_NUMBER: 1\n\
ENTRY2: QUESTIONSET_NUMBER: 2\n\
ENTRY3: QUESTIONSET_NUMBER: 1\n\
ENTRY4: QUESTIONSET_NUMBER: 2\n\
ENTRY5: QUESTIONSET_NUMBER: 3\n\
ENTRY6: QUESTIONSET_NUMBER: 3\n\
ENTRY7: QUESTIONSET_NUMBER: 2\n\
ENTRY8: QUESTIONSET_NUMBER: 1\n";

#[test]
fn replies_map_printed_entries_to_categories_in_the_original_order() {
    let j = judge_with_reply(FULL_REPLY, PromptVariant::Original);
    let p = &j.presented;
    let div = j.per_category[&JudgeCategory::Diversity].as_ref().unwrap();
    assert_eq!(div.worst, p[0]); // printed ENTRY1 = "least different parts"
    assert_eq!(div.best, p[1]);
    let cov = j.per_category[&JudgeCategory::Coverage].as_ref().unwrap();
    assert_eq!(cov.worst, p[0]);
    assert_eq!(cov.best, p[1]);
    // reasoning named the same set for least and most: invalid
    assert!(j.per_category[&JudgeCategory::Reasoning].is_none());
    let learn = j.per_category[&JudgeCategory::Learning].as_ref().unwrap();
    assert_eq!(learn.worst, p[1]);
    assert_eq!(learn.best, p[0]);
}

#[test]
fn replies_are_decoded_through_the_variant_specific_entry_mapping() {
    // the same literal reply means the opposite under the pair swap
    let j = judge_with_reply(FULL_REPLY, PromptVariant::PairSwapped);
    let p = &j.presented;
    let div = j.per_category[&JudgeCategory::Diversity].as_ref().unwrap();
    assert_eq!(div.best, p[0]); // printed ENTRY1 now carries "most different parts"
    assert_eq!(div.worst, p[1]);

    let j = judge_with_reply(FULL_REPLY, PromptVariant::Reversed);
    let p = &j.presented;
    let learn = j.per_category[&JudgeCategory::Learning].as_ref().unwrap();
    assert_eq!(learn.best, p[0]); // printed ENTRY1 = "most useful for learning"
    assert_eq!(learn.worst, p[1]);
    let div = j.per_category[&JudgeCategory::Diversity].as_ref().unwrap();
    assert_eq!(div.worst, p[0]); // printed ENTRY8 = "least different parts"
    assert_eq!(div.best, p[1]); // printed ENTRY7 = "most different parts"
}

#[test]
fn messy_replies_still_parse_and_bad_entries_invalidate_their_category() {
    let reply = "Here are my answers.\n\
entry1: \"QUESTIONSET_NUMBER\": 3\n\
ENTRY2 - questionset_number: 1\n\
ENTRY3: I cannot decide on this one\n\
ENTRY4: QUESTIONSET_NUMBER: 2\n\
ENTRY5: QUESTIONSET_NUMBER: 9\n\
ENTRY6: QUESTIONSET_NUMBER: 1\n\
ENTRY7: QUESTIONSET_NUMBER: 2\n\
ENTRY8: QUESTIONSET_NUMBER: 3\n";
    let provider = Scripted::new([
        Ok(reply.to_string()),
        Ok(reply.to_string()),
        Ok(reply.to_string()),
        Ok(reply.to_string()),
    ]);
    let sets = golden_sets();
    let j = rank_triplet(
        &doc(),
        "m",
        &sets,
        PromptVariant::Original,
        5,
        &provider,
        &PromptTemplates::default().triplet,
    )
    .unwrap();
    let p = &j.presented;
    let div = j.per_category[&JudgeCategory::Diversity].as_ref().unwrap();
    assert_eq!((div.worst.as_str(), div.best.as_str()), (p[2].as_str(), p[0].as_str()));
    // ENTRY3 had no number and ENTRY5 named a set outside 1..=3
    assert!(j.per_category[&JudgeCategory::Coverage].is_none());
    assert!(j.per_category[&JudgeCategory::Reasoning].is_none());
    assert!(j.per_category[&JudgeCategory::Learning].is_some());
    // unparseable entries exhaust the retry budget before giving up
    assert_eq!(provider.calls.get(), 4);
}

#[test]
fn presentation_order_is_a_seeded_permutation_of_the_inputs() {
    let sets = golden_sets();
    let ids: Vec<&str> = sets.iter().map(|(id, _)| id.as_str()).collect();
    let mut orders = std::collections::BTreeSet::new();
    for seed in 0..12 {
        let provider = Scripted::ok([
            "ENTRY1: QUESTIONSET_NUMBER: 1\nENTRY2: QUESTIONSET_NUMBER: 2\n\
ENTRY3: QUESTIONSET_NUMBER: 1\nENTRY4: QUESTIONSET_NUMBER: 2\n\
ENTRY5: QUESTIONSET_NUMBER: 1\nENTRY6: QUESTIONSET_NUMBER: 2\n\
ENTRY7: QUESTIONSET_NUMBER: 1\nENTRY8: QUESTIONSET_NUMBER: 2\n",
        ]);
        let j = rank_triplet(
            &doc(),
            "m",
            &sets,
            PromptVariant::Original,
            seed,
            &provider,
            &PromptTemplates::default().triplet,
        )
        .unwrap();
        let mut sorted = j.presented.clone();
        sorted.sort();
        let mut want: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
        want.sort();
        assert_eq!(sorted, want);
        orders.insert(j.presented.clone());
    }
    assert!(orders.len() > 1, "the presentation order never varied with the seed");
}

// ------------------------------------------------- mock judge + ranking ---

#[test]
fn mock_judge_triplet_means_match_the_hand_oracle() {
    let systems: Vec<(String, Vec<String>)> = [
        ("a", "alpha topic question"),
        ("b", "beta topic question"),
        ("c", "carbon topic question"),
        ("d", "delta topic question"),
    ]
    .iter()
    .map(|(id, q)| (id.to_string(), vec![q.to_string()]))
    .collect();
    let judge = MockChatProvider::new(0);
    let template = PromptTemplates::default().triplet;
    let mut judgments = Vec::new();
    for (i, combo) in systems.iter().cloned().combinations(3).enumerate() {
        let sets: [(String, Vec<String>); 3] = combo.try_into().unwrap();
        judgments.push(
            rank_triplet(
                &doc(),
                "material text",
                &sets,
                PromptVariant::Original,
                i as u64,
                &judge,
                &template,
            )
            .unwrap(),
        );
    }
    let ids: Vec<String> = systems.iter().map(|(id, _)| id.clone()).collect();
    let table = aggregate_triplet_ranks(&judgments, &ids);
    let tol = 1e-12;
    // the mock prefers lexicographically smaller content, so every category
    // ranks a > b > c > d within each triplet
    let expect = [("a", 3.0, 0.0), ("b", 7.0 / 3.0, (2.0f64 / 9.0).sqrt()), ("c", 5.0 / 3.0, (2.0f64 / 9.0).sqrt()), ("d", 1.0, 0.0)];
    for (sys, mean, std) in expect {
        for category in [
            JudgeCategory::Coverage,
            JudgeCategory::Diversity,
            JudgeCategory::Learning,
            JudgeCategory::Reasoning,
        ] {
            let stats = &table.per_system[sys].by_category[&category];
            assert_eq!(stats.n, 3, "{sys}/{category:?}");
            assert!((stats.mean - mean).abs() < tol, "{sys}/{category:?}: {}", stats.mean);
            assert!((stats.std - std).abs() < tol);
        }
        let overall = &table.per_system[sys].overall;
        assert_eq!(overall.n, 12);
        assert!((overall.mean - mean).abs() < tol);
    }
}

#[test]
fn each_valid_category_hands_out_ranks_one_two_three() {
    let sets = golden_sets();
    let j = judge_with_reply(
        "ENTRY1: QUESTIONSET_NUMBER: 1\nENTRY2: QUESTIONSET_NUMBER: 2\n\
ENTRY3: QUESTIONSET_NUMBER: 2\nENTRY4: QUESTIONSET_NUMBER: 3\n\
ENTRY5: QUESTIONSET_NUMBER: 3\nENTRY6: QUESTIONSET_NUMBER: 1\n\
ENTRY7: QUESTIONSET_NUMBER: 1\nENTRY8: QUESTIONSET_NUMBER: 3\n",
        PromptVariant::Original,
    );
    let ids: Vec<String> = sets.iter().map(|(id, _)| id.clone()).collect();
    let table = aggregate_triplet_ranks(std::slice::from_ref(&j), &ids);
    for category in [
        JudgeCategory::Coverage,
        JudgeCategory::Diversity,
        JudgeCategory::Learning,
        JudgeCategory::Reasoning,
    ] {
        let mut ranks: Vec<f64> =
            ids.iter().map(|id| table.per_system[id].by_category[&category].mean).collect();
        ranks.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(ranks, vec![1.0, 2.0, 3.0], "{category:?}");
    }
    // a system absent from every judgment reports no observations
    let mut with_ghost = ids.clone();
    with_ghost.push("ghost".to_string());
    let table = aggregate_triplet_ranks(std::slice::from_ref(&j), &with_ghost);
    assert_eq!(table.per_system["ghost"].overall.n, 0);
}

#[test]
fn two_judgments_average_to_two_with_unit_spread() {
    // one judgment ranks sys-one best (3), the other worst (1)
    let a = judge_with_reply(FULL_REPLY, PromptVariant::Original);
    let ids: Vec<String> = golden_sets().iter().map(|(id, _)| id.clone()).collect();
    // learning in FULL_REPLY: best = presented[0], worst = presented[1]
    let b = judge_with_reply(
        "ENTRY1: QUESTIONSET_NUMBER: 1\nENTRY2: QUESTIONSET_NUMBER: 2\n\
ENTRY3: QUESTIONSET_NUMBER: 1\nENTRY4: QUESTIONSET_NUMBER: 2\n\
ENTRY5: QUESTIONSET_NUMBER: 1\nENTRY6: QUESTIONSET_NUMBER: 2\n\
ENTRY7: QUESTIONSET_NUMBER: 1\nENTRY8: QUESTIONSET_NUMBER: 2\n",
        PromptVariant::Original,
    );
    // same seed, same sets: the presentation order matches across the two
    assert_eq!(a.presented, b.presented);
    let best_then_worst = &a.presented[0];
    let judgments = vec![a.clone(), b.clone()];
    let table = aggregate_triplet_ranks(&judgments, &ids);
    let learning = &table.per_system[best_then_worst].by_category[&JudgeCategory::Learning];
    // ranks 3 then 1: mean 2, population std 1
    assert_eq!(learning.n, 2);
    assert!((learning.mean - 2.0).abs() < 1e-12);
    assert!((learning.std - 1.0).abs() < 1e-12);
}

// ---------------------------------------------------------------- spans ---

#[test]
fn spans_are_evenly_spaced_and_clamped() {
    let tokens: Vec<String> = (0..100).map(|i| format!("t{i}")).collect();
    let text = tokens.join(" ");
    let spans = extract_spans(&text, 5, 20).unwrap();
    let starts: Vec<usize> = spans.iter().map(|s| s.start_token).collect();
    assert_eq!(starts, vec![0, 20, 40, 60, 80]);
    assert!(spans.iter().all(|s| s.end_token - s.start_token == 20));

    let single = extract_spans(&text, 1, 20).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!((single[0].start_token, single[0].end_token), (0, 20));

    let short = extract_spans("a b c d e", 3, 20).unwrap();
    assert_eq!(short.len(), 3);
    assert!(short.iter().all(|s| (s.start_token, s.end_token) == (0, 5)));

    assert!(extract_spans(&text, 0, 20).is_err());
    assert!(extract_spans(&text, 3, 0).is_err());
    assert!(extract_spans("   ", 3, 5).is_err());
}

// ------------------------------------------------------------- baselines ---

fn baseline_cfg() -> BaselineConfig {
    BaselineConfig { n_questions: 3, span_tokens: 4, ..BaselineConfig::default() }
}

#[test]
fn teacher_baseline_drops_failed_slots_and_keeps_the_rest() {
    let text = "alpha beta gamma delta epsilon zeta eta theta iota kappa lambda mu";
    let provider = Scripted::new([
        Ok(r#"{"question":"What is alpha?","reference_answer":"The first token."}"#.to_string()),
        Err(ProviderError::Transport("connection reset".into())),
        Err(ProviderError::Transport("connection reset".into())),
        Err(ProviderError::Transport("connection reset".into())),
        Err(ProviderError::Transport("connection reset".into())),
        Ok(r#"{"question":"What is iota?","reference_answer":"A later token."}"#.to_string()),
    ]);
    let qs = teacher_baseline(&doc(), text, &provider, &baseline_cfg()).unwrap();
    assert_eq!(qs.questions.len(), 2);
    assert_eq!(qs.questions[0].question, "What is alpha?");
    assert_eq!(qs.questions[0].reference_answer.as_deref(), Some("The first token."));
    assert_eq!(provider.calls.get(), 6);
}

#[test]
fn teacher_baseline_retries_malformed_output_then_drops_the_slot() {
    let text = "alpha beta gamma delta epsilon zeta eta theta";
    let provider = Scripted::ok([
        "not json at all",
        "still not json",
        r#"{"question":"Recovered?","reference_answer":"Yes."}"#,
        r#"{"question":"Two?","reference_answer":"Two."}"#,
        r#"{"question":"Three?","reference_answer":"Three."}"#,
    ]);
    let qs = teacher_baseline(&doc(), text, &provider, &baseline_cfg()).unwrap();
    assert_eq!(qs.questions.len(), 3);
    assert_eq!(qs.questions[0].question, "Recovered?");
}

fn question_set(questions: &[&str]) -> QuestionSet {
    QuestionSet {
        system_id: "teacher-x".to_string(),
        section_ref: doc(),
        questions: questions
            .iter()
            .map(|q| Question { question: q.to_string(), reference_answer: None })
            .collect(),
        transform: None,
        provenance: Vec::new(),
    }
}

#[test]
fn student_baseline_aligns_answers_by_index() {
    let qs = question_set(&["one?", "two?", "three?"]);
    let provider = Scripted::ok([r#"{"answers":["first",null,"third"]}"#]);
    let answers = student_baseline(&doc(), "material", &qs, &provider, &baseline_cfg()).unwrap();
    assert_eq!(
        answers.answers,
        vec![Some("first".to_string()), None, Some("third".to_string())]
    );
    assert_eq!(answers.question_source_id.as_deref(), Some("teacher-x"));
}

#[test]
fn student_baseline_pads_missing_and_ignores_surplus_answers() {
    let qs = question_set(&["one?", "two?"]);
    let provider = Scripted::ok([r#"{"answers":["only"]}"#]);
    let answers = student_baseline(&doc(), "material", &qs, &provider, &baseline_cfg()).unwrap();
    assert_eq!(answers.answers, vec![Some("only".to_string()), None]);

    let provider = Scripted::ok([r#"{"answers":["a","b","c","d"]}"#]);
    let answers = student_baseline(&doc(), "material", &qs, &provider, &baseline_cfg()).unwrap();
    assert_eq!(answers.answers, vec![Some("a".to_string()), Some("b".to_string())]);
}

#[test]
fn student_baseline_never_calls_the_provider_for_empty_question_sets() {
    let qs = question_set(&[]);
    let provider = Scripted::ok([]);
    let answers = student_baseline(&doc(), "material", &qs, &provider, &baseline_cfg()).unwrap();
    assert!(answers.answers.is_empty());
    assert_eq!(provider.calls.get(), 0);
}

#[test]
fn student_baseline_degrades_to_all_null_after_parse_retries() {
    let qs = question_set(&["one?", "two?"]);
    let provider = Scripted::ok(["junk", "junk", "junk", "junk"]);
    let answers = student_baseline(&doc(), "material", &qs, &provider, &baseline_cfg()).unwrap();
    assert_eq!(answers.answers, vec![None, None]);
    assert_eq!(provider.calls.get(), 4);
}

#[test]
fn evaluator_baseline_maps_the_worded_scale_to_twenty_point_steps() {
    for (reply, expected) in [
        ("0", Some(0u8)),
        ("1", Some(20)),
        ("2", Some(40)),
        ("3", Some(60)),
        ("4", Some(80)),
        ("5", Some(100)),
    ] {
        let provider = Scripted::ok([reply]);
        let got = evaluator_baseline("mat", "q", "a", &provider, &baseline_cfg()).unwrap();
        assert_eq!(got, expected, "reply {reply:?}");
    }
    // a rating of 3 wrapped in prose still parses
    let provider = Scripted::ok(["I would give this a 3"]);
    assert_eq!(evaluator_baseline("mat", "q", "a", &provider, &baseline_cfg()).unwrap(), Some(60));
}

#[test]
fn evaluator_baseline_marks_unusable_replies_invalid() {
    let provider = Scripted::ok(["6", "6", "6", "6"]);
    assert_eq!(evaluator_baseline("mat", "q", "a", &provider, &baseline_cfg()).unwrap(), None);
    assert_eq!(provider.calls.get(), 4);
    let provider = Scripted::ok(["no rating here", "still none", "nope", "nothing"]);
    assert_eq!(evaluator_baseline("mat", "q", "a", &provider, &baseline_cfg()).unwrap(), None);
}

// ----------------------------------------------------------------- cache ---

#[test]
fn chat_cache_replays_identical_requests_without_inner_calls() {
    let dir = tempfile::tempdir().unwrap();
    let req = ChatRequest::user("please summarize the annealing section");
    let first = {
        let cached = CachedChat::new(
            Box::new(CountingChat { calls: Cell::new(0) }),
            DiskCache::new(dir.path().join("chat")).unwrap(),
        );
        let first = cached.complete(&req).unwrap();
        let second = cached.complete(&req).unwrap();
        assert_eq!(first, second);
        first
    };
    // a fresh provider instance over the same directory still sees the entry
    let inner = Box::new(CountingChat { calls: Cell::new(0) });
    let cached = CachedChat::new(inner, DiskCache::new(dir.path().join("chat")).unwrap());
    let third = cached.complete(&req).unwrap();
    assert_eq!(third, first);
    // the inner provider was never consulted on the warm path
    let calls_file_count = std::fs::read_dir(dir.path().join("chat")).unwrap().count();
    assert_eq!(calls_file_count, 1);

    // a different request misses the cache
    let other = ChatRequest::user("a different prompt");
    cached.complete(&other).unwrap();
    assert_eq!(std::fs::read_dir(dir.path().join("chat")).unwrap().count(), 2);
}

struct CountingEmbedder {
    calls: RefCell<Vec<Vec<String>>>,
}

impl EmbeddingProvider for CountingEmbedder {
    fn model_id(&self) -> &str {
        "counting-embedder"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        self.calls.borrow_mut().push(texts.to_vec());
        Ok(texts.iter().map(|t| vec![t.len() as f64, 1.0]).collect())
    }
}

#[test]
fn embedding_cache_requests_only_missing_texts() {
    let dir = tempfile::tempdir().unwrap();
    let inner = CountingEmbedder { calls: RefCell::new(Vec::new()) };
    let cached = CachedEmbedder::new(Box::new(inner), DiskCache::new(dir.path()).unwrap());
    let a = cached.embed(&["one".to_string(), "two".to_string()]).unwrap();
    let b = cached.embed(&["two".to_string(), "three".to_string()]).unwrap();
    assert_eq!(a[1], b[0]);
    assert_eq!(b[1], vec![5.0, 1.0]);
    // warm replay: identical output, no further misses
    let c = cached.embed(&["one".to_string(), "two".to_string(), "three".to_string()]).unwrap();
    assert_eq!(c, vec![a[0].clone(), a[1].clone(), b[1].clone()]);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 3);
}
