//! Stage orchestration: each stage loads the working corpus snapshot, adds
//! its own artifacts, and saves the snapshot back, so any prefix of the
//! pipeline leaves a state the remaining stages can pick up.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sensemaker_core::adversarial::{
    build_adversarial_suite, vocabulary_from_texts, AdversarialItem, QaItem, SuiteConfig,
};
use sensemaker_core::corpus::{
    build_mcq_items, export_questionnaire, load_corpus, resolve_question_set, save_corpus,
    AnswerSet, McqConfig, McqItem, McqMode, McqTemplates, QaPair, Question, QuestionSet,
    RatingEntry, RatingSet,
};
use sensemaker_core::embedmetrics::{aggregate_ranks, score_question_set, Quantity, ScoresBySystem};
use sensemaker_core::lexmetrics::{agreement_rate, class_accuracy, rouge_l_recall, LexError};
use sensemaker_core::llmroles::{
    aggregate_triplet_ranks, all_triplets, evaluator_baseline, rank_triplet, student_baseline,
    teacher_baseline, BaselineConfig, JudgeCategory, PromptVariant, TripletJudgment,
};
use sensemaker_core::report::{
    analysis_verdict_phrase, analysis_vocab_split, mean_rating_by_group, rating_records,
    render_report, Cell, GroupStats, RatingRecord, SplitAccuracy, Table,
};
use sensemaker_core::{
    ChatProvider, ChatRequest, Corpus, EmbedConfig, PromptTemplates, RunReport, SectionRef,
    Transform,
};

use crate::config::Config;
use crate::providers::Providers;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Ingest,
    Teacher,
    Student,
    Adversarial,
    Evaluator,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Teacher,
        Stage::Student,
        Stage::Adversarial,
        Stage::Evaluator,
        Stage::Report,
    ];
}

struct RunPaths {
    out_dir: PathBuf,
}

impl RunPaths {
    fn work(&self) -> PathBuf {
        self.out_dir.join("work")
    }

    fn records(&self) -> PathBuf {
        self.out_dir.join("records")
    }

    fn report(&self) -> PathBuf {
        self.out_dir.join("report")
    }

    fn questionnaires(&self) -> PathBuf {
        self.out_dir.join("questionnaires")
    }
}

// ------------------------------------------------------------ record rows ---

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeacherScoreRecord {
    pub system_id: String,
    pub kind: String,
    pub section_id: String,
    pub relevance: f64,
    pub coverage: f64,
    pub diversity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RougeRecord {
    pub answer_source_id: String,
    pub question_source_id: String,
    pub kind: String,
    pub section_id: String,
    pub question_index: usize,
    /// Missing when the question has no usable reference answer.
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McqPredictionRecord {
    pub mode: McqMode,
    pub item_index: usize,
    pub model_id: String,
    /// Missing when the call budget ran out.
    pub reply: Option<String>,
}

// ---------------------------------------------------------------- helpers ---

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut out = String::new();
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        out.push_str(&line);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Option<Vec<T>>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(line)
                .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(Some(rows))
}

/// Working snapshot when one exists, otherwise the source corpus.
fn load_state(cfg: &Config, paths: &RunPaths) -> Result<Corpus, CliError> {
    let work = paths.work();
    if work.join("materials.jsonl").exists() {
        Ok(load_corpus(&work)?)
    } else {
        Ok(load_corpus(&cfg.corpus_dir)?)
    }
}

fn baseline_cfg(cfg: &Config) -> BaselineConfig {
    BaselineConfig {
        n_questions: cfg.roles.n_questions,
        span_tokens: cfg.roles.span_tokens,
        max_retries: cfg.roles.max_retries,
        templates: PromptTemplates::default(),
    }
}

fn embed_cfg(cfg: &Config) -> EmbedConfig {
    EmbedConfig {
        window_tokens: cfg.embedding.window_tokens,
        stride_tokens: cfg.embedding.stride_tokens,
        epsilon: cfg.embedding.epsilon,
    }
}

fn section_text<'a>(corpus: &'a Corpus, sref: &SectionRef) -> Result<&'a str, CliError> {
    corpus
        .section(sref)
        .map(|s| s.text.as_str())
        .ok_or_else(|| CliError::Data(format!("no section {sref} in the corpus")))
}

/// One free-form exchange with the retry budget of the role calls. A spent
/// budget yields `None` rather than failing the stage.
fn ask_text<P: ChatProvider + ?Sized>(
    provider: &P,
    prompt: String,
    attempts: usize,
) -> Result<Option<String>, CliError> {
    let req = ChatRequest::user(prompt);
    for _ in 0..attempts {
        match provider.complete(&req) {
            Ok(reply) => return Ok(Some(reply)),
            Err(e) if e.is_retryable() => log::warn!("provider call failed, retrying: {e}"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(None)
}

fn reference_suffix(system_id: &str) -> bool {
    system_id.ends_with("::reference")
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

// ----------------------------------------------------------------- stages ---

pub fn cmd_run(cfg: &Config, providers: &Providers, stages: &[Stage]) -> Result<(), CliError> {
    let paths = RunPaths { out_dir: cfg.out_dir.clone() };
    for stage in stages {
        match stage {
            Stage::Ingest => stage_ingest(cfg, &paths)?,
            Stage::Teacher => stage_teacher(cfg, providers, &paths)?,
            Stage::Student => stage_student(cfg, providers, &paths)?,
            Stage::Adversarial => stage_adversarial(cfg, &paths)?,
            Stage::Evaluator => stage_evaluator(cfg, providers, &paths)?,
            Stage::Report => stage_report(cfg, providers, &paths)?,
        }
    }
    Ok(())
}

fn stage_ingest(cfg: &Config, paths: &RunPaths) -> Result<(), CliError> {
    let corpus = load_corpus(&cfg.corpus_dir)?;
    let sections: usize = corpus.materials.iter().map(|m| m.sections.len()).sum();
    log::info!(
        "ingest: {} kinds, {sections} sections, {} question sets, {} answer sets, {} rating sets, {} fact-check records",
        corpus.materials.len(),
        corpus.question_sets.len(),
        corpus.answer_sets.len(),
        corpus.rating_sets.len(),
        corpus.factcheck.len()
    );
    save_corpus(&corpus, paths.work())?;
    Ok(())
}

fn stage_teacher(cfg: &Config, providers: &Providers, paths: &RunPaths) -> Result<(), CliError> {
    let mut corpus = load_state(cfg, paths)?;
    let bcfg = baseline_cfg(cfg);
    let model = providers.chat.model_id().to_string();
    corpus.question_sets.retain(|q| q.system_id != model);

    let mut generated = Vec::new();
    for material in &corpus.materials {
        for section in &material.sections {
            let sref = SectionRef::new(&material.kind, &section.section_id);
            generated.push(teacher_baseline(&sref, &section.text, providers.chat.as_ref(), &bcfg)?);
        }
    }
    let made = generated.len();
    corpus.question_sets.extend(generated);
    log::info!("teacher: generated {made} question sets as {model}");
    save_corpus(&corpus, paths.work())?;
    Ok(())
}

fn stage_student(cfg: &Config, providers: &Providers, paths: &RunPaths) -> Result<(), CliError> {
    let mut corpus = load_state(cfg, paths)?;
    let bcfg = baseline_cfg(cfg);
    let model = providers.chat.model_id().to_string();
    corpus
        .answer_sets
        .retain(|a| a.system_id != model && !reference_suffix(&a.system_id));

    let mut generated = Vec::new();
    for qs in &corpus.question_sets {
        if qs.transform.is_some() {
            continue;
        }
        let text = section_text(&corpus, &qs.section_ref)?;
        generated.push(student_baseline(&qs.section_ref, text, qs, providers.chat.as_ref(), &bcfg)?);

        // The teacher's own reference answers compete as an answer set too.
        if qs.questions.iter().any(|q| q.reference_answer.is_some()) {
            generated.push(AnswerSet {
                system_id: format!("{}::reference", qs.system_id),
                section_ref: qs.section_ref.clone(),
                answers: qs.questions.iter().map(|q| q.reference_answer.clone()).collect(),
                question_source_id: Some(qs.system_id.clone()),
                transform: None,
                provenance: Vec::new(),
            });
        }
    }
    let made = generated.len();
    corpus.answer_sets.extend(generated);
    log::info!("student: added {made} answer sets");
    save_corpus(&corpus, paths.work())?;
    Ok(())
}

/// Question/answer pairs eligible for corruption: plain sets only, one item
/// per answered question.
fn qa_items(corpus: &Corpus) -> Result<Vec<QaItem>, CliError> {
    let mut items = Vec::new();
    for aset in &corpus.answer_sets {
        if aset.transform.is_some() || reference_suffix(&aset.system_id) {
            continue;
        }
        let qset = resolve_question_set(
            &corpus.question_sets,
            &aset.section_ref,
            aset.question_source_id.as_deref(),
        )?;
        if qset.transform.is_some() {
            continue;
        }
        for (idx, answer) in aset.answers.iter().enumerate() {
            let Some(answer) = answer else { continue };
            items.push(QaItem {
                section_ref: aset.section_ref.clone(),
                question_source_id: qset.system_id.clone(),
                answer_source_id: aset.system_id.clone(),
                question_index: idx,
                question: qset.questions[idx].question.clone(),
                answer: answer.clone(),
            });
        }
    }
    Ok(items)
}

/// Drops rating entries whose answer or question source no longer resolves.
fn prune_dangling_ratings(corpus: &mut Corpus) {
    let asets: BTreeSet<(String, String, String)> = corpus
        .answer_sets
        .iter()
        .map(|a| (a.section_ref.kind.clone(), a.section_ref.section_id.clone(), a.system_id.clone()))
        .collect();
    let qsets = corpus.question_sets.clone();
    let mut dropped = 0usize;
    for set in &mut corpus.rating_sets {
        set.entries.retain(|e| {
            let key = (
                e.section_ref.kind.clone(),
                e.section_ref.section_id.clone(),
                e.answer_source_id.clone(),
            );
            let ok = asets.contains(&key)
                && (e.question_source_id.is_none()
                    || resolve_question_set(
                        &qsets,
                        &e.section_ref,
                        e.question_source_id.as_deref(),
                    )
                    .is_ok());
            if !ok {
                dropped += 1;
            }
            ok
        });
    }
    corpus.rating_sets.retain(|s| !s.entries.is_empty());
    if dropped > 0 {
        log::warn!("dropped {dropped} rating entries that referenced rebuilt derived sets");
    }
}

fn stage_adversarial(cfg: &Config, paths: &RunPaths) -> Result<(), CliError> {
    let mut corpus = load_state(cfg, paths)?;
    // Derived sets are rebuilt from scratch on every run of this stage.
    corpus.question_sets.retain(|q| q.transform.is_none());
    corpus.answer_sets.retain(|a| a.transform.is_none());

    let items = qa_items(&corpus)?;
    if items.is_empty() {
        log::warn!("adversarial: no answered questions to corrupt; skipping");
        prune_dangling_ratings(&mut corpus);
        save_corpus(&corpus, paths.work())?;
        write_records::<AdversarialItem>(&paths.records().join("adversarial_items.jsonl"), &[])?;
        return Ok(());
    }

    let vocabulary = vocabulary_from_texts(
        corpus
            .materials
            .iter()
            .flat_map(|m| m.sections.iter().map(|s| s.text.as_str())),
    );

    // Answer and material corruptions apply to every pair. Question
    // corruptions collapse to one carrier pair per question, so the derived
    // question set id stays unique within its section.
    let answer_side = SuiteConfig {
        transforms: vec![
            Transform::AnswersSwapped,
            Transform::AnswerRandomText,
            Transform::AnswerWordsShuffled,
            Transform::MaterialSwapped,
        ],
        group_by_kind: cfg.adversarial.group_by_kind,
        seed: cfg.seed,
    };
    let mut suite = build_adversarial_suite(&items, &vocabulary, &answer_side)?;

    let mut question_items = items.clone();
    question_items.sort_by(|a, b| {
        (
            &a.section_ref.kind,
            &a.section_ref.section_id,
            &a.question_source_id,
            a.question_index,
            &a.answer_source_id,
        )
            .cmp(&(
                &b.section_ref.kind,
                &b.section_ref.section_id,
                &b.question_source_id,
                b.question_index,
                &b.answer_source_id,
            ))
    });
    let mut seen = BTreeSet::new();
    question_items.retain(|it| {
        seen.insert((
            it.section_ref.kind.clone(),
            it.section_ref.section_id.clone(),
            it.question_source_id.clone(),
            it.question_index,
        ))
    });
    let question_side = SuiteConfig {
        transforms: vec![Transform::QuestionRandomText, Transform::QuestionWordsShuffled],
        group_by_kind: cfg.adversarial.group_by_kind,
        seed: cfg.seed,
    };
    suite.extend(build_adversarial_suite(&question_items, &vocabulary, &question_side)?);

    // Materialize the corrupted pairs as derived sets so ratings of them can
    // be traced back through the corpus like any other rating.
    let mut derived_answers: BTreeMap<(String, String, String), AnswerSet> = BTreeMap::new();
    let mut derived_questions: BTreeMap<(String, String, String), QuestionSet> = BTreeMap::new();
    for adv in &suite {
        let base = &adv.base;
        match adv.transform {
            Transform::AnswersSwapped
            | Transform::AnswerRandomText
            | Transform::AnswerWordsShuffled
            | Transform::MaterialSwapped => {
                let id = format!("{}+{}", base.answer_source_id, adv.transform.tag());
                let key = (
                    base.section_ref.kind.clone(),
                    base.section_ref.section_id.clone(),
                    id.clone(),
                );
                let original = corpus
                    .answer_sets
                    .iter()
                    .find(|a| {
                        a.system_id == base.answer_source_id && a.section_ref == base.section_ref
                    })
                    .ok_or_else(|| {
                        CliError::Data(format!(
                            "adversarial base answer set {} vanished",
                            base.answer_source_id
                        ))
                    })?;
                let entry = derived_answers.entry(key).or_insert_with(|| AnswerSet {
                    system_id: id,
                    section_ref: base.section_ref.clone(),
                    answers: vec![None; original.answers.len()],
                    question_source_id: Some(base.question_source_id.clone()),
                    transform: Some(adv.transform),
                    provenance: Vec::new(),
                });
                entry.answers[base.question_index] = Some(adv.item.answer.clone());
                entry.provenance.push(base.key());
                entry.provenance.extend(adv.provenance.iter().cloned());
            }
            Transform::QuestionRandomText | Transform::QuestionWordsShuffled => {
                let id = format!("{}+{}", base.question_source_id, adv.transform.tag());
                let key = (
                    base.section_ref.kind.clone(),
                    base.section_ref.section_id.clone(),
                    id.clone(),
                );
                let original = resolve_question_set(
                    &corpus.question_sets,
                    &base.section_ref,
                    Some(&base.question_source_id),
                )?;
                let questions: Vec<Question> = original
                    .questions
                    .iter()
                    .map(|q| Question { question: q.question.clone(), reference_answer: None })
                    .collect();
                let entry = derived_questions.entry(key).or_insert_with(|| QuestionSet {
                    system_id: id,
                    section_ref: base.section_ref.clone(),
                    questions,
                    transform: Some(adv.transform),
                    provenance: Vec::new(),
                });
                entry.questions[base.question_index].question = adv.item.question.clone();
                entry.provenance.push(base.key());
            }
        }
    }
    let n_answers = derived_answers.len();
    let n_questions = derived_questions.len();
    corpus.answer_sets.extend(derived_answers.into_values());
    corpus.question_sets.extend(derived_questions.into_values());
    prune_dangling_ratings(&mut corpus);

    log::info!(
        "adversarial: {} corrupted items, {n_answers} derived answer sets, {n_questions} derived question sets",
        suite.len()
    );
    save_corpus(&corpus, paths.work())?;
    write_records(&paths.records().join("adversarial_items.jsonl"), &suite)?;
    Ok(())
}

fn stage_evaluator(cfg: &Config, providers: &Providers, paths: &RunPaths) -> Result<(), CliError> {
    let mut corpus = load_state(cfg, paths)?;
    let bcfg = baseline_cfg(cfg);
    let chat = providers.chat.as_ref();
    let model = chat.model_id().to_string();
    corpus.rating_sets.retain(|r| r.system_id != model);

    let mut entries: Vec<RatingEntry> = Vec::new();

    // Plain pairs are graded straight off the corpus.
    for aset in &corpus.answer_sets {
        if aset.transform.is_some() {
            continue;
        }
        let qset = resolve_question_set(
            &corpus.question_sets,
            &aset.section_ref,
            aset.question_source_id.as_deref(),
        )?;
        let material = section_text(&corpus, &aset.section_ref)?;
        for (idx, answer) in aset.answers.iter().enumerate() {
            let Some(answer) = answer else { continue };
            let question = &qset.questions[idx].question;
            match evaluator_baseline(material, question, answer, chat, &bcfg)? {
                Some(score) => entries.push(RatingEntry {
                    section_ref: aset.section_ref.clone(),
                    question_index: idx,
                    answer_source_id: aset.system_id.clone(),
                    question_source_id: Some(qset.system_id.clone()),
                    raw_score: f64::from(score),
                    rescued_score: None,
                }),
                None => log::warn!(
                    "no usable rating for {}#{idx} by {}",
                    aset.section_ref,
                    aset.system_id
                ),
            }
        }
    }

    // Corrupted pairs carry their own material reference, which for material
    // swaps points at the donor section.
    let adversarial: Vec<AdversarialItem> =
        read_records(&paths.records().join("adversarial_items.jsonl"))?.unwrap_or_default();
    for adv in &adversarial {
        let material = section_text(&corpus, &adv.item.section_ref)?;
        match evaluator_baseline(material, &adv.item.question, &adv.item.answer, chat, &bcfg)? {
            Some(score) => {
                let (answer_source_id, question_source_id) = match adv.transform {
                    Transform::QuestionRandomText | Transform::QuestionWordsShuffled => (
                        adv.base.answer_source_id.clone(),
                        format!("{}+{}", adv.base.question_source_id, adv.transform.tag()),
                    ),
                    _ => (
                        format!("{}+{}", adv.base.answer_source_id, adv.transform.tag()),
                        adv.base.question_source_id.clone(),
                    ),
                };
                entries.push(RatingEntry {
                    section_ref: adv.base.section_ref.clone(),
                    question_index: adv.base.question_index,
                    answer_source_id,
                    question_source_id: Some(question_source_id),
                    raw_score: f64::from(score),
                    rescued_score: None,
                });
            }
            None => log::warn!("no usable rating for corrupted item {}", adv.base.key()),
        }
    }

    let made = entries.len();
    if !entries.is_empty() {
        corpus.rating_sets.push(RatingSet { system_id: model.clone(), entries });
    }
    log::info!("evaluator: {made} ratings by {model}");
    save_corpus(&corpus, paths.work())?;

    // Fact-check quiz: build the lettered items and collect one reply each.
    if corpus.factcheck.is_empty() {
        return Ok(());
    }
    let mcq_cfg = McqConfig {
        max_options: cfg.mcq.max_options,
        unknowable_fraction: cfg.mcq.unknowable_fraction,
        seed: cfg.seed,
        templates: McqTemplates::default(),
    };
    let mut all_items: Vec<McqItem> = Vec::new();
    let mut predictions: Vec<McqPredictionRecord> = Vec::new();
    for mode in [McqMode::DetermineStatement, McqMode::DetermineExplanation] {
        let items = build_mcq_items(&corpus.factcheck, mode, &mcq_cfg)?;
        for (item_index, item) in items.iter().enumerate() {
            let prompt = format!("{}\n\n{}", item.material_text, item.question_text);
            let reply = ask_text(chat, prompt, bcfg.max_retries + 1)?;
            if reply.is_none() {
                log::warn!("no quiz reply for {} item {item_index}", mode.tag());
            }
            predictions.push(McqPredictionRecord {
                mode,
                item_index,
                model_id: model.clone(),
                reply,
            });
        }
        all_items.extend(items);
    }
    log::info!("evaluator: {} fact-check quiz replies", predictions.len());
    write_records(&paths.records().join("mcq_items.jsonl"), &all_items)?;
    write_records(&paths.records().join("mcq_predictions.jsonl"), &predictions)?;
    Ok(())
}

// ------------------------------------------------------- table assembly ---

fn stats_row(group: &str, stats: &GroupStats) -> Vec<Cell> {
    vec![
        Cell::Text(group.to_string()),
        Cell::Int(stats.n as i64),
        Cell::Float(stats.mean),
        Cell::Float(stats.std),
    ]
}

fn teacher_tables(
    corpus: &Corpus,
    providers: &Providers,
    cfg: &Config,
    paths: &RunPaths,
) -> Result<BTreeMap<String, Table>, CliError> {
    let mut tables = BTreeMap::new();
    let ecfg = embed_cfg(cfg);
    let embedder = providers.embedder.as_ref();

    let mut scores: ScoresBySystem = BTreeMap::new();
    let mut score_records: Vec<TeacherScoreRecord> = Vec::new();
    for qs in &corpus.question_sets {
        if qs.transform.is_some() {
            continue;
        }
        let text = section_text(corpus, &qs.section_ref)?;
        let questions: Vec<String> = qs.questions.iter().map(|q| q.question.clone()).collect();
        let score = score_question_set(text, &questions, embedder, &ecfg)?;
        scores
            .entry(qs.system_id.clone())
            .or_default()
            .insert(qs.section_ref.to_string(), score);
        score_records.push(TeacherScoreRecord {
            system_id: qs.system_id.clone(),
            kind: qs.section_ref.kind.clone(),
            section_id: qs.section_ref.section_id.clone(),
            relevance: score.relevance,
            coverage: score.coverage,
            diversity: score.diversity,
        });
    }
    write_records(&paths.records().join("teacher_scores.jsonl"), &score_records)?;

    if scores.len() >= 2 {
        let ranks = aggregate_ranks(&scores, cfg.seed)?;
        let mut table = Table {
            columns: vec![
                "system".into(),
                "quantity".into(),
                "n".into(),
                "mean_rank".into(),
                "std".into(),
            ],
            rows: Vec::new(),
        };
        for (system, by_quantity) in &ranks {
            for quantity in Quantity::ALL {
                let Some(summary) = by_quantity.get(&quantity) else { continue };
                table.rows.push(vec![
                    Cell::Text(system.clone()),
                    Cell::Text(quantity.label().to_string()),
                    Cell::Int(summary.n as i64),
                    Cell::Float(summary.mean),
                    Cell::Float(summary.std),
                ]);
            }
        }
        tables.insert("embed_mean_rank".to_string(), table);
    } else {
        log::warn!("need at least two question set systems to rank; found {}", scores.len());
    }

    // Triplet judging covers every three-way combination per section.
    let chat = providers.chat.as_ref();
    let templates = PromptTemplates::default();
    let mut judgments: Vec<TripletJudgment> = Vec::new();
    for material in &corpus.materials {
        for section in &material.sections {
            let sref = SectionRef::new(&material.kind, &section.section_id);
            let mut sets: Vec<(String, Vec<String>)> = corpus
                .question_sets
                .iter()
                .filter(|q| {
                    q.transform.is_none() && q.section_ref == sref && !q.questions.is_empty()
                })
                .map(|q| {
                    (
                        q.system_id.clone(),
                        q.questions.iter().map(|x| x.question.clone()).collect(),
                    )
                })
                .collect();
            sets.sort_by(|a, b| a.0.cmp(&b.0));
            if sets.len() < 3 {
                continue;
            }
            for combo in all_triplets(sets.len()) {
                let triple = [
                    sets[combo[0]].clone(),
                    sets[combo[1]].clone(),
                    sets[combo[2]].clone(),
                ];
                for variant in PromptVariant::ALL {
                    judgments.push(rank_triplet(
                        &sref,
                        &section.text,
                        &triple,
                        variant,
                        cfg.seed,
                        chat,
                        &templates.triplet,
                    )?);
                }
            }
        }
    }
    write_records(&paths.records().join("judge_triplets.jsonl"), &judgments)?;

    for variant in PromptVariant::ALL {
        let of_variant: Vec<TripletJudgment> =
            judgments.iter().filter(|j| j.variant == variant).cloned().collect();
        if of_variant.is_empty() {
            continue;
        }
        let system_ids: Vec<String> = of_variant
            .iter()
            .flat_map(|j| j.presented.iter().cloned())
            .collect::<BTreeSet<String>>()
            .into_iter()
            .collect();
        let rank_table = aggregate_triplet_ranks(&of_variant, &system_ids);
        let mut table = Table {
            columns: vec![
                "system".into(),
                "category".into(),
                "n".into(),
                "mean_rank".into(),
                "std".into(),
            ],
            rows: Vec::new(),
        };
        for (system, ranks) in &rank_table.per_system {
            if ranks.overall.n == 0 {
                continue;
            }
            for category in JudgeCategory::ALL {
                let Some(stats) = ranks.by_category.get(&category) else { continue };
                table.rows.push(vec![
                    Cell::Text(system.clone()),
                    Cell::Text(category.label().to_string()),
                    Cell::Int(stats.n as i64),
                    Cell::Float(stats.mean),
                    Cell::Float(stats.std),
                ]);
            }
            table.rows.push(vec![
                Cell::Text(system.clone()),
                Cell::Text("overall".to_string()),
                Cell::Int(ranks.overall.n as i64),
                Cell::Float(ranks.overall.mean),
                Cell::Float(ranks.overall.std),
            ]);
        }
        tables.insert(format!("judge_rank_{}", variant.label()), table);
    }

    Ok(tables)
}

fn student_tables(
    corpus: &Corpus,
    paths: &RunPaths,
) -> Result<(BTreeMap<String, Table>, Vec<RougeRecord>), CliError> {
    let mut records: Vec<RougeRecord> = Vec::new();
    for aset in &corpus.answer_sets {
        if aset.transform.is_some() || reference_suffix(&aset.system_id) {
            continue;
        }
        let qset = resolve_question_set(
            &corpus.question_sets,
            &aset.section_ref,
            aset.question_source_id.as_deref(),
        )?;
        if qset.transform.is_some() {
            continue;
        }
        for (idx, answer) in aset.answers.iter().enumerate() {
            let Some(answer) = answer else { continue };
            let recall = match &qset.questions[idx].reference_answer {
                Some(reference) => match rouge_l_recall(reference, answer) {
                    Ok(value) => Some(value),
                    Err(LexError::EmptyReference) => {
                        log::warn!(
                            "reference for {}#{idx} of {} has no tokens",
                            aset.section_ref,
                            qset.system_id
                        );
                        None
                    }
                    Err(e) => return Err(e.into()),
                },
                None => None,
            };
            records.push(RougeRecord {
                answer_source_id: aset.system_id.clone(),
                question_source_id: qset.system_id.clone(),
                kind: aset.section_ref.kind.clone(),
                section_id: aset.section_ref.section_id.clone(),
                question_index: idx,
                recall,
            });
        }
    }
    write_records(&paths.records().join("rouge_scores.jsonl"), &records)?;

    let mut tables = BTreeMap::new();
    let mut by = |name: &str, column: &str, key: fn(&RougeRecord) -> String| {
        let pairs: Vec<(String, Option<f64>)> =
            records.iter().map(|r| (key(r), r.recall)).collect();
        let stats = sensemaker_core::report::grouped_stats(&pairs);
        let mut table = Table {
            columns: vec![column.into(), "n".into(), "mean_recall".into(), "std".into()],
            rows: Vec::new(),
        };
        for (group, s) in &stats {
            table.rows.push(stats_row(group, s));
        }
        tables.insert(name.to_string(), table);
    };
    by("rouge_recall_by_system", "system", |r| r.answer_source_id.clone());
    by("rouge_recall_by_kind", "kind", |r| r.kind.clone());
    by("rouge_recall_by_question_source", "question_source", |r| r.question_source_id.clone());

    Ok((tables, records))
}

fn evaluator_tables(
    corpus: &Corpus,
    rouge_records: &[RougeRecord],
    paths: &RunPaths,
) -> Result<BTreeMap<String, Table>, CliError> {
    let records = rating_records(corpus)?;
    write_records(&paths.records().join("rating_records.jsonl"), &records)?;

    let mut tables = BTreeMap::new();
    let mut grouped = |name: &str, column: &str, key: fn(&RatingRecord) -> String| {
        let mut table = mean_rating_by_group(&records, key);
        table.columns[0] = column.to_string();
        tables.insert(name.to_string(), table);
    };
    grouped("mean_rating_by_category", "category", |r| r.category.clone());
    grouped("mean_rating_by_evaluator", "evaluator", |r| r.evaluator_id.clone());
    grouped("mean_rating_by_kind", "kind", |r| r.kind.clone());

    // Per answering system: its own answers versus the reference answers of
    // the question sets it authored.
    let student_pairs: Vec<(String, Option<f64>)> = records
        .iter()
        .filter(|r| r.category == "student")
        .map(|r| (r.answer_source_id.clone(), r.rescued.map(f64::from)))
        .collect();
    let teacher_pairs: Vec<(String, Option<f64>)> = records
        .iter()
        .filter(|r| r.category == "gold")
        .filter_map(|r| {
            let system = r.answer_source_id.strip_suffix("::reference")?;
            Some((system.to_string(), r.rescued.map(f64::from)))
        })
        .collect();
    let student_stats = sensemaker_core::report::grouped_stats(&student_pairs);
    let teacher_stats = sensemaker_core::report::grouped_stats(&teacher_pairs);
    let systems: BTreeSet<String> =
        student_stats.keys().chain(teacher_stats.keys()).cloned().collect();
    let mut answering = Table {
        columns: vec![
            "system".into(),
            "n_student".into(),
            "mean_student".into(),
            "n_teacher".into(),
            "mean_teacher".into(),
        ],
        rows: Vec::new(),
    };
    for system in &systems {
        let cell = |stats: Option<&GroupStats>, field: fn(&GroupStats) -> Cell| match stats {
            Some(s) => field(s),
            None => Cell::Null,
        };
        answering.rows.push(vec![
            Cell::Text(system.clone()),
            cell(student_stats.get(system), |s| Cell::Int(s.n as i64)),
            cell(student_stats.get(system), |s| Cell::Float(s.mean)),
            cell(teacher_stats.get(system), |s| Cell::Int(s.n as i64)),
            cell(teacher_stats.get(system), |s| Cell::Float(s.mean)),
        ]);
    }
    tables.insert("answering_systems".to_string(), answering);

    // Pairwise evaluator agreement on the class of jointly rated items.
    type ItemKey = (String, Option<String>, String, String, usize);
    let mut by_evaluator: BTreeMap<String, BTreeMap<ItemKey, Option<f64>>> = BTreeMap::new();
    for r in &records {
        let key = (
            r.answer_source_id.clone(),
            r.question_source_id.clone(),
            r.kind.clone(),
            r.section_id.clone(),
            r.question_index,
        );
        by_evaluator
            .entry(r.evaluator_id.clone())
            .or_default()
            .insert(key, r.rescued.map(f64::from));
    }
    let evaluators: Vec<&String> = by_evaluator.keys().collect();
    let mut agreement = Table {
        columns: vec![
            "evaluator_a".into(),
            "evaluator_b".into(),
            "n_joint".into(),
            "agreement".into(),
        ],
        rows: Vec::new(),
    };
    for i in 0..evaluators.len() {
        for j in (i + 1)..evaluators.len() {
            let a = &by_evaluator[evaluators[i]];
            let b = &by_evaluator[evaluators[j]];
            let mut va = Vec::new();
            let mut vb = Vec::new();
            for (key, value) in a {
                if let Some(other) = b.get(key) {
                    va.push(*value);
                    vb.push(*other);
                }
            }
            let joint = va
                .iter()
                .zip(&vb)
                .filter(|(x, y)| x.is_some() && y.is_some())
                .count();
            match agreement_rate(&va, &vb) {
                Ok(rate) => agreement.rows.push(vec![
                    Cell::Text(evaluators[i].clone()),
                    Cell::Text(evaluators[j].clone()),
                    Cell::Int(joint as i64),
                    Cell::Float(rate),
                ]),
                Err(LexError::NothingValid) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    tables.insert("evaluator_agreement".to_string(), agreement);

    // Evaluator class choices measured against the lexical recall class.
    let mut rouge_by_key: BTreeMap<ItemKey, f64> = BTreeMap::new();
    for r in rouge_records {
        if let Some(recall) = r.recall {
            rouge_by_key.insert(
                (
                    r.answer_source_id.clone(),
                    Some(r.question_source_id.clone()),
                    r.kind.clone(),
                    r.section_id.clone(),
                    r.question_index,
                ),
                recall,
            );
        }
    }
    let mut accuracy = Table {
        columns: vec![
            "evaluator".into(),
            "n".into(),
            "accuracy".into(),
            "precision_class_0".into(),
            "precision_class_1".into(),
            "precision_class_2".into(),
        ],
        rows: Vec::new(),
    };
    for (evaluator, ratings) in &by_evaluator {
        let mut evals = Vec::new();
        let mut rouges = Vec::new();
        for (key, value) in ratings {
            let (Some(value), Some(recall)) = (value, rouge_by_key.get(key)) else { continue };
            evals.push(*value);
            rouges.push(*recall);
        }
        match class_accuracy(&evals, &rouges) {
            Ok(result) => {
                let precision = |class: u8| match result.per_class_precision.get(&class) {
                    Some(p) => Cell::Float(*p),
                    None => Cell::Null,
                };
                accuracy.rows.push(vec![
                    Cell::Text(evaluator.clone()),
                    Cell::Int(result.n as i64),
                    Cell::Float(result.accuracy),
                    precision(0),
                    precision(1),
                    precision(2),
                ]);
            }
            Err(LexError::NothingValid) => {}
            Err(e) => return Err(e.into()),
        }
    }
    tables.insert("rating_class_accuracy".to_string(), accuracy);

    Ok(tables)
}

fn split_table(split: &SplitAccuracy) -> Table {
    let row = |name: &str, n: usize, accuracy: Option<f64>| {
        vec![
            Cell::Text(name.to_string()),
            Cell::Int(n as i64),
            accuracy.map_or(Cell::Null, Cell::Float),
        ]
    };
    Table {
        columns: vec!["split".into(), "n".into(), "accuracy".into()],
        rows: vec![row("high", split.n_high, split.high), row("low", split.n_low, split.low)],
    }
}

fn analysis_tables(paths: &RunPaths) -> Result<BTreeMap<String, Table>, CliError> {
    let mut tables = BTreeMap::new();
    let items: Option<Vec<McqItem>> = read_records(&paths.records().join("mcq_items.jsonl"))?;
    let predictions: Option<Vec<McqPredictionRecord>> =
        read_records(&paths.records().join("mcq_predictions.jsonl"))?;
    let (Some(items), Some(predictions)) = (items, predictions) else {
        log::info!("no fact-check quiz records; skipping the analysis tables");
        return Ok(tables);
    };

    let mut replies: BTreeMap<(&str, usize), String> = BTreeMap::new();
    for p in &predictions {
        replies.insert((p.mode.tag(), p.item_index), p.reply.clone().unwrap_or_default());
    }
    let aligned = |mode: McqMode| -> (Vec<McqItem>, Vec<String>) {
        let subset: Vec<McqItem> = items.iter().filter(|i| i.mode == mode).cloned().collect();
        let texts = subset
            .iter()
            .enumerate()
            .map(|(i, _)| replies.get(&(mode.tag(), i)).cloned().unwrap_or_default())
            .collect();
        (subset, texts)
    };

    let (statement_items, statement_replies) = aligned(McqMode::DetermineStatement);
    if !statement_items.is_empty() {
        let split = analysis_vocab_split(&statement_items, &statement_replies)?;
        tables.insert("vocab_overlap_split".to_string(), split_table(&split));
    }
    let (explanation_items, explanation_replies) = aligned(McqMode::DetermineExplanation);
    if !explanation_items.is_empty() {
        let split = analysis_verdict_phrase(&explanation_items, &explanation_replies)?;
        tables.insert("verdict_phrase_split".to_string(), split_table(&split));
    }
    Ok(tables)
}

fn write_questionnaires(corpus: &Corpus, dir: &Path) -> Result<usize, CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = 0usize;
    for aset in &corpus.answer_sets {
        if aset.transform.is_some() || reference_suffix(&aset.system_id) {
            continue;
        }
        let qset = resolve_question_set(
            &corpus.question_sets,
            &aset.section_ref,
            aset.question_source_id.as_deref(),
        )?;
        let pairs: Vec<QaPair> = aset
            .answers
            .iter()
            .enumerate()
            .filter_map(|(idx, answer)| {
                answer.as_ref().map(|a| QaPair {
                    question: qset.questions[idx].question.clone(),
                    answer: a.clone(),
                })
            })
            .collect();
        if pairs.is_empty() {
            continue;
        }
        // One sheet per answer set; the question source keeps sets by the
        // same system on the same section apart.
        let name = format!(
            "{}__{}__{}__{}.txt",
            sanitize(&aset.section_ref.kind),
            sanitize(&aset.section_ref.section_id),
            sanitize(&qset.system_id),
            sanitize(&aset.system_id)
        );
        let path = dir.join(name);
        fs::write(&path, export_questionnaire(&pairs)).map_err(|e| io_err(&path, e))?;
        written += 1;
    }
    Ok(written)
}

fn stage_report(cfg: &Config, providers: &Providers, paths: &RunPaths) -> Result<(), CliError> {
    let corpus = load_state(cfg, paths)?;
    let mut report = RunReport::default();
    report.teacher_rank_tables = teacher_tables(&corpus, providers, cfg, paths)?;
    let (student, rouge_records) = student_tables(&corpus, paths)?;
    report.student_score_tables = student;
    report.evaluator_tables = evaluator_tables(&corpus, &rouge_records, paths)?;
    report.analysis_results = analysis_tables(paths)?;
    render_report(&report, paths.report())?;
    let sheets = write_questionnaires(&corpus, &paths.questionnaires())?;
    log::info!(
        "report: {} tables, {sheets} questionnaires, written to {}",
        report.teacher_rank_tables.len()
            + report.student_score_tables.len()
            + report.evaluator_tables.len()
            + report.analysis_results.len(),
        paths.report().display()
    );
    Ok(())
}

// ------------------------------------------------------------ subcommands ---

pub fn cmd_score_teacher(cfg: &Config, providers: &Providers) -> Result<(), CliError> {
    let paths = RunPaths { out_dir: cfg.out_dir.clone() };
    let corpus = load_state(cfg, &paths)?;
    let mut report = RunReport::default();
    report.teacher_rank_tables = teacher_tables(&corpus, providers, cfg, &paths)?;
    render_report(&report, paths.report())?;
    log::info!("teacher scoring done: {} tables", report.teacher_rank_tables.len());
    Ok(())
}

pub fn cmd_score_student(cfg: &Config) -> Result<(), CliError> {
    let paths = RunPaths { out_dir: cfg.out_dir.clone() };
    let corpus = load_state(cfg, &paths)?;
    let mut report = RunReport::default();
    let (tables, _) = student_tables(&corpus, &paths)?;
    report.student_score_tables = tables;
    render_report(&report, paths.report())?;
    log::info!("student scoring done: {} tables", report.student_score_tables.len());
    Ok(())
}

pub fn cmd_score_evaluator(cfg: &Config) -> Result<(), CliError> {
    let paths = RunPaths { out_dir: cfg.out_dir.clone() };
    let corpus = load_state(cfg, &paths)?;
    let mut report = RunReport::default();
    let (student, rouge_records) = student_tables(&corpus, &paths)?;
    report.student_score_tables = student;
    report.evaluator_tables = evaluator_tables(&corpus, &rouge_records, &paths)?;
    report.analysis_results = analysis_tables(&paths)?;
    render_report(&report, paths.report())?;
    log::info!("evaluator scoring done: {} tables", report.evaluator_tables.len());
    Ok(())
}

pub fn cmd_export_questionnaire(cfg: &Config) -> Result<(), CliError> {
    let paths = RunPaths { out_dir: cfg.out_dir.clone() };
    let corpus = load_state(cfg, &paths)?;
    let written = write_questionnaires(&corpus, &paths.questionnaires())?;
    println!("{written} questionnaires written to {}", paths.questionnaires().display());
    Ok(())
}
