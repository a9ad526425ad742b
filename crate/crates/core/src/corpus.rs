//! Corpus data model and JSONL storage.
//!
//! A corpus directory holds up to five files: `materials.jsonl`,
//! `questions.jsonl`, `answers.jsonl`, `ratings.jsonl` and `factcheck.jsonl`.
//! Each line is one JSON object. `materials.jsonl` must exist; the others are
//! treated as empty when absent. Loading validates cross references eagerly so
//! downstream stages can index without checking.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversarial::{rescue_rating, Transform};
use crate::seeding;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{file}:{line}: {message}")]
    Schema { file: String, line: usize, message: String },
    #[error("{0}")]
    Reference(String),
    #[error("{0}")]
    Argument(String),
}

/// Address of one section inside one material kind.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SectionRef {
    pub kind: String,
    pub section_id: String,
}

impl SectionRef {
    pub fn new(kind: impl Into<String>, section_id: impl Into<String>) -> Self {
        Self { kind: kind.into(), section_id: section_id.into() }
    }
}

impl fmt::Display for SectionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.kind, self.section_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub section_id: String,
    pub language: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub kind: String,
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub system_id: String,
    pub section_ref: SectionRef,
    pub questions: Vec<Question>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Transform>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<String>,
}

/// Answers aligned index-for-index with one question set. `None` marks a
/// question the system declined or failed to answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub system_id: String,
    pub section_ref: SectionRef,
    pub answers: Vec<Option<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Transform>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingEntry {
    pub section_ref: SectionRef,
    pub question_index: usize,
    pub answer_source_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_source_id: Option<String>,
    pub raw_score: f64,
    /// Normalized 0 to 100 score, populated exactly once at load time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescued_score: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSet {
    pub system_id: String,
    pub entries: Vec<RatingEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    True,
    Untrue,
    Misleading,
    Undecidable,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::True => "true",
            Verdict::Untrue => "untrue",
            Verdict::Misleading => "misleading",
            Verdict::Undecidable => "undecidable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactCheckRecord {
    pub speaker: String,
    pub statement: String,
    pub short_explanation: String,
    pub long_explanation: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub materials: Vec<Material>,
    pub question_sets: Vec<QuestionSet>,
    pub answer_sets: Vec<AnswerSet>,
    pub rating_sets: Vec<RatingSet>,
    pub factcheck: Vec<FactCheckRecord>,
}

impl Corpus {
    /// Looks up a section by reference.
    pub fn section(&self, sref: &SectionRef) -> Option<&Section> {
        self.materials
            .iter()
            .find(|m| m.kind == sref.kind)?
            .sections
            .iter()
            .find(|s| s.section_id == sref.section_id)
    }
}

/// Finds the unique question set an answer or rating refers to. With no
/// explicit source id the set is only unambiguous when the section has
/// exactly one question set.
pub fn resolve_question_set<'a>(
    question_sets: &'a [QuestionSet],
    section_ref: &SectionRef,
    question_source_id: Option<&str>,
) -> Result<&'a QuestionSet, CorpusError> {
    let mut found = None;
    for qs in question_sets {
        if qs.section_ref != *section_ref {
            continue;
        }
        if let Some(src) = question_source_id {
            if qs.system_id != src {
                continue;
            }
        }
        if found.is_some() {
            return Err(CorpusError::Reference(format!(
                "section {section_ref} has multiple question sets; name one with question_source_id"
            )));
        }
        found = Some(qs);
    }
    found.ok_or_else(|| {
        CorpusError::Reference(match question_source_id {
            Some(src) => format!("no question set {src} for section {section_ref}"),
            None => format!("no question set for section {section_ref}"),
        })
    })
}

// ------------------------------------------------------------- wire types ---

#[derive(Serialize, Deserialize)]
struct MaterialLine {
    kind: String,
    section_id: String,
    language: String,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct QuestionSetLine {
    system_id: String,
    kind: String,
    section_id: String,
    questions: Vec<Question>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transform: Option<Transform>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    provenance: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct AnswerSetLine {
    system_id: String,
    kind: String,
    section_id: String,
    answers: Vec<Option<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    question_source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transform: Option<Transform>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    provenance: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RatingLine {
    system_id: String,
    kind: String,
    section_id: String,
    question_index: usize,
    answer_source_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    question_source_id: Option<String>,
    raw_score: f64,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(
    dir: &Path,
    name: &str,
    required: bool,
) -> Result<Vec<(usize, T)>, CorpusError> {
    let path = dir.join(name);
    let raw = match fs::read_to_string(&path) {
        Ok(raw) => raw,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound && !required => {
            return Ok(Vec::new())
        }
        Err(e) => return Err(CorpusError::Io { path: path.display().to_string(), source: e }),
    };
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let value: T = serde_json::from_str(line).map_err(|e| CorpusError::Schema {
            file: name.to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        out.push((lineno, value));
    }
    Ok(out)
}

fn schema(name: &str, line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Schema { file: name.to_string(), line, message: message.into() }
}

/// Reads a corpus directory and validates every cross reference. Ratings get
/// their `rescued_score` here and nowhere else.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let dir = dir.as_ref();

    let mut materials: Vec<Material> = Vec::new();
    for (lineno, m) in read_jsonl::<MaterialLine>(dir, "materials.jsonl", true)? {
        if m.kind.trim().is_empty() {
            return Err(schema("materials.jsonl", lineno, "field `kind` must not be empty"));
        }
        if m.section_id.trim().is_empty() {
            return Err(schema("materials.jsonl", lineno, "field `section_id` must not be empty"));
        }
        if m.text.trim().is_empty() {
            return Err(schema("materials.jsonl", lineno, "field `text` must not be empty"));
        }
        let material = match materials.iter_mut().find(|x| x.kind == m.kind) {
            Some(material) => material,
            None => {
                materials.push(Material { kind: m.kind.clone(), sections: Vec::new() });
                materials.last_mut().unwrap()
            }
        };
        if material.sections.iter().any(|s| s.section_id == m.section_id) {
            return Err(schema(
                "materials.jsonl",
                lineno,
                format!("duplicate section_id `{}` in kind `{}`", m.section_id, m.kind),
            ));
        }
        material.sections.push(Section {
            section_id: m.section_id,
            language: m.language,
            text: m.text,
        });
    }

    let corpus_has_section = |sref: &SectionRef| {
        materials
            .iter()
            .any(|m| m.kind == sref.kind && m.sections.iter().any(|s| s.section_id == sref.section_id))
    };

    let mut question_sets: Vec<QuestionSet> = Vec::new();
    for (lineno, q) in read_jsonl::<QuestionSetLine>(dir, "questions.jsonl", false)? {
        let sref = SectionRef::new(q.kind, q.section_id);
        if !corpus_has_section(&sref) {
            return Err(CorpusError::Reference(format!(
                "questions.jsonl:{lineno}: question set {} refers to unknown section {sref}",
                q.system_id
            )));
        }
        for question in &q.questions {
            if question.question.trim().is_empty() {
                return Err(schema("questions.jsonl", lineno, "field `question` must not be empty"));
            }
        }
        question_sets.push(QuestionSet {
            system_id: q.system_id,
            section_ref: sref,
            questions: q.questions,
            transform: q.transform,
            provenance: q.provenance,
        });
    }

    let mut answer_sets: Vec<AnswerSet> = Vec::new();
    for (lineno, a) in read_jsonl::<AnswerSetLine>(dir, "answers.jsonl", false)? {
        let sref = SectionRef::new(a.kind, a.section_id);
        if !corpus_has_section(&sref) {
            return Err(CorpusError::Reference(format!(
                "answers.jsonl:{lineno}: answer set {} refers to unknown section {sref}",
                a.system_id
            )));
        }
        let qs = resolve_question_set(&question_sets, &sref, a.question_source_id.as_deref())?;
        if a.answers.len() != qs.questions.len() {
            return Err(CorpusError::Reference(format!(
                "answers.jsonl:{lineno}: answer set {} has {} answers but question set {} has {} questions",
                a.system_id,
                a.answers.len(),
                qs.system_id,
                qs.questions.len()
            )));
        }
        answer_sets.push(AnswerSet {
            system_id: a.system_id,
            section_ref: sref,
            answers: a.answers,
            question_source_id: a.question_source_id,
            transform: a.transform,
            provenance: a.provenance,
        });
    }

    let mut rating_sets: Vec<RatingSet> = Vec::new();
    for (lineno, r) in read_jsonl::<RatingLine>(dir, "ratings.jsonl", false)? {
        let sref = SectionRef::new(r.kind, r.section_id);
        if !corpus_has_section(&sref) {
            return Err(CorpusError::Reference(format!(
                "ratings.jsonl:{lineno}: rating by {} refers to unknown section {sref}",
                r.system_id
            )));
        }
        let aset = answer_sets
            .iter()
            .find(|a| a.system_id == r.answer_source_id && a.section_ref == sref)
            .ok_or_else(|| {
                CorpusError::Reference(format!(
                    "ratings.jsonl:{lineno}: no answer set {} for section {sref}",
                    r.answer_source_id
                ))
            })?;
        if r.question_index >= aset.answers.len() {
            return Err(CorpusError::Reference(format!(
                "ratings.jsonl:{lineno}: question_index {} out of range for answer set {} ({} answers)",
                r.question_index,
                r.answer_source_id,
                aset.answers.len()
            )));
        }
        if r.question_source_id.is_some() {
            resolve_question_set(&question_sets, &sref, r.question_source_id.as_deref())?;
        }
        let entry = RatingEntry {
            section_ref: sref,
            question_index: r.question_index,
            answer_source_id: r.answer_source_id,
            question_source_id: r.question_source_id,
            raw_score: r.raw_score,
            rescued_score: rescue_rating(r.raw_score),
        };
        let set = match rating_sets.iter_mut().find(|s| s.system_id == r.system_id) {
            Some(set) => set,
            None => {
                rating_sets.push(RatingSet { system_id: r.system_id.clone(), entries: Vec::new() });
                rating_sets.last_mut().unwrap()
            }
        };
        set.entries.push(entry);
    }

    let factcheck = read_jsonl::<FactCheckRecord>(dir, "factcheck.jsonl", false)?
        .into_iter()
        .map(|(_, r)| r)
        .collect();

    Ok(Corpus { materials, question_sets, answer_sets, rating_sets, factcheck })
}

fn write_jsonl<T: Serialize>(dir: &Path, name: &str, lines: &[T]) -> Result<(), CorpusError> {
    if lines.is_empty() && name != "materials.jsonl" {
        return Ok(());
    }
    let mut buf = String::new();
    for line in lines {
        buf.push_str(&serde_json::to_string(line).expect("corpus lines serialize"));
        buf.push('\n');
    }
    let path = dir.join(name);
    fs::write(&path, buf).map_err(|e| CorpusError::Io { path: path.display().to_string(), source: e })
}

/// Writes the corpus back out as JSONL. Loading the result reproduces the
/// corpus exactly; rescued scores are recomputed rather than stored.
pub fn save_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)
        .map_err(|e| CorpusError::Io { path: dir.display().to_string(), source: e })?;

    let materials: Vec<MaterialLine> = corpus
        .materials
        .iter()
        .flat_map(|m| {
            m.sections.iter().map(|s| MaterialLine {
                kind: m.kind.clone(),
                section_id: s.section_id.clone(),
                language: s.language.clone(),
                text: s.text.clone(),
            })
        })
        .collect();
    write_jsonl(dir, "materials.jsonl", &materials)?;

    let questions: Vec<QuestionSetLine> = corpus
        .question_sets
        .iter()
        .map(|q| QuestionSetLine {
            system_id: q.system_id.clone(),
            kind: q.section_ref.kind.clone(),
            section_id: q.section_ref.section_id.clone(),
            questions: q.questions.clone(),
            transform: q.transform,
            provenance: q.provenance.clone(),
        })
        .collect();
    write_jsonl(dir, "questions.jsonl", &questions)?;

    let answers: Vec<AnswerSetLine> = corpus
        .answer_sets
        .iter()
        .map(|a| AnswerSetLine {
            system_id: a.system_id.clone(),
            kind: a.section_ref.kind.clone(),
            section_id: a.section_ref.section_id.clone(),
            answers: a.answers.clone(),
            question_source_id: a.question_source_id.clone(),
            transform: a.transform,
            provenance: a.provenance.clone(),
        })
        .collect();
    write_jsonl(dir, "answers.jsonl", &answers)?;

    let ratings: Vec<RatingLine> = corpus
        .rating_sets
        .iter()
        .flat_map(|set| {
            set.entries.iter().map(|e| RatingLine {
                system_id: set.system_id.clone(),
                kind: e.section_ref.kind.clone(),
                section_id: e.section_ref.section_id.clone(),
                question_index: e.question_index,
                answer_source_id: e.answer_source_id.clone(),
                question_source_id: e.question_source_id.clone(),
                raw_score: e.raw_score,
            })
        })
        .collect();
    write_jsonl(dir, "ratings.jsonl", &ratings)?;

    write_jsonl(dir, "factcheck.jsonl", &corpus.factcheck)?;
    Ok(())
}

// --------------------------------------------------- multiple-choice items ---

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McqMode {
    /// Material is the long explanation; options are candidate statements.
    DetermineStatement,
    /// Material is the statement; options are candidate explanations.
    DetermineExplanation,
    /// Material bundles statement and both explanations; no options.
    StatementWExplanation,
}

impl McqMode {
    pub fn tag(&self) -> &'static str {
        match self {
            McqMode::DetermineStatement => "determine_statement",
            McqMode::DetermineExplanation => "determine_explanation",
            McqMode::StatementWExplanation => "statement_w_explanation",
        }
    }
}

/// Instruction text prepended to the generated question for each mode.
#[derive(Debug, Clone, PartialEq)]
pub struct McqTemplates {
    pub determine_statement: String,
    pub determine_explanation: String,
    pub statement_w_explanation: String,
}

impl Default for McqTemplates {
    fn default() -> Self {
        Self {
            determine_statement: include_str!("llmroles/templates/mcq_determine_statement.txt")
                .trim_end()
                .to_string(),
            determine_explanation: include_str!("llmroles/templates/mcq_determine_explanation.txt")
                .trim_end()
                .to_string(),
            statement_w_explanation: include_str!(
                "llmroles/templates/mcq_statement_w_explanation.txt"
            )
            .trim_end()
            .to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McqConfig {
    /// Upper bound on options per item, correct one included.
    pub max_options: usize,
    /// Seeded share of items whose correct option is withheld.
    pub unknowable_fraction: f64,
    pub seed: u64,
    pub templates: McqTemplates,
}

impl Default for McqConfig {
    fn default() -> Self {
        Self {
            max_options: 5,
            unknowable_fraction: 0.2,
            seed: 0,
            templates: McqTemplates::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqOption {
    pub letter: char,
    pub text: String,
    /// Index into the fact-check records the option text came from.
    pub record_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoldAnswer {
    True(char),
    False(char),
    Unknowable,
}

impl fmt::Display for GoldAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GoldAnswer::True(l) => write!(f, "TRUE {l}"),
            GoldAnswer::False(l) => write!(f, "FALSE {l}"),
            GoldAnswer::Unknowable => write!(f, "UNKNOWABLE"),
        }
    }
}

impl FromStr for GoldAnswer {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_uppercase();
        if up == "UNKNOWABLE" {
            return Ok(GoldAnswer::Unknowable);
        }
        let mut parts = up.split_whitespace();
        let (head, letter, rest) = (parts.next(), parts.next(), parts.next());
        if rest.is_none() {
            if let (Some(head), Some(letter)) = (head, letter) {
                let mut chars = letter.chars();
                if let (Some(ch), None) = (chars.next(), chars.next()) {
                    if ch.is_ascii_uppercase() {
                        match head {
                            "TRUE" => return Ok(GoldAnswer::True(ch)),
                            "FALSE" => return Ok(GoldAnswer::False(ch)),
                            _ => {}
                        }
                    }
                }
            }
        }
        Err(CorpusError::Argument(format!("unrecognized gold answer `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqItem {
    pub mode: McqMode,
    pub speaker: String,
    /// Index into the fact-check records of the claim under test.
    pub base_record_id: usize,
    pub material_text: String,
    pub question_text: String,
    pub options: Vec<McqOption>,
    pub gold_answer: Option<GoldAnswer>,
}

fn option_text(records: &[FactCheckRecord], id: usize, mode: McqMode) -> String {
    match mode {
        McqMode::DetermineStatement => records[id].statement.clone(),
        McqMode::DetermineExplanation => records[id].long_explanation.clone(),
        McqMode::StatementWExplanation => unreachable!("no options in this mode"),
    }
}

/// Builds quiz items from fact-check records.
///
/// Only records judged true or untrue become bases; the rest may still appear
/// as confounders. Confounders are drawn without replacement from the same
/// speaker's other records. A seeded fraction of items withholds the correct
/// option and is gold-labelled unknowable. Option sampling is identical for
/// the withheld items, so the two populations differ only in that one option.
pub fn build_mcq_items(
    records: &[FactCheckRecord],
    mode: McqMode,
    cfg: &McqConfig,
) -> Result<Vec<McqItem>, CorpusError> {
    if let McqMode::StatementWExplanation = mode {
        let items = records
            .iter()
            .enumerate()
            .map(|(i, r)| McqItem {
                mode,
                speaker: r.speaker.clone(),
                base_record_id: i,
                material_text: format!(
                    "Statement by {}: {}\n\nVerdict summary: {}\n\nFull explanation: {}",
                    r.speaker, r.statement, r.short_explanation, r.long_explanation
                ),
                question_text: cfg.templates.statement_w_explanation.clone(),
                options: Vec::new(),
                gold_answer: None,
            })
            .collect();
        return Ok(items);
    }

    if cfg.max_options < 2 || cfg.max_options > 26 {
        return Err(CorpusError::Argument(format!(
            "max_options must lie in 2..=26, got {}",
            cfg.max_options
        )));
    }
    if !(0.0..=1.0).contains(&cfg.unknowable_fraction) {
        return Err(CorpusError::Argument(format!(
            "unknowable_fraction must lie in [0, 1], got {}",
            cfg.unknowable_fraction
        )));
    }

    let mut items = Vec::new();
    for (idx, rec) in records.iter().enumerate() {
        let truthful = match rec.verdict {
            Verdict::True => true,
            Verdict::Untrue => false,
            Verdict::Misleading | Verdict::Undecidable => continue,
        };
        let mut rng = seeding::rng(cfg.seed, &["mcq", mode.tag(), &idx.to_string()]);

        let mut pool: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(j, r)| *j != idx && r.speaker == rec.speaker)
            .map(|(j, _)| j)
            .collect();
        let wanted = cfg.max_options - 1;
        let mut option_ids = vec![idx];
        while option_ids.len() <= wanted && !pool.is_empty() {
            let pick = rng.gen_range(0..pool.len());
            option_ids.push(pool.swap_remove(pick));
        }
        option_ids.shuffle(&mut rng);
        let withhold = rng.gen::<f64>() < cfg.unknowable_fraction;

        let (final_ids, gold) = if withhold {
            let kept: Vec<usize> = option_ids.into_iter().filter(|&id| id != idx).collect();
            (kept, GoldAnswer::Unknowable)
        } else {
            let pos = option_ids.iter().position(|&id| id == idx).unwrap();
            let letter = (b'A' + pos as u8) as char;
            let gold = if truthful { GoldAnswer::True(letter) } else { GoldAnswer::False(letter) };
            (option_ids, gold)
        };

        let options: Vec<McqOption> = final_ids
            .iter()
            .enumerate()
            .map(|(i, &id)| McqOption {
                letter: (b'A' + i as u8) as char,
                text: option_text(records, id, mode),
                record_id: id,
            })
            .collect();

        let instruction = match mode {
            McqMode::DetermineStatement => &cfg.templates.determine_statement,
            McqMode::DetermineExplanation => &cfg.templates.determine_explanation,
            McqMode::StatementWExplanation => unreachable!(),
        };
        let mut question_text = instruction.clone();
        for opt in &options {
            question_text.push('\n');
            question_text.push_str(&format!("{}. {}", opt.letter, opt.text));
        }

        let material_text = match mode {
            McqMode::DetermineStatement => rec.long_explanation.clone(),
            McqMode::DetermineExplanation => rec.statement.clone(),
            McqMode::StatementWExplanation => unreachable!(),
        };

        items.push(McqItem {
            mode,
            speaker: rec.speaker.clone(),
            base_record_id: idx,
            material_text,
            question_text,
            options,
            gold_answer: Some(gold),
        });
    }
    Ok(items)
}

// ----------------------------------------------------------- questionnaire ---

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

/// Renders the manual review sheet handed to human evaluators.
pub fn export_questionnaire(pairs: &[QaPair]) -> String {
    let mut out = String::from(
        "For each question-answer pair, address each of these points on a single line \
         numbered correspondingly, giving 1-5 on opinion-based points. Whenever we are \
         talking about using the provided texts, this also means using elementary \
         school-level background knowledge. If you would answer any point as 1, continue \
         to the next question-answer pair:\n",
    );
    for (i, pair) in pairs.iter().enumerate() {
        out.push_str(&format!(
            "\nQuestion {}:\n{}\nAnswer:\n{}\n1. is correct.\n2. was created using only the provided texts.\n",
            i + 1,
            pair.question,
            pair.answer
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gold_answer_rejects_malformed_strings() {
        assert!("TRUE".parse::<GoldAnswer>().is_err());
        assert!("MAYBE B".parse::<GoldAnswer>().is_err());
        assert!("TRUE BC".parse::<GoldAnswer>().is_err());
        assert_eq!("  false  d ".parse::<GoldAnswer>().unwrap(), GoldAnswer::False('D'));
    }

    #[test]
    fn section_lookup_uses_both_halves_of_the_reference() {
        let corpus = Corpus {
            materials: vec![Material {
                kind: "k".into(),
                sections: vec![Section {
                    section_id: "s".into(),
                    language: "en".into(),
                    text: "t".into(),
                }],
            }],
            ..Corpus::default()
        };
        assert!(corpus.section(&SectionRef::new("k", "s")).is_some());
        assert!(corpus.section(&SectionRef::new("k", "x")).is_none());
        assert!(corpus.section(&SectionRef::new("x", "s")).is_none());
    }
}
