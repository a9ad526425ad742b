//! Aggregation tables and run-level report assembly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversarial::rescue_rating;
use crate::corpus::{resolve_question_set, Corpus, CorpusError, GoldAnswer, McqItem};
use crate::lexmetrics::jaccard_wordforms;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Alignment(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

// ------------------------------------------------------------------ tables ---

/// Table cell. The untagged encoding keeps JSONL lines readable; variant
/// order matters because integers must not decode as floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Text(String),
    Int(i64),
    Float(f64),
    Null,
}

impl Cell {
    fn render(&self, null_as: &str) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.4}"),
            Cell::Null => null_as.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("| {} |\n", self.columns.join(" | ")));
        out.push_str(&format!("| {} |\n", vec!["---"; self.columns.len()].join(" | ")));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.render("n/a")).collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.columns).expect("header fits in memory");
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.render("")).collect();
            writer.write_record(&cells).expect("row fits in memory");
        }
        String::from_utf8(writer.into_inner().expect("csv buffer")).expect("csv is utf-8")
    }
}

// ------------------------------------------------------------- group stats ---

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mean and population spread of the valid values per group. Groups with no
/// valid values are dropped entirely.
pub fn grouped_stats(pairs: &[(String, Option<f64>)]) -> BTreeMap<String, GroupStats> {
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (key, value) in pairs {
        if let Some(v) = value {
            if v.is_finite() {
                groups.entry(key.as_str()).or_default().push(*v);
            }
        }
    }
    groups
        .into_iter()
        .map(|(key, values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            (key.to_string(), GroupStats { n, mean, std: var.sqrt() })
        })
        .collect()
}

// ---------------------------------------------------------- rating records ---

/// One evaluator rating joined with everything needed to group it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub evaluator_id: String,
    pub answer_source_id: String,
    pub question_source_id: Option<String>,
    pub kind: String,
    pub section_id: String,
    pub question_index: usize,
    pub raw_score: f64,
    pub rescued: Option<u8>,
    pub category: String,
}

/// Flattens every rating in the corpus, labelling each with the provenance
/// category of the pair it rated: an answer-level transform wins, then a
/// question-level transform, then reference answers, then plain students.
pub fn rating_records(corpus: &Corpus) -> Result<Vec<RatingRecord>, ReportError> {
    let mut records = Vec::new();
    for set in &corpus.rating_sets {
        for entry in &set.entries {
            let answer_set = corpus
                .answer_sets
                .iter()
                .find(|a| {
                    a.system_id == entry.answer_source_id && a.section_ref == entry.section_ref
                })
                .ok_or_else(|| {
                    CorpusError::Reference(format!(
                        "rating by {} names missing answer set {} on {}",
                        set.system_id, entry.answer_source_id, entry.section_ref
                    ))
                })?;
            let source = entry
                .question_source_id
                .as_deref()
                .or(answer_set.question_source_id.as_deref());
            let question_set =
                resolve_question_set(&corpus.question_sets, &entry.section_ref, source)?;
            let category = answer_set
                .transform
                .map(|t| t.label().to_string())
                .or_else(|| question_set.transform.map(|t| t.label().to_string()))
                .unwrap_or_else(|| {
                    if entry.answer_source_id.ends_with("::reference") {
                        "gold".to_string()
                    } else {
                        "student".to_string()
                    }
                });
            records.push(RatingRecord {
                evaluator_id: set.system_id.clone(),
                answer_source_id: entry.answer_source_id.clone(),
                question_source_id: Some(question_set.system_id.clone()),
                kind: entry.section_ref.kind.clone(),
                section_id: entry.section_ref.section_id.clone(),
                question_index: entry.question_index,
                raw_score: entry.raw_score,
                rescued: entry.rescued_score.or_else(|| rescue_rating(entry.raw_score)),
                category,
            });
        }
    }
    Ok(records)
}

/// Rating means per derived group key, one sorted row per group.
pub fn mean_rating_by_group(
    records: &[RatingRecord],
    key: impl Fn(&RatingRecord) -> String,
) -> Table {
    let pairs: Vec<(String, Option<f64>)> =
        records.iter().map(|r| (key(r), r.rescued.map(f64::from))).collect();
    let stats = grouped_stats(&pairs);
    Table {
        columns: vec!["group".into(), "n".into(), "mean".into(), "std".into()],
        rows: stats
            .into_iter()
            .map(|(group, s)| {
                vec![
                    Cell::Text(group),
                    Cell::Int(s.n as i64),
                    Cell::Float(s.mean),
                    Cell::Float(s.std),
                ]
            })
            .collect(),
    }
}

// -------------------------------------------------------------- run report ---

/// Every table a full run produces, keyed by table name within each stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub teacher_rank_tables: BTreeMap<String, Table>,
    pub student_score_tables: BTreeMap<String, Table>,
    pub evaluator_tables: BTreeMap<String, Table>,
    pub analysis_results: BTreeMap<String, Table>,
}

#[derive(Serialize, Deserialize)]
struct ReportLine {
    group: String,
    name: String,
    table: Table,
}

const REPORT_GROUPS: [&str; 4] =
    ["teacher_rank_tables", "student_score_tables", "evaluator_tables", "analysis_results"];

impl RunReport {
    fn group(&self, name: &str) -> &BTreeMap<String, Table> {
        match name {
            "teacher_rank_tables" => &self.teacher_rank_tables,
            "student_score_tables" => &self.student_score_tables,
            "evaluator_tables" => &self.evaluator_tables,
            "analysis_results" => &self.analysis_results,
            _ => unreachable!("group names are fixed"),
        }
    }

    fn group_mut(&mut self, name: &str) -> Option<&mut BTreeMap<String, Table>> {
        match name {
            "teacher_rank_tables" => Some(&mut self.teacher_rank_tables),
            "student_score_tables" => Some(&mut self.student_score_tables),
            "evaluator_tables" => Some(&mut self.evaluator_tables),
            "analysis_results" => Some(&mut self.analysis_results),
            _ => None,
        }
    }

    /// One line per table, in a fixed group order and sorted by name inside
    /// each group, so equal reports encode to equal bytes.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for group in REPORT_GROUPS {
            for (name, table) in self.group(group) {
                let line = ReportLine {
                    group: group.to_string(),
                    name: name.clone(),
                    table: table.clone(),
                };
                out.push_str(&serde_json::to_string(&line).expect("report line serializes"));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ReportError> {
        let mut report = RunReport::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ReportLine = serde_json::from_str(line)
                .map_err(|e| ReportError::Format(format!("line {}: {e}", i + 1)))?;
            let group = report.group_mut(&parsed.group).ok_or_else(|| {
                ReportError::Format(format!("line {}: unknown group `{}`", i + 1, parsed.group))
            })?;
            group.insert(parsed.name, parsed.table);
        }
        Ok(report)
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), ReportError> {
    fs::write(path, content)
        .map_err(|e| ReportError::Io { path: path.display().to_string(), source: e })
}

/// Writes `report.md`, `report.jsonl` and one CSV per table under `tables/`.
pub fn render_report(report: &RunReport, dir: impl AsRef<Path>) -> Result<(), ReportError> {
    let dir = dir.as_ref();
    let tables_dir = dir.join("tables");
    fs::create_dir_all(&tables_dir)
        .map_err(|e| ReportError::Io { path: tables_dir.display().to_string(), source: e })?;

    let mut md = String::from("# Evaluation report\n");
    for group in REPORT_GROUPS {
        let tables = report.group(group);
        if tables.is_empty() {
            continue;
        }
        md.push_str(&format!("\n## {}\n", group.replace('_', " ")));
        for (name, table) in tables {
            md.push_str(&format!("\n### {name}\n\n{}", table.to_markdown()));
            let safe: String = name
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
                .collect();
            write_file(&tables_dir.join(format!("{group}.{safe}.csv")), &table.to_csv())?;
        }
    }
    write_file(&dir.join("report.md"), &md)?;
    write_file(&dir.join("report.jsonl"), &report.to_jsonl())?;
    Ok(())
}

// ----------------------------------------------------- prediction parsing ---

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Claim { truthful: bool, letter: Option<char> },
    Unknowable,
}

/// Reads a quiz reply of the form "TRUE C" / "FALSE (b)" / "UNKNOWABLE",
/// shrugging off case, punctuation and padding.
pub fn parse_prediction(text: &str) -> Option<Prediction> {
    let upper = text.to_uppercase();
    let words: Vec<&str> =
        upper.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()).collect();
    let truthful = match words.first() {
        Some(&"TRUE") => true,
        Some(&"FALSE") => false,
        _ => {
            if words.contains(&"UNKNOWABLE") {
                return Some(Prediction::Unknowable);
            }
            return None;
        }
    };
    let letter = words.get(1).and_then(|w| {
        let mut chars = w.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_uppercase() => Some(c),
            _ => None,
        }
    });
    Some(Prediction::Claim { truthful, letter })
}

// --------------------------------------------------------- split analyses ---

/// Accuracy over two disjoint item populations. A side nobody landed on
/// reports `None` rather than zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAccuracy {
    pub high: Option<f64>,
    pub low: Option<f64>,
    pub n_high: usize,
    pub n_low: usize,
}

fn split_accuracy(buckets: Vec<(bool, bool)>) -> SplitAccuracy {
    let (mut n_high, mut hit_high, mut n_low, mut hit_low) = (0usize, 0usize, 0usize, 0usize);
    for (high, correct) in buckets {
        if high {
            n_high += 1;
            hit_high += correct as usize;
        } else {
            n_low += 1;
            hit_low += correct as usize;
        }
    }
    let ratio = |hits: usize, n: usize| (n > 0).then(|| hits as f64 / n as f64);
    SplitAccuracy { high: ratio(hit_high, n_high), low: ratio(hit_low, n_low), n_high, n_low }
}

struct GoldItem<'a> {
    item: &'a McqItem,
    prediction: &'a str,
    truthful: bool,
    letter: char,
}

/// Items with a letter-bearing gold answer, paired with their predictions.
fn gold_items<'a>(
    items: &'a [McqItem],
    predictions: &'a [String],
) -> Result<Vec<GoldItem<'a>>, ReportError> {
    if items.len() != predictions.len() {
        return Err(ReportError::Alignment(format!(
            "{} items but {} predictions",
            items.len(),
            predictions.len()
        )));
    }
    Ok(items
        .iter()
        .zip(predictions)
        .filter_map(|(item, prediction)| {
            let (truthful, letter) = match item.gold_answer {
                Some(GoldAnswer::True(l)) => (true, l),
                Some(GoldAnswer::False(l)) => (false, l),
                Some(GoldAnswer::Unknowable) | None => return None,
            };
            Some(GoldItem { item, prediction, truthful, letter })
        })
        .collect())
}

fn correct_option_text<'a>(gold: &GoldItem<'a>) -> Option<&'a str> {
    gold.item
        .options
        .iter()
        .find(|o| o.letter == gold.letter)
        .map(|o| o.text.as_str())
}

/// Splits option-bearing items by whether the correct option shares clearly
/// more vocabulary with the material than every confounder (at least 1.5x),
/// then reports exact-answer accuracy per side.
pub fn analysis_vocab_split(
    items: &[McqItem],
    predictions: &[String],
) -> Result<SplitAccuracy, ReportError> {
    let golds = gold_items(items, predictions)?;
    let buckets = golds
        .iter()
        .filter_map(|gold| {
            let correct_text = correct_option_text(gold)?;
            let material = &gold.item.material_text;
            let overlap = |text: &str| jaccard_wordforms(text, material).unwrap_or(0.0);
            let correct_overlap = overlap(correct_text);
            let high = gold.item.options.iter().all(|option| {
                option.letter == gold.letter || correct_overlap >= 1.5 * overlap(&option.text)
            });
            let correct = matches!(
                parse_prediction(gold.prediction),
                Some(Prediction::Claim { truthful, letter: Some(l) })
                    if truthful == gold.truthful && l == gold.letter
            );
            Some((high, correct))
        })
        .collect();
    Ok(split_accuracy(buckets))
}

/// Splits items by whether the correct option spells out its verdict with an
/// "as true" / "as untrue" phrase, then reports truthfulness-only accuracy
/// per side, ignoring the letters entirely.
pub fn analysis_verdict_phrase(
    items: &[McqItem],
    predictions: &[String],
) -> Result<SplitAccuracy, ReportError> {
    let golds = gold_items(items, predictions)?;
    let buckets = golds
        .iter()
        .filter_map(|gold| {
            let text = correct_option_text(gold)?.to_lowercase();
            let high = text.contains("as true") || text.contains("as untrue");
            let correct = matches!(
                parse_prediction(gold.prediction),
                Some(Prediction::Claim { truthful, .. }) if truthful == gold.truthful
            );
            Some((high, correct))
        })
        .collect();
    Ok(split_accuracy(buckets))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_round_trip_without_widening_ints_to_floats() {
        let cells = vec![Cell::Text("x".into()), Cell::Int(3), Cell::Float(0.5), Cell::Null];
        let encoded = serde_json::to_string(&cells).unwrap();
        assert_eq!(encoded, r#"["x",3,0.5,null]"#);
        let decoded: Vec<Cell> = serde_json::from_str(&encoded).unwrap();
        assert_eq!(decoded, cells);
    }
}
