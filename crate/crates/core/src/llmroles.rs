//! Chat-driven roles: question-writing teachers, material-bound students,
//! answer-grading evaluators, and the triplet ranking judge with its
//! order-permuted prompt variants.

use std::collections::BTreeMap;

use itertools::Itertools;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnswerSet, Question, QuestionSet, SectionRef};
use crate::provider::ProviderError;
use crate::seeding;

#[derive(Debug, thiserror::Error)]
pub enum RoleError {
    #[error("{0}")]
    Argument(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

// ---------------------------------------------------------- chat plumbing ---

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured_schema: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default = "default_max_retries")]
    pub max_retries: usize,
}

fn default_max_retries() -> usize {
    3
}

impl ChatRequest {
    pub fn user(content: impl Into<String>) -> Self {
        ChatRequest {
            messages: vec![ChatMessage { role: ChatRole::User, content: content.into() }],
            structured_schema: None,
            temperature: Some(0.0),
            max_retries: default_max_retries(),
        }
    }
}

pub trait ChatProvider {
    fn model_id(&self) -> &str;
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError>;
}

/// Marks retry requests so they hash to fresh cache keys; a cached garbage
/// reply would otherwise short-circuit every retry.
fn with_parse_salt(base: &ChatRequest, parse_failures: usize) -> ChatRequest {
    if parse_failures == 0 {
        return base.clone();
    }
    let mut req = base.clone();
    req.messages.push(ChatMessage {
        role: ChatRole::User,
        content: format!(
            "Attempt {}: your previous reply could not be parsed. Follow the requested format exactly.",
            parse_failures + 1
        ),
    });
    req
}

/// Issues one logical query under a shared call budget. Transport-level
/// failures and unparseable replies both consume attempts; only fatal
/// provider errors abort. `Ok(None)` means the budget ran out.
fn ask_until<T, P: ChatProvider + ?Sized>(
    provider: &P,
    base: &ChatRequest,
    attempts: usize,
    mut parse: impl FnMut(&str) -> Option<T>,
) -> Result<Option<T>, RoleError> {
    let mut parse_failures = 0usize;
    for _ in 0..attempts {
        let req = with_parse_salt(base, parse_failures);
        match provider.complete(&req) {
            Ok(reply) => match parse(&reply) {
                Some(value) => return Ok(Some(value)),
                None => parse_failures += 1,
            },
            Err(e) if e.is_retryable() => {
                log::warn!("provider error, retrying: {e}");
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(None)
}

// ----------------------------------------------------------- http provider ---

/// Chat-completions client. Non-2xx statuses come back as regular responses
/// so they can be classified rather than collapsed into one error kind.
pub struct HttpChatProvider {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpChatProvider {
    pub fn new(url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(std::time::Duration::from_secs(120)))
            .build();
        HttpChatProvider { agent: config.into(), url: url.into(), model: model.into(), api_key }
    }
}

impl ChatProvider for HttpChatProvider {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let mut body = serde_json::json!({
            "model": self.model,
            "messages": req.messages,
        });
        if let Some(t) = req.temperature {
            body["temperature"] = serde_json::json!(t);
        }
        if let Some(schema) = &req.structured_schema {
            body["response_format"] = serde_json::json!({
                "type": "json_schema",
                "json_schema": schema,
            });
        }
        let mut request = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            request = request.header("authorization", &format!("Bearer {key}"));
        }
        let mut response =
            request.send_json(&body).map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let payload: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Parse(format!("chat response: {e}")))?;
        if status == 401 || status == 403 {
            return Err(ProviderError::Auth(payload.to_string()));
        }
        if status >= 400 {
            return Err(ProviderError::Http { status, detail: payload.to_string() });
        }
        payload["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| ProviderError::Parse("missing choices[0].message.content".to_string()))
    }
}

// --------------------------------------------------------------- templates ---

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub triplet: String,
    pub teacher: String,
    pub student: String,
    pub evaluator: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            triplet: include_str!("llmroles/templates/triplet.txt").to_string(),
            teacher: include_str!("llmroles/templates/teacher.txt").to_string(),
            student: include_str!("llmroles/templates/student.txt").to_string(),
            evaluator: include_str!("llmroles/templates/evaluator.txt").to_string(),
        }
    }
}

// ----------------------------------------------------------- triplet judge ---

/// Entry statements in canonical order: pairs of (least, most) per category.
const ENTRY_STATEMENTS: [&str; 8] = [
    "The questions require thinking about least different parts of the material.",
    "The questions require thinking about most different parts of the material.",
    "The questions cover the material least.",
    "The questions cover the material most.",
    "The questions are least useful for learning to reason about the material for the test.",
    "The questions are most useful for learning to reason about the material for the test.",
    "The questions are least useful for learning the material for the test.",
    "The questions are most useful for learning the material for the test.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    Original,
    PairSwapped,
    Reversed,
}

impl PromptVariant {
    /// Maps printed entry position to canonical statement index.
    fn permutation(&self) -> [usize; 8] {
        match self {
            PromptVariant::Original => [0, 1, 2, 3, 4, 5, 6, 7],
            PromptVariant::PairSwapped => [1, 0, 3, 2, 5, 4, 7, 6],
            PromptVariant::Reversed => [7, 6, 5, 4, 3, 2, 1, 0],
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PromptVariant::Original => "original",
            PromptVariant::PairSwapped => "pair_swapped",
            PromptVariant::Reversed => "reversed",
        }
    }

    pub const ALL: [PromptVariant; 3] =
        [PromptVariant::Original, PromptVariant::PairSwapped, PromptVariant::Reversed];
}

#[derive(Serialize)]
struct PayloadSet<'a> {
    #[serde(rename = "QUESTIONSET")]
    number: usize,
    questions: &'a [String],
}

#[derive(Serialize)]
struct Payload<'a> {
    material: &'a str,
    questionsets: Vec<PayloadSet<'a>>,
}

/// Renders the ranking prompt. Entry labels are always sequential; the
/// variant permutes which statement appears under which label.
pub fn render_triplet_prompt(
    material: &str,
    questions: &[&[String]; 3],
    variant: PromptVariant,
    template: &str,
) -> String {
    let payload = Payload {
        material,
        questionsets: questions
            .iter()
            .enumerate()
            .map(|(i, qs)| PayloadSet { number: i + 1, questions: qs })
            .collect(),
    };
    let payload_line = serde_json::to_string(&payload).expect("payload serializes");
    let perm = variant.permutation();
    let entries = (0..8)
        .map(|k| {
            format!(
                "ENTRY{}: {} is most true about \"QUESTIONSET_NUMBER\": {{}}",
                k + 1,
                ENTRY_STATEMENTS[perm[k]]
            )
        })
        .join("\n");
    template.replace("{{payload}}", &payload_line).replace("{{entries}}", &entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeCategory {
    Coverage,
    Diversity,
    Learning,
    Reasoning,
}

impl JudgeCategory {
    pub const ALL: [JudgeCategory; 4] = [
        JudgeCategory::Coverage,
        JudgeCategory::Diversity,
        JudgeCategory::Learning,
        JudgeCategory::Reasoning,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            JudgeCategory::Coverage => "coverage",
            JudgeCategory::Diversity => "diversity",
            JudgeCategory::Learning => "learning",
            JudgeCategory::Reasoning => "reasoning",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestWorst {
    pub best: String,
    pub worst: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletJudgment {
    pub document_ref: SectionRef,
    pub variant: PromptVariant,
    /// System ids in the order their sets were numbered in the prompt.
    pub presented: Vec<String>,
    pub per_category: BTreeMap<JudgeCategory, Option<BestWorst>>,
}

/// Pulls one number per printed entry out of a reply, returning them keyed by
/// canonical statement index. Lenient about case, quoting and glue text, but
/// each entry only sees the region up to the next entry marker, and numbers
/// outside 1..=n_sets are discarded.
fn parse_triplet_reply(reply: &str, variant: PromptVariant, n_sets: usize) -> [Option<usize>; 8] {
    let hay = reply.to_lowercase();
    let mut markers: Vec<(usize, usize, usize)> = Vec::new();
    let mut from = 0usize;
    while let Some(found) = hay[from..].find("entry") {
        let at = from + found;
        let after = at + "entry".len();
        if let Some(d) = hay[after..].chars().next().and_then(|c| c.to_digit(10)) {
            markers.push((at, d as usize, after + 1));
        }
        from = after;
    }
    let perm = variant.permutation();
    let mut out = [None; 8];
    for (i, &(_, label, body_start)) in markers.iter().enumerate() {
        if !(1..=8).contains(&label) {
            continue;
        }
        let region_end = markers.get(i + 1).map(|m| m.0).unwrap_or(hay.len());
        let region = &hay[body_start..region_end];
        let tail = match region.find("questionset_number") {
            Some(p) => &region[p + "questionset_number".len()..],
            None => region,
        };
        let Some(digit_at) = tail.find(|c: char| c.is_ascii_digit()) else { continue };
        let run: String = tail[digit_at..].chars().take_while(|c| c.is_ascii_digit()).collect();
        let Ok(number) = run.parse::<usize>() else { continue };
        if !(1..=n_sets).contains(&number) {
            continue;
        }
        let canonical = perm[label - 1];
        if out[canonical].is_none() {
            out[canonical] = Some(number);
        }
    }
    out
}

/// Asks the judge to compare three question sets about one document.
///
/// Presentation order is a seeded shuffle. A reply naming every entry ends
/// the exchange; otherwise the call budget is spent on retries and whatever
/// the final reply yields is kept. A category whose two entries name the same
/// set is invalid, which is a judgment about the judge, not a parse failure,
/// so it triggers no retry.
pub fn rank_triplet<P: ChatProvider + ?Sized>(
    document: &SectionRef,
    material: &str,
    sets: &[(String, Vec<String>); 3],
    variant: PromptVariant,
    seed: u64,
    provider: &P,
    triplet_template: &str,
) -> Result<TripletJudgment, RoleError> {
    let mut order = [0usize, 1, 2];
    let mut rng = seeding::rng(
        seed,
        &[
            "triplet",
            &document.kind,
            &document.section_id,
            &sets[0].0,
            &sets[1].0,
            &sets[2].0,
        ],
    );
    order.shuffle(&mut rng);
    let presented: Vec<String> = order.iter().map(|&i| sets[i].0.clone()).collect();
    let questions: [&[String]; 3] =
        [&sets[order[0]].1, &sets[order[1]].1, &sets[order[2]].1];
    let prompt = render_triplet_prompt(material, &questions, variant, triplet_template);
    let base = ChatRequest::user(prompt);
    let attempts = base.max_retries + 1;

    let mut last_parsed: Option<[Option<usize>; 8]> = None;
    let mut last_error: Option<ProviderError> = None;
    let mut parse_failures = 0usize;
    for _ in 0..attempts {
        let req = with_parse_salt(&base, parse_failures);
        match provider.complete(&req) {
            Ok(reply) => {
                let parsed = parse_triplet_reply(&reply, variant, 3);
                let full = parsed.iter().all(Option::is_some);
                last_parsed = Some(parsed);
                if full {
                    break;
                }
                parse_failures += 1;
            }
            Err(e) if e.is_retryable() => last_error = Some(e),
            Err(e) => return Err(e.into()),
        }
    }
    let parsed = match last_parsed {
        Some(parsed) => parsed,
        None => {
            return Err(last_error
                .unwrap_or_else(|| ProviderError::Transport("no reply received".to_string()))
                .into())
        }
    };

    let mut per_category = BTreeMap::new();
    for (pair, category) in [
        JudgeCategory::Diversity,
        JudgeCategory::Coverage,
        JudgeCategory::Reasoning,
        JudgeCategory::Learning,
    ]
    .iter()
    .enumerate()
    {
        let least = parsed[pair * 2];
        let most = parsed[pair * 2 + 1];
        let bw = match (least, most) {
            (Some(l), Some(m)) if l != m => Some(BestWorst {
                best: presented[m - 1].clone(),
                worst: presented[l - 1].clone(),
            }),
            _ => None,
        };
        per_category.insert(*category, bw);
    }
    Ok(TripletJudgment { document_ref: document.clone(), variant, presented, per_category })
}

/// Index triples for exhaustive judging of all set combinations.
pub fn all_triplets(n: usize) -> Vec<[usize; 3]> {
    (0..n)
        .combinations(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect()
}

// -------------------------------------------------------- rank aggregation ---

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl RankStats {
    fn from_ranks(ranks: &[f64]) -> Self {
        if ranks.is_empty() {
            return RankStats { n: 0, mean: 0.0, std: 0.0 };
        }
        let n = ranks.len();
        let mean = ranks.iter().sum::<f64>() / n as f64;
        let var = ranks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
        RankStats { n, mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRanks {
    pub by_category: BTreeMap<JudgeCategory, RankStats>,
    pub overall: RankStats,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankTable {
    pub per_system: BTreeMap<String, SystemRanks>,
}

/// Converts best/worst picks into ranks 3/1, with the unnamed middle set at
/// 2, and accumulates per-system means over all judgments.
pub fn aggregate_triplet_ranks(judgments: &[TripletJudgment], system_ids: &[String]) -> RankTable {
    let mut ranks: BTreeMap<&str, BTreeMap<JudgeCategory, Vec<f64>>> =
        system_ids.iter().map(|id| (id.as_str(), BTreeMap::new())).collect();
    for judgment in judgments {
        for (category, bw) in &judgment.per_category {
            let Some(bw) = bw else { continue };
            for id in &judgment.presented {
                let Some(slots) = ranks.get_mut(id.as_str()) else { continue };
                let rank = if *id == bw.best {
                    3.0
                } else if *id == bw.worst {
                    1.0
                } else {
                    2.0
                };
                slots.entry(*category).or_default().push(rank);
            }
        }
    }
    let per_system = system_ids
        .iter()
        .map(|id| {
            let slots = &ranks[id.as_str()];
            let by_category: BTreeMap<JudgeCategory, RankStats> = JudgeCategory::ALL
                .iter()
                .map(|c| (*c, RankStats::from_ranks(slots.get(c).map_or(&[][..], |v| v))))
                .collect();
            let all: Vec<f64> = slots.values().flatten().copied().collect();
            (id.clone(), SystemRanks { by_category, overall: RankStats::from_ranks(&all) })
        })
        .collect();
    RankTable { per_system }
}

// ------------------------------------------------------------------- spans ---

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start_token: usize,
    pub end_token: usize,
}

/// Evenly spaced token windows used to aim one question per span. Spans
/// longer than the text are clamped to the whole text.
pub fn extract_spans(text: &str, n: usize, span_tokens: usize) -> Result<Vec<Span>, RoleError> {
    if n == 0 {
        return Err(RoleError::Argument("need at least one span".to_string()));
    }
    if span_tokens == 0 {
        return Err(RoleError::Argument("span_tokens must be positive".to_string()));
    }
    let len = text.split_whitespace().count();
    if len == 0 {
        return Err(RoleError::Argument("text has no tokens".to_string()));
    }
    let span = span_tokens.min(len);
    let max_start = len - span;
    let spans = (0..n)
        .map(|i| {
            let start = if n == 1 {
                0
            } else {
                ((i as f64) * (max_start as f64) / ((n - 1) as f64)).round() as usize
            };
            Span { start_token: start, end_token: start + span }
        })
        .collect();
    Ok(spans)
}

// --------------------------------------------------------------- baselines ---

#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub n_questions: usize,
    pub span_tokens: usize,
    pub max_retries: usize,
    pub templates: PromptTemplates,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            n_questions: 10,
            span_tokens: 96,
            max_retries: 3,
            templates: PromptTemplates::default(),
        }
    }
}

#[derive(Deserialize)]
struct TeacherReply {
    question: String,
    #[serde(default)]
    reference_answer: Option<String>,
}

#[derive(Deserialize)]
struct StudentReply {
    answers: Vec<Option<String>>,
}

/// Parses a JSON object out of a reply, tolerating prose around it.
fn json_island<T: serde::de::DeserializeOwned>(reply: &str) -> Option<T> {
    if let Ok(v) = serde_json::from_str(reply.trim()) {
        return Some(v);
    }
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    if end <= start {
        return None;
    }
    serde_json::from_str(&reply[start..=end]).ok()
}

/// One question per span of the section text. Slots whose call budget runs
/// out are dropped rather than failing the whole set.
pub fn teacher_baseline<P: ChatProvider + ?Sized>(
    document: &SectionRef,
    text: &str,
    provider: &P,
    cfg: &BaselineConfig,
) -> Result<QuestionSet, RoleError> {
    let spans = extract_spans(text, cfg.n_questions, cfg.span_tokens)?;
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let attempts = cfg.max_retries + 1;
    let mut questions = Vec::new();
    for span in spans {
        let span_text = tokens[span.start_token..span.end_token].join(" ");
        let prompt = cfg.templates.teacher.replace("{{span}}", &span_text);
        let base = ChatRequest::user(prompt);
        let parsed: Option<TeacherReply> =
            ask_until(provider, &base, attempts, json_island::<TeacherReply>)?;
        match parsed {
            Some(reply) => questions.push(Question {
                question: reply.question,
                reference_answer: reply.reference_answer,
            }),
            None => log::warn!(
                "dropping question slot at tokens {}..{} of {document}: no usable reply",
                span.start_token,
                span.end_token
            ),
        }
    }
    Ok(QuestionSet {
        system_id: provider.model_id().to_string(),
        section_ref: document.clone(),
        questions,
        transform: None,
        provenance: Vec::new(),
    })
}

/// Answers a question set in one exchange, aligning replies by index.
/// Missing slots pad with null; surplus entries are ignored; a dead exchange
/// degrades to an all-null set.
pub fn student_baseline<P: ChatProvider + ?Sized>(
    document: &SectionRef,
    material: &str,
    question_set: &QuestionSet,
    provider: &P,
    cfg: &BaselineConfig,
) -> Result<AnswerSet, RoleError> {
    let n = question_set.questions.len();
    let mut answers = vec![None; n];
    if n > 0 {
        let question_texts: Vec<&str> =
            question_set.questions.iter().map(|q| q.question.as_str()).collect();
        let prompt = cfg
            .templates
            .student
            .replace("{{material}}", material)
            .replace(
                "{{questions}}",
                &serde_json::to_string(&question_texts).expect("questions serialize"),
            );
        let base = ChatRequest::user(prompt);
        let parsed: Option<StudentReply> =
            ask_until(provider, &base, cfg.max_retries + 1, json_island::<StudentReply>)?;
        match parsed {
            Some(reply) => {
                for (slot, answer) in answers.iter_mut().zip(reply.answers) {
                    *slot = answer;
                }
            }
            None => log::warn!("no usable answer reply for {document}; recording nulls"),
        }
    }
    Ok(AnswerSet {
        system_id: provider.model_id().to_string(),
        section_ref: document.clone(),
        answers,
        question_source_id: Some(question_set.system_id.clone()),
        transform: None,
        provenance: Vec::new(),
    })
}

/// Finds the rating in a grading reply: the last standalone integer between
/// 0 and 5. Longer digit runs such as "63" never count as a rating.
fn parse_scale_reply(reply: &str) -> Option<u8> {
    let mut found = None;
    let mut run = String::new();
    for c in reply.chars().chain(std::iter::once(' ')) {
        if c.is_ascii_digit() {
            run.push(c);
            continue;
        }
        if !run.is_empty() {
            if let Ok(v) = run.parse::<u8>() {
                if v <= 5 {
                    found = Some(v);
                }
            }
            run.clear();
        }
    }
    found
}

/// Grades one answer on the worded 0..5 scale and widens it to 0..100.
/// Unusable replies after the retry budget come back as `None`.
pub fn evaluator_baseline<P: ChatProvider + ?Sized>(
    material: &str,
    question: &str,
    answer: &str,
    provider: &P,
    cfg: &BaselineConfig,
) -> Result<Option<u8>, RoleError> {
    let prompt = cfg
        .templates
        .evaluator
        .replace("{{material}}", material)
        .replace("{{question}}", question)
        .replace("{{answer}}", answer);
    let base = ChatRequest::user(prompt);
    let parsed = ask_until(provider, &base, cfg.max_retries + 1, parse_scale_reply)?;
    Ok(parsed.map(|v| v * 20))
}

// ------------------------------------------------------------ mock provider ---

/// Deterministic offline stand-in for a chat model. It recognizes each role
/// prompt by its template header and answers from the prompt content alone,
/// so identical pipelines produce identical bytes.
pub struct MockChatProvider {
    id: String,
}

impl MockChatProvider {
    pub fn new(seed: u64) -> Self {
        MockChatProvider { id: format!("mock-chat-{seed}") }
    }

    fn judge_triplets(prompt: &str) -> Option<String> {
        let payload_line =
            prompt.lines().find(|l| l.trim_start().starts_with("{\"material\""))?;
        let payload: serde_json::Value = serde_json::from_str(payload_line.trim()).ok()?;
        let sets = payload.get("questionsets")?.as_array()?;
        let keys: Vec<String> = sets
            .iter()
            .map(|s| serde_json::to_string(&s["questions"]).unwrap_or_default())
            .collect();
        if keys.is_empty() {
            return None;
        }
        let best = keys
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)?;
        let worst = keys
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)?;
        let mut out = String::new();
        for line in prompt.lines() {
            let Some(rest) = line.strip_prefix("ENTRY") else { continue };
            let Some((label, statement)) = rest.split_once(':') else { continue };
            if label.chars().any(|c| !c.is_ascii_digit()) || label.is_empty() {
                continue;
            }
            let statement = statement.split(" is most true about").next().unwrap_or(statement);
            let pick = if statement.contains("least") { worst } else { best };
            out.push_str(&format!("ENTRY{label}: QUESTIONSET_NUMBER: {}\n", pick + 1));
        }
        Some(out)
    }

    fn answer_teacher(prompt: &str) -> Option<String> {
        let span = prompt.split("PASSAGE:\n").nth(1)?.trim();
        let lead: Vec<&str> = span.split_whitespace().take(4).collect();
        let reply = serde_json::json!({
            "question": format!("What does the material state about {}?", lead.join(" ")),
            "reference_answer": span,
        });
        Some(reply.to_string())
    }

    fn answer_student(prompt: &str) -> Option<String> {
        let material =
            prompt.split("MATERIAL:\n").nth(1)?.split("\nQUESTIONS:").next()?.trim();
        let questions_line = prompt.split("QUESTIONS:\n").nth(1)?.lines().next()?;
        let questions: Vec<String> = serde_json::from_str(questions_line.trim()).ok()?;
        let snippet: Vec<&str> = material.split_whitespace().take(12).collect();
        let answers: Vec<String> = questions
            .iter()
            .map(|q| {
                let cue: Vec<&str> = q.split_whitespace().take(3).collect();
                format!("{} This addresses {}", snippet.join(" "), cue.join(" "))
            })
            .collect();
        Some(serde_json::json!({ "answers": answers }).to_string())
    }

    fn answer_evaluator(prompt: &str) -> Option<String> {
        let material =
            prompt.split("MATERIAL:\n").nth(1)?.split("\nQUESTION:").next()?.trim();
        let answer = prompt.split("ANSWER:\n").nth(1)?.trim();
        let material_tokens: std::collections::BTreeSet<String> =
            crate::lexmetrics::tokenize(material).into_iter().collect();
        let answer_tokens = crate::lexmetrics::tokenize(answer);
        if answer_tokens.is_empty() {
            return Some("0".to_string());
        }
        let hits = answer_tokens.iter().filter(|t| material_tokens.contains(*t)).count();
        let score = ((hits as f64 / answer_tokens.len() as f64) * 5.0).round() as u8;
        Some(score.min(5).to_string())
    }

    /// Picks the lettered option sharing the most vocabulary with the text
    /// above the instruction, calling it untrue only when the surrounding
    /// text says so. No options means the claim cannot be checked.
    fn answer_mcq(prompt: &str) -> Option<String> {
        let cut = prompt.find("\nThe material above")?;
        let material = prompt[..cut].trim();
        let mut options: Vec<(char, &str)> = Vec::new();
        for line in prompt[cut..].lines() {
            let bytes = line.as_bytes();
            if bytes.len() > 3
                && bytes[0].is_ascii_uppercase()
                && bytes[1] == b'.'
                && bytes[2] == b' '
            {
                options.push((bytes[0] as char, &line[3..]));
            }
        }
        if options.is_empty() {
            return Some("UNKNOWABLE".to_string());
        }
        let material_tokens: std::collections::BTreeSet<String> =
            crate::lexmetrics::tokenize(material).into_iter().collect();
        let mut best = options[0];
        let mut best_score = -1.0f64;
        for &(letter, text) in &options {
            let tokens = crate::lexmetrics::tokenize(text);
            let score = if tokens.is_empty() {
                0.0
            } else {
                tokens.iter().filter(|t| material_tokens.contains(*t)).count() as f64
                    / tokens.len() as f64
            };
            if score > best_score {
                best_score = score;
                best = (letter, text);
            }
        }
        let hay = format!("{material} {}", best.1).to_lowercase();
        let verdict = if hay.contains("as untrue") { "FALSE" } else { "TRUE" };
        Some(format!("{verdict} {}", best.0))
    }
}

impl ChatProvider for MockChatProvider {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let prompt: String = req
            .messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let reply = if prompt.contains("QUESTIONSET_NUMBER") {
            Self::judge_triplets(&prompt)
        } else if prompt.contains("You are a teacher preparing a quiz") {
            Self::answer_teacher(&prompt)
        } else if prompt.contains("You are a student answering quiz questions") {
            Self::answer_student(&prompt)
        } else if prompt.contains("You are grading a student's answer") {
            Self::answer_evaluator(&prompt)
        } else if prompt.contains("Decide which of the lettered") {
            Self::answer_mcq(&prompt)
        } else {
            None
        };
        reply.ok_or_else(|| {
            ProviderError::Parse("mock provider did not recognize the prompt".to_string())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_replies_take_the_last_small_integer() {
        assert_eq!(parse_scale_reply("3"), Some(3));
        assert_eq!(parse_scale_reply("scale 0 to 5: I say 4"), Some(4));
        assert_eq!(parse_scale_reply("63"), None);
        assert_eq!(parse_scale_reply("no digits"), None);
    }

    #[test]
    fn json_islands_survive_surrounding_prose() {
        let got: Option<TeacherReply> =
            json_island("Sure! {\"question\":\"Q?\",\"reference_answer\":\"A.\"} Hope that helps.");
        let got = got.unwrap();
        assert_eq!(got.question, "Q?");
        assert_eq!(got.reference_answer.as_deref(), Some("A."));
    }

    #[test]
    fn triplet_index_enumeration_is_exhaustive() {
        assert_eq!(all_triplets(3), vec![[0, 1, 2]]);
        assert_eq!(all_triplets(4).len(), 4);
        assert!(all_triplets(2).is_empty());
    }
}
