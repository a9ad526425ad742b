//! Embedding-based question-set scoring: overlapping token windows over the
//! material, a gated additive relevance matrix, and the three derived
//! quantities (total relevance, marginal-entropy coverage in bits, summed
//! pairwise KL diversity), plus per-document rank aggregation across
//! systems.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::provider::ProviderError;
use crate::seeding;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("text has no tokens")]
    EmptyText,
    #[error("window geometry invalid: window {window}, stride {stride}")]
    BadWindow { window: usize, stride: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("vector dimensions differ ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("cosine of a zero vector is undefined")]
    ZeroVector,
    #[error("matrix rows have unequal lengths")]
    RaggedMatrix,
    #[error("distribution is degenerate; apply the degenerate-score rule")]
    Degenerate,
    #[error("rank aggregation needs at least two systems, got {0}")]
    TooFewSystems(usize),
    #[error("rank aggregation needs at least one document")]
    NoDocuments,
    #[error("provider: {0}")]
    Provider(#[from] ProviderError),
}

// -------------------------------------------------------------- windowing ---

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub text: String,
    pub start_token: usize,
    pub end_token: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<Window>,
}

/// Overlapping whitespace-token windows. The final window is anchored to the
/// text end so every token is covered even when the stride does not divide
/// the remainder.
pub fn segment_windows(
    text: &str,
    window_tokens: usize,
    stride_tokens: usize,
) -> Result<WindowSet, MetricError> {
    if window_tokens == 0 || stride_tokens == 0 || stride_tokens > window_tokens {
        return Err(MetricError::BadWindow { window: window_tokens, stride: stride_tokens });
    }
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(MetricError::EmptyText);
    }
    let mut starts: Vec<usize> = Vec::new();
    let mut start = 0usize;
    while start + window_tokens < tokens.len() {
        starts.push(start);
        start += stride_tokens;
    }
    starts.push(tokens.len().saturating_sub(window_tokens));
    let windows = starts
        .into_iter()
        .map(|s| {
            let e = (s + window_tokens).min(tokens.len());
            Window { text: tokens[s..e].join(" "), start_token: s, end_token: e }
        })
        .collect();
    Ok(WindowSet { windows })
}

// ------------------------------------------------------------- primitives ---

pub fn cosine(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::DimMismatch(x.len(), y.len()));
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    Ok(dot / (nx * ny))
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> Result<f64, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in quantile input"));
    let n = v.len();
    if n == 1 {
        return Ok(v[0]);
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

fn check_rect(m: &[Vec<f64>]) -> Result<(usize, usize), MetricError> {
    if m.is_empty() || m[0].is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let w = m[0].len();
    if m.iter().any(|row| row.len() != w) {
        return Err(MetricError::RaggedMatrix);
    }
    Ok((m.len(), w))
}

/// Gated additive relevance: a similarity contributes only when it strictly
/// exceeds its window column's 0.95 quantile, and then the column median is
/// added to it. Columns run over questions for a fixed window. Entries clamp
/// at zero so the matrix always normalizes into a distribution; a mostly
/// negative column would otherwise leak negative mass.
pub fn relevance_matrix(sims: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, MetricError> {
    let (nq, nw) = check_rect(sims)?;
    let mut rel = vec![vec![0.0; nw]; nq];
    for wi in 0..nw {
        let column: Vec<f64> = (0..nq).map(|qi| sims[qi][wi]).collect();
        let q50 = quantile(&column, 0.5)?;
        let q95 = quantile(&column, 0.95)?;
        for qi in 0..nq {
            if sims[qi][wi] > q95 {
                rel[qi][wi] = (sims[qi][wi] + q50).max(0.0);
            }
        }
    }
    Ok(rel)
}

/// Normalizes the relevance matrix into a joint distribution. An all-zero
/// matrix cannot be normalized and is flagged degenerate instead.
pub fn joint_distribution(rel: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, bool), MetricError> {
    let (nq, nw) = check_rect(rel)?;
    let total: f64 = rel.iter().flatten().sum();
    if total == 0.0 {
        return Ok((vec![vec![0.0; nw]; nq], true));
    }
    Ok((rel.iter().map(|row| row.iter().map(|v| v / total).collect()).collect(), false))
}

/// Sum of all relevance entries.
pub fn relevance_score(rel: &[Vec<f64>]) -> f64 {
    rel.iter().flatten().sum()
}

/// Shannon entropy (bits) of the window marginal of the joint.
pub fn coverage_score(joint: &[Vec<f64>]) -> Result<f64, MetricError> {
    let (_, nw) = check_rect(joint)?;
    let mut marginal = vec![0.0; nw];
    for row in joint {
        for (wi, v) in row.iter().enumerate() {
            marginal[wi] += v;
        }
    }
    if marginal.iter().sum::<f64>() == 0.0 {
        return Err(MetricError::Degenerate);
    }
    Ok(-marginal.iter().filter(|&&m| m > 0.0).map(|&m| m * m.log2()).sum::<f64>())
}

/// Summed KL divergence (bits) over all ordered pairs of per-question
/// conditionals, smoothed with `epsilon`. A question whose joint row is all
/// zero contributes a uniform conditional.
pub fn diversity_score(joint: &[Vec<f64>], epsilon: f64) -> Result<f64, MetricError> {
    let (_, nw) = check_rect(joint)?;
    if joint.iter().flatten().sum::<f64>() == 0.0 {
        return Err(MetricError::Degenerate);
    }
    let conditionals: Vec<Vec<f64>> = joint
        .iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            let base: Vec<f64> = if s == 0.0 {
                vec![1.0 / nw as f64; nw]
            } else {
                row.iter().map(|v| v / s).collect()
            };
            let smoothed: f64 = base.iter().map(|v| v + epsilon).sum();
            base.iter().map(|v| (v + epsilon) / smoothed).collect()
        })
        .collect();
    let mut total = 0.0;
    for a in &conditionals {
        for b in &conditionals {
            total += a
                .iter()
                .zip(b)
                .filter(|(pa, _)| **pa > 0.0)
                .map(|(pa, pb)| pa * (pa / pb).log2())
                .sum::<f64>();
        }
    }
    Ok(total)
}

// ------------------------------------------------------------------ model ---

/// The full intermediate state for one (question set, material) pair, kept
/// inspectable for record dumps and cross-checking.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceModel {
    pub question_embeddings: Vec<Vec<f64>>,
    pub window_embeddings: Vec<Vec<f64>>,
    pub similarity: Vec<Vec<f64>>,
    pub relevance: Vec<Vec<f64>>,
    pub joint: Vec<Vec<f64>>,
    pub degenerate: bool,
    pub epsilon: f64,
}

impl RelevanceModel {
    pub fn build(
        question_embeddings: Vec<Vec<f64>>,
        window_embeddings: Vec<Vec<f64>>,
        epsilon: f64,
    ) -> Result<Self, MetricError> {
        if question_embeddings.is_empty() || window_embeddings.is_empty() {
            return Err(MetricError::EmptyInput);
        }
        let mut similarity = vec![vec![0.0; window_embeddings.len()]; question_embeddings.len()];
        for (qi, q) in question_embeddings.iter().enumerate() {
            for (wi, w) in window_embeddings.iter().enumerate() {
                similarity[qi][wi] = cosine(q, w)?;
            }
        }
        let relevance = relevance_matrix(&similarity)?;
        let (joint, degenerate) = joint_distribution(&relevance)?;
        Ok(RelevanceModel {
            question_embeddings,
            window_embeddings,
            similarity,
            relevance,
            joint,
            degenerate,
            epsilon,
        })
    }

    /// The three scores; a degenerate joint scores zero across the board.
    pub fn scores(&self) -> TeacherScore {
        if self.degenerate {
            return TeacherScore { relevance: 0.0, coverage: 0.0, diversity: 0.0 };
        }
        TeacherScore {
            relevance: relevance_score(&self.relevance),
            coverage: coverage_score(&self.joint).expect("non-degenerate joint"),
            diversity: diversity_score(&self.joint, self.epsilon).expect("non-degenerate joint"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherScore {
    pub relevance: f64,
    pub coverage: f64,
    pub diversity: f64,
}

// -------------------------------------------------------------- providers ---

pub trait EmbeddingProvider {
    fn model_id(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

/// Offline deterministic embedder: a hashed bag-of-words folded into a fixed
/// number of dimensions and L2-normalized. Lexical overlap translates into
/// cosine similarity, which is all the hermetic tests need.
pub struct HashEmbedder {
    dim: usize,
    id: String,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder { dim: dim.max(2), id: format!("hash-bow-{}", dim.max(2)) }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(64)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut v = vec![0.0f64; self.dim];
                let tokens = crate::lexmetrics::tokenize(text);
                if tokens.is_empty() {
                    v[0] = 1.0;
                    return v;
                }
                for token in tokens {
                    let digest = Sha256::digest(token.as_bytes());
                    let idx = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
                        as usize
                        % self.dim;
                    v[idx] += 1.0;
                }
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                v.iter_mut().for_each(|a| *a /= norm);
                v
            })
            .collect())
    }
}

/// Embeddings over HTTP, OpenAI-compatible wire format.
pub struct HttpEmbedder {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(std::time::Duration::from_secs(120)))
            .build();
        HttpEmbedder { agent: config.into(), url: url.into(), model: model.into(), api_key }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let body = serde_json::json!({ "model": self.model, "input": texts });
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
            .map_err(|e| ProviderError::Parse(format!("embedding response: {e}")))?;
        if status == 401 || status == 403 {
            return Err(ProviderError::Auth(payload.to_string()));
        }
        if status >= 400 {
            return Err(ProviderError::Http { status, detail: payload.to_string() });
        }
        let data = payload["data"]
            .as_array()
            .ok_or_else(|| ProviderError::Parse("missing data array".to_string()))?;
        if data.len() != texts.len() {
            return Err(ProviderError::Parse(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                data.len()
            )));
        }
        data.iter()
            .map(|entry| {
                entry["embedding"]
                    .as_array()
                    .ok_or_else(|| ProviderError::Parse("missing embedding field".to_string()))?
                    .iter()
                    .map(|v| {
                        v.as_f64().ok_or_else(|| {
                            ProviderError::Parse("non-numeric embedding entry".to_string())
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

// ---------------------------------------------------------------- scoring ---

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedConfig {
    pub window_tokens: usize,
    pub stride_tokens: usize,
    pub epsilon: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig { window_tokens: 96, stride_tokens: 48, epsilon: 1e-9 }
    }
}

/// Scores one question set against one material text. An empty question set
/// scores zero without touching the provider.
pub fn score_question_set<P: EmbeddingProvider + ?Sized>(
    text: &str,
    questions: &[String],
    provider: &P,
    config: &EmbedConfig,
) -> Result<TeacherScore, MetricError> {
    if questions.is_empty() {
        return Ok(TeacherScore { relevance: 0.0, coverage: 0.0, diversity: 0.0 });
    }
    let windows = segment_windows(text, config.window_tokens, config.stride_tokens)?;
    let window_texts: Vec<String> = windows.windows.iter().map(|w| w.text.clone()).collect();
    let question_embeddings = provider.embed(questions)?;
    let window_embeddings = provider.embed(&window_texts)?;
    let model = RelevanceModel::build(question_embeddings, window_embeddings, config.epsilon)?;
    Ok(model.scores())
}

// ----------------------------------------------------------------- ranking ---

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quantity {
    Relevance,
    Coverage,
    Diversity,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::Relevance, Quantity::Coverage, Quantity::Diversity];

    pub fn of(self, score: &TeacherScore) -> f64 {
        match self {
            Quantity::Relevance => score.relevance,
            Quantity::Coverage => score.coverage,
            Quantity::Diversity => score.diversity,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Quantity::Relevance => "relevance",
            Quantity::Coverage => "coverage",
            Quantity::Diversity => "diversity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSummary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

pub type ScoresBySystem = BTreeMap<String, BTreeMap<String, TeacherScore>>;
pub type RanksByDocument = BTreeMap<String, BTreeMap<Quantity, BTreeMap<String, usize>>>;

/// Per document and quantity, the best score gets rank n down to 1 for the
/// worst. Systems without a submission on a document take the lowest ranks.
/// All ties are broken by chance seeded per (document, quantity).
pub fn rank_per_document(scores: &ScoresBySystem, seed: u64) -> Result<RanksByDocument, MetricError> {
    let systems: Vec<&String> = scores.keys().collect();
    if systems.len() < 2 {
        return Err(MetricError::TooFewSystems(systems.len()));
    }
    let mut documents: Vec<&String> = scores.values().flat_map(|d| d.keys()).collect();
    documents.sort();
    documents.dedup();
    if documents.is_empty() {
        return Err(MetricError::NoDocuments);
    }
    let n = systems.len();
    let mut out: RanksByDocument = BTreeMap::new();
    for doc in &documents {
        let mut by_quantity = BTreeMap::new();
        for quantity in Quantity::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(
                seed,
                &["rank", doc, quantity.label()],
            ));
            let mut present: Vec<(&String, f64)> = Vec::new();
            let mut missing: Vec<&String> = Vec::new();
            for sys in &systems {
                match scores[*sys].get(*doc) {
                    Some(s) => present.push((sys, quantity.of(s))),
                    None => missing.push(sys),
                }
            }
            // shuffle first, then stable-sort: equal scores keep a random
            // relative order while everything else is strictly by score
            present.shuffle(&mut rng);
            present.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("scores are not NaN"));
            missing.shuffle(&mut rng);
            let mut ranks: BTreeMap<String, usize> = BTreeMap::new();
            for (i, (sys, _)) in present.iter().enumerate() {
                ranks.insert((*sys).clone(), n - i);
            }
            let worst_base = n - present.len();
            for (i, sys) in missing.iter().enumerate() {
                ranks.insert((*sys).clone(), worst_base - i);
            }
            by_quantity.insert(quantity, ranks);
        }
        out.insert((*doc).clone(), by_quantity);
    }
    Ok(out)
}

/// Mean and population standard deviation of per-document ranks.
pub fn aggregate_ranks(
    scores: &ScoresBySystem,
    seed: u64,
) -> Result<BTreeMap<String, BTreeMap<Quantity, RankSummary>>, MetricError> {
    let per_doc = rank_per_document(scores, seed)?;
    let mut collected: BTreeMap<String, BTreeMap<Quantity, Vec<f64>>> = BTreeMap::new();
    for by_quantity in per_doc.values() {
        for (quantity, ranks) in by_quantity {
            for (sys, rank) in ranks {
                collected
                    .entry(sys.clone())
                    .or_default()
                    .entry(*quantity)
                    .or_default()
                    .push(*rank as f64);
            }
        }
    }
    Ok(collected
        .into_iter()
        .map(|(sys, by_quantity)| {
            let summaries = by_quantity
                .into_iter()
                .map(|(quantity, ranks)| {
                    let n = ranks.len();
                    let mean = ranks.iter().sum::<f64>() / n as f64;
                    let var =
                        ranks.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
                    (quantity, RankSummary { n, mean, std: var.sqrt() })
                })
                .collect();
            (sys, summaries)
        })
        .collect())
}
