//! Lexical answer scoring and evaluator validation statistics: ROUGE-L on
//! whole answers, word-form Jaccard overlap, three-way score classes and the
//! derived agreement/accuracy measures.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::SectionRef;

#[derive(Debug, thiserror::Error)]
pub enum LexError {
    #[error("reference text has no tokens")]
    EmptyReference,
    #[error("both texts have empty token sets")]
    EmptyTokenSets,
    #[error("score {0} outside [0, 100]")]
    ScoreOutOfRange(f64),
    #[error("inputs are not the same length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no jointly valid entries")]
    NothingValid,
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("zero variance input")]
    ZeroVariance,
}

/// Lowercases and splits on every maximal run of non-alphanumeric
/// characters. Shared by the ROUGE and Jaccard paths.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Classic O(|a|·|b|) longest-common-subsequence length.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS length over the reference token count. The whole text is treated as
/// one sequence.
pub fn rouge_l_recall(reference: &str, candidate: &str) -> Result<f64, LexError> {
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(LexError::EmptyReference);
    }
    let c = tokenize(candidate);
    Ok(lcs_length(&r, &c) as f64 / r.len() as f64)
}

/// Harmonic mean of LCS recall and LCS precision.
pub fn rouge_l_f1(reference: &str, candidate: &str) -> Result<f64, LexError> {
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(LexError::EmptyReference);
    }
    let c = tokenize(candidate);
    if c.is_empty() {
        return Ok(0.0);
    }
    let lcs = lcs_length(&r, &c) as f64;
    if lcs == 0.0 {
        return Ok(0.0);
    }
    let recall = lcs / r.len() as f64;
    let precision = lcs / c.len() as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Overlap of unique word forms over their union.
pub fn jaccard_wordforms(a: &str, b: &str) -> Result<f64, LexError> {
    let sa: std::collections::BTreeSet<String> = tokenize(a).into_iter().collect();
    let sb: std::collections::BTreeSet<String> = tokenize(b).into_iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return Err(LexError::EmptyTokenSets);
    }
    let inter = sa.intersection(&sb).count();
    Ok(inter as f64 / union as f64)
}

/// Per-answer lexical scores kept alongside the aggregate tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub section_ref: SectionRef,
    pub question_index: usize,
    pub system_id: String,
    pub rouge_l_recall: f64,
    pub rouge_l_f1: f64,
}

/// Three-way rating class: 1 is [0,33), 2 is [33,66), 3 is [66,100].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    One,
    Two,
    Three,
}

impl ClassLabel {
    pub fn as_u8(self) -> u8 {
        match self {
            ClassLabel::One => 1,
            ClassLabel::Two => 2,
            ClassLabel::Three => 3,
        }
    }
}

pub fn quantize_class(score: f64) -> Result<ClassLabel, LexError> {
    if !score.is_finite() || !(0.0..=100.0).contains(&score) {
        return Err(LexError::ScoreOutOfRange(score));
    }
    Ok(if score < 33.0 {
        ClassLabel::One
    } else if score < 66.0 {
        ClassLabel::Two
    } else {
        ClassLabel::Three
    })
}

fn valid_rating(v: f64) -> bool {
    v.is_finite() && (0.0..=100.0).contains(&v)
}

/// Fraction of jointly valid items whose ratings fall in the same class.
pub fn agreement_rate(r1: &[Option<f64>], r2: &[Option<f64>]) -> Result<f64, LexError> {
    if r1.len() != r2.len() {
        return Err(LexError::LengthMismatch(r1.len(), r2.len()));
    }
    let mut joint = 0usize;
    let mut agree = 0usize;
    for (a, b) in r1.iter().zip(r2) {
        let (Some(a), Some(b)) = (a, b) else { continue };
        if !valid_rating(*a) || !valid_rating(*b) {
            continue;
        }
        joint += 1;
        if quantize_class(*a)? == quantize_class(*b)? {
            agree += 1;
        }
    }
    if joint == 0 {
        return Err(LexError::NothingValid);
    }
    Ok(agree as f64 / joint as f64)
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, LexError> {
    if xs.len() != ys.len() {
        return Err(LexError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(LexError::TooFewPoints(n));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(LexError::ZeroVariance);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracy {
    pub n: usize,
    pub accuracy: f64,
    /// Precision of the evaluator's class predictions against the ROUGE
    /// class, keyed by class value; only classes actually predicted appear.
    pub per_class_precision: BTreeMap<u8, f64>,
}

/// Quantizes evaluator scores (0-100) and ROUGE scores (0-1, scaled by 100)
/// into classes and reports accuracy plus per-class precision. Pairs with an
/// invalid entry on either side are dropped.
pub fn class_accuracy(eval_scores: &[f64], rouge_scores: &[f64]) -> Result<ClassAccuracy, LexError> {
    if eval_scores.len() != rouge_scores.len() {
        return Err(LexError::LengthMismatch(eval_scores.len(), rouge_scores.len()));
    }
    let mut n = 0usize;
    let mut hits = 0usize;
    let mut predicted: BTreeMap<u8, (usize, usize)> = BTreeMap::new();
    for (&e, &r) in eval_scores.iter().zip(rouge_scores) {
        if !valid_rating(e) || !r.is_finite() || !(0.0..=1.0).contains(&r) {
            continue;
        }
        let pe = quantize_class(e)?;
        let pr = quantize_class(r * 100.0)?;
        n += 1;
        let slot = predicted.entry(pe.as_u8()).or_insert((0, 0));
        slot.1 += 1;
        if pe == pr {
            hits += 1;
            slot.0 += 1;
        }
    }
    if n == 0 {
        return Err(LexError::NothingValid);
    }
    Ok(ClassAccuracy {
        n,
        accuracy: hits as f64 / n as f64,
        per_class_precision: predicted
            .into_iter()
            .map(|(class, (hit, total))| (class, hit as f64 / total as f64))
            .collect(),
    })
}
