//! Adversarial variants of question/answer items for probing evaluators:
//! word shuffles, random-text replacements and cross-item swaps, plus the
//! fractional-scale rating rescue rule.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SectionRef;
use crate::seeding;

#[derive(Debug, thiserror::Error)]
pub enum AdversarialError {
    #[error("vocabulary is empty but the template has tokens")]
    EmptyVocabulary,
    #[error("need at least two items, got {0}")]
    TooFewItems(usize),
    #[error("no items to transform")]
    NoItems,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    AnswersSwapped,
    AnswerRandomText,
    QuestionRandomText,
    AnswerWordsShuffled,
    QuestionWordsShuffled,
    MaterialSwapped,
}

impl Transform {
    pub const ALL: [Transform; 6] = [
        Transform::AnswersSwapped,
        Transform::AnswerRandomText,
        Transform::QuestionRandomText,
        Transform::AnswerWordsShuffled,
        Transform::QuestionWordsShuffled,
        Transform::MaterialSwapped,
    ];

    /// Human-readable category label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Transform::AnswersSwapped => "answers swapped",
            Transform::AnswerRandomText => "answer random text",
            Transform::QuestionRandomText => "question random text",
            Transform::AnswerWordsShuffled => "answer words shuffled",
            Transform::QuestionWordsShuffled => "question words shuffled",
            Transform::MaterialSwapped => "material swapped",
        }
    }

    /// Short tag, identical to the serialized form.
    pub fn tag(self) -> &'static str {
        match self {
            Transform::AnswersSwapped => "answers_swapped",
            Transform::AnswerRandomText => "answer_random_text",
            Transform::QuestionRandomText => "question_random_text",
            Transform::AnswerWordsShuffled => "answer_words_shuffled",
            Transform::QuestionWordsShuffled => "question_words_shuffled",
            Transform::MaterialSwapped => "material_swapped",
        }
    }

    fn is_swap(self) -> bool {
        matches!(self, Transform::AnswersSwapped | Transform::MaterialSwapped)
    }
}

impl std::fmt::Display for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One question/answer pair under test, with enough identity to trace it
/// back to its sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub section_ref: SectionRef,
    pub question_source_id: String,
    pub answer_source_id: String,
    pub question_index: usize,
    pub question: String,
    pub answer: String,
}

impl QaItem {
    /// Stable identity for provenance records.
    pub fn key(&self) -> String {
        format!(
            "{}/{}#{}@{}+{}",
            self.section_ref.kind,
            self.section_ref.section_id,
            self.question_index,
            self.question_source_id,
            self.answer_source_id
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialItem {
    pub base: QaItem,
    pub item: QaItem,
    pub transform: Transform,
    pub seed: u64,
    /// Keys of donor items, for swap transforms.
    pub provenance: Vec<String>,
}

/// Seeded uniform permutation of whitespace tokens.
pub fn shuffle_words(text: &str, seed: u64) -> String {
    let mut tokens: Vec<&str> = text.split_whitespace().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tokens.shuffle(&mut rng);
    tokens.join(" ")
}

/// Same token count as the template, every token drawn uniformly with
/// replacement from the vocabulary.
pub fn random_text(template: &str, vocabulary: &[String], seed: u64) -> Result<String, AdversarialError> {
    let n = template.split_whitespace().count();
    if n == 0 {
        return Ok(String::new());
    }
    if vocabulary.is_empty() {
        return Err(AdversarialError::EmptyVocabulary);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<&str> =
        (0..n).map(|_| vocabulary[rng.gen_range(0..vocabulary.len())].as_str()).collect();
    Ok(words.join(" "))
}

/// Fixed-point-free permutation of 0..n (a single cycle, so every element
/// moves), deterministic per seed.
pub fn derangement(n: usize, seed: u64) -> Result<Vec<usize>, AdversarialError> {
    if n < 2 {
        return Err(AdversarialError::TooFewItems(n));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Sattolo's variant: swap each position with a strictly earlier one
    for i in (1..n).rev() {
        let j = rng.gen_range(0..i);
        perm.swap(i, j);
    }
    Ok(perm)
}

/// Reassigns a value to every item from some other item. Returns the new
/// values and the donor index per position.
pub fn swap_within<T: Clone>(values: &[T], seed: u64) -> Result<(Vec<T>, Vec<usize>), AdversarialError> {
    let donors = derangement(values.len(), seed)?;
    let swapped = donors.iter().map(|&j| values[j].clone()).collect();
    Ok((swapped, donors))
}

/// Normalizes a raw rating to the 0-100 integer scale: values at or below 1
/// are read as fractions and multiplied by 100; anything non-finite or
/// outside [0,100] is an invalid rating.
pub fn rescue_rating(raw: f64) -> Option<u8> {
    if !raw.is_finite() || !(0.0..=100.0).contains(&raw) {
        return None;
    }
    let scaled = if raw <= 1.0 { raw * 100.0 } else { raw };
    Some(scaled.round() as u8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub transforms: Vec<Transform>,
    /// Restrict swap donors to items of the same material kind.
    pub group_by_kind: bool,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { transforms: Transform::ALL.to_vec(), group_by_kind: true, seed: 0 }
    }
}

/// Sorted unique whitespace tokens of the given texts; the default
/// random-text vocabulary.
pub fn vocabulary_from_texts<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> Vec<String> {
    let set: std::collections::BTreeSet<String> =
        texts.into_iter().flat_map(|t| t.split_whitespace().map(str::to_string)).collect();
    set.into_iter().collect()
}

/// One adversarial item per (item, transform) pair. Swap transforms operate
/// within material-kind groups when configured; groups too small to swap are
/// skipped with a warning.
pub fn build_adversarial_suite(
    items: &[QaItem],
    vocabulary: &[String],
    config: &SuiteConfig,
) -> Result<Vec<AdversarialItem>, AdversarialError> {
    if items.is_empty() {
        return Err(AdversarialError::NoItems);
    }
    let mut out = Vec::new();
    for &transform in &config.transforms {
        if transform.is_swap() {
            build_swaps(items, transform, config, &mut out)?;
        } else {
            for item in items {
                let seed = seeding::derive(config.seed, &["adv", transform.tag(), &item.key()]);
                let mut mutated = item.clone();
                match transform {
                    Transform::AnswerWordsShuffled => {
                        mutated.answer = shuffle_words(&item.answer, seed);
                    }
                    Transform::QuestionWordsShuffled => {
                        mutated.question = shuffle_words(&item.question, seed);
                    }
                    Transform::AnswerRandomText => {
                        mutated.answer = random_text(&item.answer, vocabulary, seed)?;
                    }
                    Transform::QuestionRandomText => {
                        mutated.question = random_text(&item.question, vocabulary, seed)?;
                    }
                    _ => unreachable!("swap transforms handled above"),
                }
                out.push(AdversarialItem {
                    base: item.clone(),
                    item: mutated,
                    transform,
                    seed,
                    provenance: Vec::new(),
                });
            }
        }
    }
    Ok(out)
}

fn build_swaps(
    items: &[QaItem],
    transform: Transform,
    config: &SuiteConfig,
    out: &mut Vec<AdversarialItem>,
) -> Result<(), AdversarialError> {
    // indices per group, in input order
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        let key = if config.group_by_kind { item.section_ref.kind.clone() } else { String::new() };
        groups.entry(key).or_default().push(i);
    }
    // donor index per item position, None where the group cannot swap
    let mut donor_of: Vec<Option<usize>> = vec![None; items.len()];
    for (kind, members) in &groups {
        if members.len() < 2 {
            log::warn!(
                "skipping {} for material kind {kind:?}: only {} item(s)",
                transform.label(),
                members.len()
            );
            continue;
        }
        let seed = seeding::derive(config.seed, &["adv", transform.tag(), kind]);
        let donors = derangement(members.len(), seed)?;
        for (slot, &item_idx) in members.iter().enumerate() {
            donor_of[item_idx] = Some(members[donors[slot]]);
        }
    }
    for (i, item) in items.iter().enumerate() {
        let Some(donor_idx) = donor_of[i] else { continue };
        let donor = &items[donor_idx];
        let mut mutated = item.clone();
        match transform {
            Transform::AnswersSwapped => mutated.answer = donor.answer.clone(),
            Transform::MaterialSwapped => mutated.section_ref = donor.section_ref.clone(),
            _ => unreachable!("only swap transforms reach here"),
        }
        out.push(AdversarialItem {
            base: item.clone(),
            item: mutated,
            transform,
            seed: config.seed,
            provenance: vec![donor.key()],
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescue_rounds_half_away_from_zero() {
        assert_eq!(rescue_rating(0.75), Some(75));
        assert_eq!(rescue_rating(49.5), Some(50));
    }

    #[test]
    fn vocabulary_is_sorted_and_unique() {
        let v = vocabulary_from_texts(["b a", "a c"]);
        assert_eq!(v, vec!["a".to_string(), "b".to_string(), "c".to_string()]);
    }
}
