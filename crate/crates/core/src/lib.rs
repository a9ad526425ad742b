//! Quiz-based comprehension evaluation for text corpora.
//!
//! The crate models a three-role protocol: teachers turn material sections
//! into question sets, students answer them strictly from the material, and
//! evaluators grade the answers. Around that sit embedding and lexical
//! metrics for scoring question sets and answers, adversarial rewrites for
//! probing evaluator robustness, fact-check quiz construction, and report
//! assembly.

pub mod adversarial;
pub mod corpus;
pub mod embedmetrics;
pub mod lexmetrics;
pub mod llmroles;
pub mod provider;
pub mod report;

pub use adversarial::Transform;
pub use corpus::{Corpus, SectionRef};
pub use embedmetrics::{EmbedConfig, EmbeddingProvider, TeacherScore};
pub use llmroles::{ChatProvider, ChatRequest, PromptTemplates};
pub use provider::ProviderError;
pub use report::RunReport;

pub(crate) mod seeding {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use sha2::{Digest, Sha256};

    /// Derives a stable sub-seed from a parent seed and context strings.
    /// Zero bytes separate the parts so boundaries stay unambiguous.
    pub(crate) fn derive(seed: u64, parts: &[&str]) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        for part in parts {
            hasher.update([0u8]);
            hasher.update(part.as_bytes());
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest holds at least 8 bytes"))
    }

    pub(crate) fn rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive(seed, parts))
    }

    #[cfg(test)]
    mod tests {
        use super::derive;

        #[test]
        fn contexts_with_shifted_boundaries_get_distinct_seeds() {
            assert_ne!(derive(1, &["ab", "c"]), derive(1, &["a", "bc"]));
            assert_ne!(derive(1, &["x"]), derive(2, &["x"]));
            assert_eq!(derive(7, &["a", "b"]), derive(7, &["a", "b"]));
        }
    }
}
