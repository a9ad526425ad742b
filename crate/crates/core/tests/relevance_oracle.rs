//! Cross-checks the question-set scoring pipeline against an independent
//! oracle written directly from the score definitions: cosine similarity,
//! per-window column quantiles with linear interpolation, additive relevance
//! above the 0.95 column quantile, joint normalization, marginal entropy and
//! pairwise smoothed KL divergence (both base 2).

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sensemaker_core::embedmetrics::{
    cosine, coverage_score, diversity_score, joint_distribution, quantile, relevance_matrix,
    relevance_score, score_question_set, segment_windows, EmbedConfig, EmbeddingProvider,
    RelevanceModel, TeacherScore,
};
use sensemaker_core::provider::ProviderError;

const TOL: f64 = 1e-9;
const EPSILON: f64 = 1e-9;

// ---------------------------------------------------------------- oracle ---

fn oracle_cosine(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nx * ny)
}

fn oracle_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 1 {
        return v[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

struct OracleOutput {
    relevance: Vec<Vec<f64>>,
    degenerate: bool,
    scores: TeacherScore,
}

fn oracle_pipeline(q_emb: &[Vec<f64>], w_emb: &[Vec<f64>], epsilon: f64) -> OracleOutput {
    let nq = q_emb.len();
    let nw = w_emb.len();
    let mut sims = vec![vec![0.0; nw]; nq];
    for (qi, q) in q_emb.iter().enumerate() {
        for (wi, w) in w_emb.iter().enumerate() {
            sims[qi][wi] = oracle_cosine(q, w);
        }
    }
    // additive relevance gated on the per-window column quantile; gated
    // values clamp at zero so the matrix stays a valid unnormalized
    // distribution even when a column is mostly negative
    let mut rel = vec![vec![0.0; nw]; nq];
    for wi in 0..nw {
        let column: Vec<f64> = (0..nq).map(|qi| sims[qi][wi]).collect();
        let q50 = oracle_quantile(&column, 0.5);
        let q95 = oracle_quantile(&column, 0.95);
        for qi in 0..nq {
            if sims[qi][wi] > q95 {
                rel[qi][wi] = (sims[qi][wi] + q50).max(0.0);
            }
        }
    }
    let total: f64 = rel.iter().flatten().sum();
    if total == 0.0 {
        return OracleOutput {
            relevance: rel,
            degenerate: true,
            scores: TeacherScore { relevance: 0.0, coverage: 0.0, diversity: 0.0 },
        };
    }
    let joint: Vec<Vec<f64>> =
        rel.iter().map(|row| row.iter().map(|v| v / total).collect()).collect();
    // coverage: entropy of the window marginal
    let mut marginal = vec![0.0; nw];
    for row in &joint {
        for (wi, v) in row.iter().enumerate() {
            marginal[wi] += v;
        }
    }
    let coverage: f64 = -marginal
        .iter()
        .filter(|&&m| m > 0.0)
        .map(|&m| m * m.log2())
        .sum::<f64>();
    // diversity: sum of pairwise KL between smoothed per-question conditionals
    let mut conds: Vec<Vec<f64>> = Vec::with_capacity(nq);
    for row in &joint {
        let s: f64 = row.iter().sum();
        let base: Vec<f64> = if s == 0.0 {
            vec![1.0 / nw as f64; nw]
        } else {
            row.iter().map(|v| v / s).collect()
        };
        let smoothed_sum: f64 = base.iter().map(|v| v + epsilon).sum();
        conds.push(base.iter().map(|v| (v + epsilon) / smoothed_sum).collect());
    }
    let mut diversity = 0.0;
    for a in &conds {
        for b in &conds {
            let kl: f64 = a
                .iter()
                .zip(b)
                .filter(|(pa, _)| **pa > 0.0)
                .map(|(pa, pb)| pa * (pa / pb).log2())
                .sum();
            diversity += kl;
        }
    }
    OracleOutput {
        relevance: rel,
        degenerate: false,
        scores: TeacherScore { relevance: total, coverage, diversity },
    }
}

// ------------------------------------------------------------- providers ---

struct TableEmbedder {
    table: HashMap<String, Vec<f64>>,
}

impl EmbeddingProvider for TableEmbedder {
    fn model_id(&self) -> &str {
        "table"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        texts
            .iter()
            .map(|t| {
                self.table
                    .get(t)
                    .cloned()
                    .ok_or_else(|| ProviderError::Parse(format!("no stub vector for {t:?}")))
            })
            .collect()
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ----------------------------------------------------------- frozen cases ---

#[test]
fn window_positions_for_ten_tokens() {
    let text = "t0 t1 t2 t3 t4 t5 t6 t7 t8 t9";
    let ws = segment_windows(text, 4, 2).unwrap();
    let spans: Vec<(usize, usize)> =
        ws.windows.iter().map(|w| (w.start_token, w.end_token)).collect();
    assert_eq!(spans, vec![(0, 4), (2, 6), (4, 8), (6, 10)]);
    assert_eq!(ws.windows[1].text, "t2 t3 t4 t5");
}

#[test]
fn last_window_is_anchored_to_the_text_end() {
    let text = "a b c d e f g h i j k"; // 11 tokens
    let ws = segment_windows(text, 4, 2).unwrap();
    let last = ws.windows.last().unwrap();
    assert_eq!((last.start_token, last.end_token), (7, 11));
    // every token covered
    let mut covered = vec![false; 11];
    for w in &ws.windows {
        for c in covered.iter_mut().take(w.end_token).skip(w.start_token) {
            *c = true;
        }
    }
    assert!(covered.iter().all(|&c| c));
}

#[test]
fn short_text_yields_a_single_window() {
    let ws = segment_windows("only three tokens", 10, 5).unwrap();
    assert_eq!(ws.windows.len(), 1);
    assert_eq!((ws.windows[0].start_token, ws.windows[0].end_token), (0, 3));
}

#[test]
fn segment_windows_rejects_bad_arguments() {
    assert!(segment_windows("a b", 0, 1).is_err());
    assert!(segment_windows("a b", 4, 0).is_err());
    assert!(segment_windows("a b", 4, 5).is_err());
    assert!(segment_windows("   ", 4, 2).is_err());
}

#[test]
fn cosine_of_known_vectors() {
    let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
    assert!(close(c, std::f64::consts::FRAC_1_SQRT_2, 1e-12));
    assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
}

#[test]
fn quantiles_interpolate_between_order_statistics() {
    let vals = [0.1, 0.2, 0.9];
    assert!(close(quantile(&vals, 0.5).unwrap(), 0.2, TOL));
    assert!(close(quantile(&vals, 0.95).unwrap(), 0.83, TOL));
    assert!(close(quantile(&[7.0], 0.95).unwrap(), 7.0, TOL));
    assert!(quantile(&[], 0.5).is_err());
}

#[test]
fn relevance_gate_passes_only_above_the_high_quantile() {
    // one window, three questions: column is [0.1, 0.2, 0.9]
    let sims = vec![vec![0.1], vec![0.2], vec![0.9]];
    let rel = relevance_matrix(&sims).unwrap();
    assert!(close(rel[0][0], 0.0, TOL));
    assert!(close(rel[1][0], 0.0, TOL));
    assert!(close(rel[2][0], 1.1, TOL)); // 0.9 + median 0.2
}

#[test]
fn joint_distribution_normalizes_and_flags_degeneracy() {
    let (joint, degenerate) = joint_distribution(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
    assert!(!degenerate);
    assert!(close(joint[0][0], 0.5, TOL));
    assert!(close(joint[0][1], 0.0, TOL));
    assert!(close(joint[1][1], 0.5, TOL));

    let (_, degenerate) = joint_distribution(&[vec![0.0, 0.0]]).unwrap();
    assert!(degenerate);
}

#[test]
fn relevance_score_sums_the_matrix() {
    assert!(close(relevance_score(&[vec![1.1, 0.0], vec![0.0, 0.9]]), 2.0, TOL));
}

#[test]
fn coverage_is_the_entropy_of_the_window_marginal() {
    let joint = vec![vec![0.5, 0.25, 0.25]];
    assert!(close(coverage_score(&joint).unwrap(), 1.5, TOL));
}

#[test]
fn diversity_of_two_opposed_rows() {
    // conditionals [0.9, 0.1] and [0.1, 0.9]; both ordered cross pairs
    let joint = vec![vec![0.45, 0.05], vec![0.05, 0.45]];
    let expected = 2.0 * (0.9_f64 * 9.0_f64.log2() + 0.1 * (1.0_f64 / 9.0).log2());
    let got = diversity_score(&joint, EPSILON).unwrap();
    assert!(close(got, expected, 1e-6), "got {got}, expected {expected}");
}

#[test]
fn identical_rows_have_zero_diversity() {
    let joint = vec![vec![0.2, 0.3], vec![0.2, 0.3]];
    assert!(close(diversity_score(&joint, EPSILON).unwrap(), 0.0, TOL));
}

#[test]
fn orthonormal_alignment_scores_through_the_full_path() {
    // three questions, three non-overlapping windows, each pair aligned on
    // its own basis vector
    let text = "w0a w0b w1a w1b w2a w2b";
    let questions = vec!["q0".to_string(), "q1".to_string(), "q2".to_string()];
    let mut table = HashMap::new();
    table.insert("w0a w0b".to_string(), vec![1.0, 0.0, 0.0]);
    table.insert("w1a w1b".to_string(), vec![0.0, 1.0, 0.0]);
    table.insert("w2a w2b".to_string(), vec![0.0, 0.0, 1.0]);
    table.insert("q0".to_string(), vec![1.0, 0.0, 0.0]);
    table.insert("q1".to_string(), vec![0.0, 1.0, 0.0]);
    table.insert("q2".to_string(), vec![0.0, 0.0, 1.0]);
    let provider = TableEmbedder { table };
    let cfg = EmbedConfig { window_tokens: 2, stride_tokens: 2, epsilon: EPSILON };
    let score = score_question_set(text, &questions, &provider, &cfg).unwrap();
    assert!(close(score.relevance, 3.0, TOL));
    assert!(close(score.coverage, 3.0_f64.log2(), TOL));
    assert!(score.diversity > 0.0);
}

#[test]
fn empty_question_set_scores_zero_without_provider_calls() {
    struct Panicking;
    impl EmbeddingProvider for Panicking {
        fn model_id(&self) -> &str {
            "panicking"
        }
        fn embed(&self, _texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
            panic!("must not be called for an empty question set");
        }
    }
    let cfg = EmbedConfig::default();
    let score = score_question_set("some material text", &[], &Panicking, &cfg).unwrap();
    assert_eq!(score, TeacherScore { relevance: 0.0, coverage: 0.0, diversity: 0.0 });
}

// ------------------------------------------------------ randomized oracle ---

fn random_unit_free_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if v.iter().map(|a| a * a).sum::<f64>().sqrt() > 1e-3 {
            return v;
        }
    }
}

#[test]
fn randomized_equivalence_with_direct_definition_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut degenerate_seen = 0usize;
    for case in 0..300 {
        let nq = rng.gen_range(1..=4);
        let nw = rng.gen_range(1..=4);
        let dim = rng.gen_range(2..=5);
        let use_basis = case % 5 == 0;
        let embed = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            if use_basis {
                let mut v = vec![0.0; dim];
                v[rng.gen_range(0..dim)] = 1.0;
                v
            } else {
                random_unit_free_vector(rng, dim)
            }
        };
        let q_emb: Vec<Vec<f64>> = (0..nq).map(|_| embed(&mut rng)).collect();
        let w_emb: Vec<Vec<f64>> = (0..nw).map(|_| embed(&mut rng)).collect();

        let model = RelevanceModel::build(q_emb.clone(), w_emb.clone(), EPSILON).unwrap();
        let oracle = oracle_pipeline(&q_emb, &w_emb, EPSILON);

        assert_eq!(model.degenerate, oracle.degenerate, "case {case}: degeneracy disagreement");
        for qi in 0..nq {
            for wi in 0..nw {
                assert!(
                    close(model.relevance[qi][wi], oracle.relevance[qi][wi], TOL),
                    "case {case}: relevance[{qi}][{wi}] {} vs {}",
                    model.relevance[qi][wi],
                    oracle.relevance[qi][wi]
                );
            }
        }
        let scores = model.scores();
        assert!(close(scores.relevance, oracle.scores.relevance, TOL), "case {case}: relevance");
        assert!(close(scores.coverage, oracle.scores.coverage, TOL), "case {case}: coverage");
        assert!(close(scores.diversity, oracle.scores.diversity, TOL), "case {case}: diversity");
        if oracle.degenerate {
            degenerate_seen += 1;
        }
    }
    // single-question sets always gate themselves out, so both paths must
    // agree on a healthy number of degenerate cases
    assert!(degenerate_seen > 0);
}
