//! Synthetic training-corpus generation: code-switched text from a weighted
//! bilingual dictionary, MLM mask plans with the 80/10/10 replacement split,
//! and gold+silver dataset combination.
//!
//! Everything is driven by a [`SeedRng`]; identical seeds and inputs yield
//! byte-identical outputs.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::types::{AnnotatedSentence, WeightedDictionary};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("replacement probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("batch cap must lie in (0, 1], got {0}")]
    InvalidCap(f64),
    #[error("mask rate must lie in (0, 1), got {0}")]
    InvalidRate(f64),
    #[error("token `{0}` has no count for rare-favoring selection")]
    MissingCount(String),
    #[error("token `{0}` has a zero count; rare-favoring weights are undefined")]
    ZeroCount(String),
    #[error("replacement vocabulary is empty")]
    EmptyVocabulary,
    #[error("annotation schema mismatch: {0}")]
    SchemaMismatch(String),
}

/// Deterministic, splittable random source. The generator algorithm is
/// fixed; the same seed always produces the same stream.
#[derive(Debug, Clone)]
pub struct SeedRng {
    inner: ChaCha8Rng,
}

impl SeedRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Derives an independent child generator, advancing this one.
    pub fn split(&mut self) -> SeedRng {
        SeedRng::new(self.inner.gen())
    }
}

impl RngCore for SeedRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Outcome of one code-switching pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSwitchOutput {
    pub sentences: Vec<Vec<String>>,
    /// Replacements actually applied.
    pub replaced: usize,
    /// Replacements suppressed by the batch cap.
    pub suppressed: usize,
    /// Tokens found in the dictionary.
    pub dictionary_tokens: usize,
}

/// Replaces dictionary words with translations sampled proportionally to
/// their weights. Each dictionary word is replaced independently with
/// probability `p_replace`; once `floor(cap * batch token count)`
/// replacements have been applied, later candidates are kept as-is.
/// Non-dictionary tokens are never touched.
pub fn codeswitch(
    sentences: &[Vec<String>],
    dict: &WeightedDictionary,
    rng: &mut SeedRng,
    p_replace: f64,
    cap: f64,
) -> Result<CodeSwitchOutput, SynthesisError> {
    if !(0.0..=1.0).contains(&p_replace) || !p_replace.is_finite() {
        return Err(SynthesisError::InvalidProbability(p_replace));
    }
    if !(cap > 0.0 && cap <= 1.0) {
        return Err(SynthesisError::InvalidCap(cap));
    }
    let total_tokens: usize = sentences.iter().map(Vec::len).sum();
    let budget = (cap * total_tokens as f64).floor() as usize;

    let mut out = sentences.to_vec();
    let mut replaced = 0usize;
    let mut suppressed = 0usize;
    let mut dictionary_tokens = 0usize;
    for sentence in &mut out {
        for token in sentence.iter_mut() {
            let Some(translations) = dict.translations(token) else {
                continue;
            };
            dictionary_tokens += 1;
            if !rng.gen_bool(p_replace) {
                continue;
            }
            if replaced >= budget {
                suppressed += 1;
                continue;
            }
            let weights = translations.iter().map(|(_, w)| *w);
            let index = WeightedIndex::new(weights)
                .expect("dictionary invariant: weights non-negative, not all zero")
                .sample(rng);
            *token = translations[index].0.clone();
            replaced += 1;
        }
    }
    Ok(CodeSwitchOutput {
        sentences: out,
        replaced,
        suppressed,
        dictionary_tokens,
    })
}

/// Per-token action in a mask plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaskAction {
    Keep,
    /// Replace with the mask token.
    Mask,
    /// Keep the original token (still predicted).
    Original,
    /// Replace with a token drawn uniformly from the vocabulary.
    Random(String),
}

impl MaskAction {
    pub fn name(&self) -> &'static str {
        match self {
            MaskAction::Keep => "keep",
            MaskAction::Mask => "mask",
            MaskAction::Original => "original",
            MaskAction::Random(_) => "random",
        }
    }
}

/// A masking plan: one action per token plus the set of indices selected
/// for prediction. Actions other than `Keep` appear only on selected
/// indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    pub actions: Vec<MaskAction>,
    pub selected: Vec<usize>,
}

/// Selection scheme for mask indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskScheme {
    /// Uniform without replacement.
    Uniform,
    /// Without replacement, probability proportional to `count^(-0.5)`,
    /// favoring rare tokens.
    RareFavoring,
}

/// Builds an MLM mask plan. Selects `round_half_even(rate * n)` indices via
/// the scheme, then assigns mask/original/random with probabilities
/// 0.8/0.1/0.1; random replacements are drawn uniformly from `vocabulary`.
pub fn mlm_mask(
    tokens: &[String],
    counts: &HashMap<String, u64>,
    vocabulary: &[String],
    rng: &mut SeedRng,
    rate: f64,
    scheme: MaskScheme,
) -> Result<MaskPlan, SynthesisError> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(SynthesisError::InvalidRate(rate));
    }
    if vocabulary.is_empty() {
        return Err(SynthesisError::EmptyVocabulary);
    }
    let n = tokens.len();
    let m = (rate * n as f64).round_ties_even() as usize;

    let picked: Vec<usize> = match scheme {
        MaskScheme::Uniform => rand::seq::index::sample(rng, n, m).into_vec(),
        MaskScheme::RareFavoring => {
            let mut weights = Vec::with_capacity(n);
            for token in tokens {
                let count = counts
                    .get(token)
                    .copied()
                    .ok_or_else(|| SynthesisError::MissingCount(token.clone()))?;
                if count == 0 {
                    return Err(SynthesisError::ZeroCount(token.clone()));
                }
                weights.push((count as f64).powf(-0.5));
            }
            let mut picked = Vec::with_capacity(m);
            for _ in 0..m {
                let dist = WeightedIndex::new(weights.iter().copied())
                    .expect("weights positive while any remain");
                let idx = dist.sample(rng);
                weights[idx] = 0.0;
                picked.push(idx);
            }
            picked
        }
    };

    let mut actions = vec![MaskAction::Keep; n];
    for &idx in &picked {
        let u: f64 = rng.gen();
        actions[idx] = if u < 0.8 {
            MaskAction::Mask
        } else if u < 0.9 {
            MaskAction::Original
        } else {
            let v = rng.gen_range(0..vocabulary.len());
            MaskAction::Random(vocabulary[v].clone())
        };
    }
    let mut selected = picked;
    selected.sort_unstable();
    Ok(MaskPlan { actions, selected })
}

/// Where a sentence came from in a combined corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Gold,
    SilverProjected,
    SilverSelfTrained,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Gold => "gold",
            Provenance::SilverProjected => "silver-projected",
            Provenance::SilverSelfTrained => "silver-selftrained",
        }
    }
}

/// How gold and silver corpora are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineMode {
    Concatenate,
}

fn schema_of(sentence: &AnnotatedSentence) -> [bool; 4] {
    [
        sentence.pos().is_some(),
        sentence.bio().is_some(),
        sentence.heads().is_some(),
        sentence.deprels().is_some(),
    ]
}

fn schema_name(schema: [bool; 4]) -> String {
    let names = ["pos", "bio", "heads", "deprels"];
    let present: Vec<&str> = names
        .iter()
        .zip(schema)
        .filter_map(|(n, p)| p.then_some(*n))
        .collect();
    if present.is_empty() {
        "tokens only".to_string()
    } else {
        present.join("+")
    }
}

/// Concatenates gold and silver corpora, tagging every sentence with its
/// provenance. All sentences must share the same annotation schema.
pub fn combine_gold_silver(
    gold: &[AnnotatedSentence],
    silver: &[AnnotatedSentence],
    silver_provenance: Provenance,
    mode: CombineMode,
) -> Result<Vec<(AnnotatedSentence, Provenance)>, SynthesisError> {
    let CombineMode::Concatenate = mode;
    let reference = gold
        .first()
        .or_else(|| silver.first())
        .map(schema_of)
        .unwrap_or([false; 4]);
    for (corpus, which) in [(gold, "gold"), (silver, "silver")] {
        for sentence in corpus {
            let schema = schema_of(sentence);
            if schema != reference {
                return Err(SynthesisError::SchemaMismatch(format!(
                    "{which} sentence has {}, expected {}",
                    schema_name(schema),
                    schema_name(reference)
                )));
            }
        }
    }
    let mut out = Vec::with_capacity(gold.len() + silver.len());
    out.extend(gold.iter().cloned().map(|s| (s, Provenance::Gold)));
    out.extend(silver.iter().cloned().map(|s| (s, silver_provenance)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict(rows: &[(&str, &str, f64)]) -> WeightedDictionary {
        WeightedDictionary::from_rows(
            rows.iter()
                .map(|(s, t, w)| (s.to_string(), t.to_string(), *w)),
        )
        .unwrap()
    }

    fn tokens(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn codeswitch_zero_probability_is_identity() {
        let d = dict(&[("dog", "chien", 1.0)]);
        let sents = vec![tokens(&["the", "dog", "barks"])];
        let mut rng = SeedRng::new(1);
        let out = codeswitch(&sents, &d, &mut rng, 0.0, 0.15).unwrap();
        assert_eq!(out.sentences, sents);
        assert_eq!(out.replaced, 0);
    }

    #[test]
    fn codeswitch_cap_limits_replacements() {
        let d = dict(&[("w", "x", 1.0)]);
        let sents = vec![vec!["w".to_string(); 100]];
        let mut rng = SeedRng::new(2);
        let out = codeswitch(&sents, &d, &mut rng, 1.0, 0.15).unwrap();
        assert_eq!(out.replaced, 15);
        assert_eq!(out.suppressed, 85);
        let switched = out.sentences[0].iter().filter(|t| *t == "x").count();
        assert_eq!(switched, 15);
    }

    #[test]
    fn codeswitch_forced_single_translation() {
        let d = dict(&[("dog", "chien", 0.7)]);
        let sents = vec![tokens(&["dog", "cat", "dog"])];
        let mut rng = SeedRng::new(3);
        let out = codeswitch(&sents, &d, &mut rng, 1.0, 1.0).unwrap();
        assert_eq!(out.sentences[0], tokens(&["chien", "cat", "chien"]));
        assert_eq!(out.dictionary_tokens, 2);
    }

    #[test]
    fn codeswitch_never_moves_non_dictionary_tokens() {
        let d = dict(&[("a", "b", 1.0)]);
        let sents = vec![tokens(&["x", "a", "y", "a", "z"])];
        let mut rng = SeedRng::new(4);
        let out = codeswitch(&sents, &d, &mut rng, 1.0, 1.0).unwrap();
        assert_eq!(out.sentences[0].len(), 5);
        assert_eq!(out.sentences[0][0], "x");
        assert_eq!(out.sentences[0][2], "y");
        assert_eq!(out.sentences[0][4], "z");
    }

    #[test]
    fn codeswitch_is_deterministic() {
        let d = dict(&[("dog", "chien", 0.9), ("dog", "chienne", 0.1)]);
        let sents = vec![tokens(&["dog"; 50])];
        let a = codeswitch(&sents, &d, &mut SeedRng::new(7), 0.3, 0.5).unwrap();
        let b = codeswitch(&sents, &d, &mut SeedRng::new(7), 0.3, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn codeswitch_empirical_rate_near_p() {
        let d = dict(&[("w", "x", 1.0)]);
        let sents = vec![vec!["w".to_string(); 20_000]];
        let mut rng = SeedRng::new(8);
        let out = codeswitch(&sents, &d, &mut rng, 0.3, 1.0).unwrap();
        let rate = out.replaced as f64 / out.dictionary_tokens as f64;
        assert!((rate - 0.3).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn mask_selects_rounded_count() {
        let toks = tokens(&["t"; 20]);
        let counts = HashMap::from([("t".to_string(), 5u64)]);
        let vocab = tokens(&["a", "b"]);
        let mut rng = SeedRng::new(9);
        let plan = mlm_mask(&toks, &counts, &vocab, &mut rng, 0.15, MaskScheme::Uniform).unwrap();
        assert_eq!(plan.selected.len(), 3);
        let non_keep = plan
            .actions
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != MaskAction::Keep)
            .map(|(i, _)| i)
            .collect::<Vec<_>>();
        assert_eq!(non_keep, plan.selected);
    }

    #[test]
    fn mask_action_split_is_roughly_80_10_10() {
        let toks = tokens(&["t"; 10]);
        let counts = HashMap::from([("t".to_string(), 5u64)]);
        let vocab = tokens(&["a", "b", "c"]);
        let mut rng = SeedRng::new(10);
        let mut histogram = HashMap::new();
        let mut total = 0usize;
        for _ in 0..2_000 {
            let plan =
                mlm_mask(&toks, &counts, &vocab, &mut rng, 0.15, MaskScheme::Uniform).unwrap();
            for idx in &plan.selected {
                *histogram
                    .entry(plan.actions[*idx].name())
                    .or_insert(0usize) += 1;
                total += 1;
            }
        }
        let frac = |name: &str| histogram.get(name).copied().unwrap_or(0) as f64 / total as f64;
        assert!((frac("mask") - 0.8).abs() < 0.02);
        assert!((frac("original") - 0.1).abs() < 0.02);
        assert!((frac("random") - 0.1).abs() < 0.02);
    }

    #[test]
    fn rare_favoring_prefers_rare_tokens() {
        // Weights: 1^-0.5 = 1 vs 10000^-0.5 = 0.01; P(rare) = 100/101.
        let toks = tokens(&["rare", "common"]);
        let counts = HashMap::from([("rare".to_string(), 1u64), ("common".to_string(), 10_000)]);
        let vocab = tokens(&["v"]);
        let mut rng = SeedRng::new(11);
        let mut rare_picked = 0usize;
        let runs = 10_000;
        for _ in 0..runs {
            let plan = mlm_mask(
                &toks,
                &counts,
                &vocab,
                &mut rng,
                0.4,
                MaskScheme::RareFavoring,
            )
            .unwrap();
            assert_eq!(plan.selected.len(), 1);
            if plan.selected[0] == 0 {
                rare_picked += 1;
            }
        }
        let frac = rare_picked as f64 / runs as f64;
        let expected = 100.0 / 101.0;
        assert!((frac - expected).abs() < 0.01, "frac {frac}");
    }

    #[test]
    fn rare_favoring_zero_count_errors() {
        let toks = tokens(&["t"]);
        let counts = HashMap::from([("t".to_string(), 0u64)]);
        let vocab = tokens(&["v"]);
        let mut rng = SeedRng::new(12);
        assert!(matches!(
            mlm_mask(&toks, &counts, &vocab, &mut rng, 0.5, MaskScheme::RareFavoring).unwrap_err(),
            SynthesisError::ZeroCount(_)
        ));
    }

    #[test]
    fn mask_plan_is_deterministic() {
        let toks = tokens(&["a", "b", "c", "d", "e", "f", "g", "h"]);
        let counts: HashMap<String, u64> =
            toks.iter().map(|t| (t.clone(), 3u64)).collect();
        let vocab = tokens(&["x", "y"]);
        let p1 = mlm_mask(
            &toks,
            &counts,
            &vocab,
            &mut SeedRng::new(13),
            0.3,
            MaskScheme::RareFavoring,
        )
        .unwrap();
        let p2 = mlm_mask(
            &toks,
            &counts,
            &vocab,
            &mut SeedRng::new(13),
            0.3,
            MaskScheme::RareFavoring,
        )
        .unwrap();
        assert_eq!(p1, p2);
    }

    fn pos_sentence(words: &[&str]) -> AnnotatedSentence {
        AnnotatedSentence::new(
            tokens(words),
            Some(words.iter().map(|_| Some("X".to_string())).collect()),
            None,
            None,
            None,
        )
        .unwrap()
    }

    fn bio_sentence(words: &[&str]) -> AnnotatedSentence {
        AnnotatedSentence::new(
            tokens(words),
            None,
            Some(words.iter().map(|_| "O".to_string()).collect()),
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn combine_concatenates_in_order() {
        let gold = vec![pos_sentence(&["a"]), pos_sentence(&["b"])];
        let silver = vec![
            pos_sentence(&["c"]),
            pos_sentence(&["d"]),
            pos_sentence(&["e"]),
        ];
        let out = combine_gold_silver(
            &gold,
            &silver,
            Provenance::SilverProjected,
            CombineMode::Concatenate,
        )
        .unwrap();
        assert_eq!(out.len(), 5);
        assert!(out[..2].iter().all(|(_, p)| *p == Provenance::Gold));
        assert!(out[2..]
            .iter()
            .all(|(_, p)| *p == Provenance::SilverProjected));
    }

    #[test]
    fn combine_empty_silver_keeps_gold() {
        let gold = vec![pos_sentence(&["a"])];
        let out = combine_gold_silver(
            &gold,
            &[],
            Provenance::SilverSelfTrained,
            CombineMode::Concatenate,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].1, Provenance::Gold);
    }

    #[test]
    fn combine_rejects_schema_mismatch() {
        let gold = vec![pos_sentence(&["a"])];
        let silver = vec![bio_sentence(&["b"])];
        assert!(matches!(
            combine_gold_silver(
                &gold,
                &silver,
                Provenance::SilverProjected,
                CombineMode::Concatenate
            )
            .unwrap_err(),
            SynthesisError::SchemaMismatch(_)
        ));
    }

    #[test]
    fn split_rngs_are_independent_and_deterministic() {
        let mut a = SeedRng::new(42);
        let mut b = SeedRng::new(42);
        let mut child_a = a.split();
        let mut child_b = b.split();
        assert_eq!(child_a.next_u64(), child_b.next_u64());
        assert_eq!(a.next_u64(), b.next_u64());
    }
}
