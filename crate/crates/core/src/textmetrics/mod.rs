//! Formulaic string-overlap baselines: BLEU, ROUGE-N, ROUGE-L and METEOR.

mod meteor;
pub mod porter;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::SynonymLookup;
use crate::embedder::format_pair;

pub use meteor::{meteor, meteor_with, MeteorAlignment, MeteorParams};

/// Ordered lowercase word tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence(pub Vec<String>);

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    /// Builds a sequence from already-tokenized words (lowercased, empties dropped).
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        TokenSequence(
            words
                .into_iter()
                .map(|w| w.as_ref().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    fn ngrams(&self, n: usize) -> HashMap<&[String], usize> {
        let mut counts = HashMap::new();
        if n == 0 || self.0.len() < n {
            return counts;
        }
        for window in self.0.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
        counts
    }
}

/// Lowercases and splits into maximal alphanumeric runs; punctuation is dropped.
pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence(
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RougeMode {
    Recall,
    Precision,
    #[default]
    F1,
}

impl fmt::Display for RougeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RougeMode::Recall => "recall",
            RougeMode::Precision => "precision",
            RougeMode::F1 => "f1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub rouge_mode: RougeMode,
    pub meteor: MeteorParams,
    /// Prefix both sides with the question via the `Question: .. Answer: ..` template.
    pub concat_question: bool,
    /// Epsilon added to zero n-gram matches in BLEU; `None` disables smoothing.
    pub bleu_smoothing: Option<f64>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            rouge_mode: RougeMode::F1,
            meteor: MeteorParams::default(),
            concat_question: true,
            bleu_smoothing: None,
        }
    }
}

pub const MAX_NGRAM_ORDER: usize = 8;

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Clipped n-gram matches and the candidate n-gram total.
fn clipped_matches(candidate: &TokenSequence, reference: &TokenSequence, n: usize) -> (usize, usize) {
    let cand = candidate.ngrams(n);
    let refs = reference.ngrams(n);
    let total = cand.values().sum();
    let matched = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, total)
}

/// Sentence BLEU with uniform weights over orders `1..=max_n`, no smoothing.
pub fn bleu(candidate: &TokenSequence, reference: &TokenSequence, max_n: usize) -> f64 {
    bleu_smoothed(candidate, reference, max_n, None)
}

/// Sentence BLEU. With `smoothing = Some(eps)`, a zero match count at some order
/// is replaced by `eps` instead of zeroing the score.
pub fn bleu_smoothed(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    max_n: usize,
    smoothing: Option<f64>,
) -> f64 {
    assert!(max_n >= 1, "BLEU order must be at least 1");
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (matched, total) = clipped_matches(candidate, reference, n);
        if total == 0 {
            return 0.0;
        }
        let p = if matched == 0 {
            match smoothing {
                Some(eps) => eps / total as f64,
                None => return 0.0,
            }
        } else {
            matched as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * (log_sum / max_n as f64).exp()
}

/// ROUGE-N over n-gram overlap counts.
pub fn rouge_n(candidate: &TokenSequence, reference: &TokenSequence, n: usize, mode: RougeMode) -> f64 {
    assert!(n >= 1, "ROUGE order must be at least 1");
    let (overlap, cand_total) = clipped_matches(candidate, reference, n);
    let ref_total: usize = reference.ngrams(n).values().sum();
    if ref_total == 0 {
        return 0.0;
    }
    let recall = overlap as f64 / ref_total as f64;
    let precision = if cand_total == 0 {
        0.0
    } else {
        overlap as f64 / cand_total as f64
    };
    match mode {
        RougeMode::Recall => recall,
        RougeMode::Precision => precision,
        RougeMode::F1 => harmonic(precision, recall),
    }
}

/// Length of the longest common subsequence (standard O(nm) DP, two rows).
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence, mode: RougeMode) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(candidate.tokens(), reference.tokens()) as f64;
    let recall = l / reference.len() as f64;
    let precision = l / candidate.len() as f64;
    match mode {
        RougeMode::Recall => recall,
        RougeMode::Precision => precision,
        RougeMode::F1 => harmonic(precision, recall),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FormulaicMetric {
    #[serde(rename = "bleu2")]
    Bleu2,
    #[serde(rename = "bleu4")]
    Bleu4,
    #[serde(rename = "rouge2")]
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
    #[serde(rename = "meteor")]
    Meteor,
}

impl FormulaicMetric {
    pub const ALL: [FormulaicMetric; 5] = [
        FormulaicMetric::Bleu2,
        FormulaicMetric::Bleu4,
        FormulaicMetric::Rouge2,
        FormulaicMetric::RougeL,
        FormulaicMetric::Meteor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FormulaicMetric::Bleu2 => "bleu2",
            FormulaicMetric::Bleu4 => "bleu4",
            FormulaicMetric::Rouge2 => "rouge2",
            FormulaicMetric::RougeL => "rougeL",
            FormulaicMetric::Meteor => "meteor",
        }
    }
}

impl fmt::Display for FormulaicMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unknown metric `{0}` (expected one of bleu2, bleu4, rouge2, rougeL, meteor)")]
pub struct UnknownMetric(pub String);

impl FromStr for FormulaicMetric {
    type Err = UnknownMetric;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FormulaicMetric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownMetric(s.to_string()))
    }
}

/// A metric value with a flag set when one side tokenized to nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scored {
    pub value: f64,
    pub empty_input: bool,
}

/// Scores a response against the ground-truth answer with a formulaic metric.
pub fn formulaic_score(
    question: &str,
    answer: &str,
    response: &str,
    metric: FormulaicMetric,
    config: &MetricConfig,
    synonyms: &SynonymLookup,
) -> Scored {
    let (candidate, reference) = if config.concat_question {
        (
            tokenize(&format_pair(question, response)),
            tokenize(&format_pair(question, answer)),
        )
    } else {
        (tokenize(response), tokenize(answer))
    };
    let empty_input = candidate.is_empty() || reference.is_empty();
    let value = match metric {
        FormulaicMetric::Bleu2 => bleu_smoothed(&candidate, &reference, 2, config.bleu_smoothing),
        FormulaicMetric::Bleu4 => bleu_smoothed(&candidate, &reference, 4, config.bleu_smoothing),
        FormulaicMetric::Rouge2 => rouge_n(&candidate, &reference, 2, config.rouge_mode),
        FormulaicMetric::RougeL => rouge_l(&candidate, &reference, config.rouge_mode),
        FormulaicMetric::Meteor => meteor_with(&candidate, &reference, synonyms, &config.meteor),
    };
    if empty_input {
        log::warn!("{metric}: empty candidate or reference, scored 0");
    }
    Scored { value, empty_input }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(words: &[&str]) -> TokenSequence {
        TokenSequence::from_words(words)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("The answer is elephants."),
            seq(&["the", "answer", "is", "elephants"])
        );
        assert_eq!(tokenize(""), seq(&[]));
        assert_eq!(tokenize("letter j"), seq(&["letter", "j"]));
        assert_eq!(tokenize("  ,;! "), seq(&[]));
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let s = seq(&["a", "red", "car"]);
        assert_eq!(bleu(&s, &s, 2), 1.0);
        assert_eq!(bleu(&s, &seq(&["blue", "bus"]), 2), 0.0);
    }

    #[test]
    fn bleu_hand_computed_pair() {
        // p1 = 2/3, p2 = 1/2, BP = 1 -> sqrt(1/3)
        let v = bleu(&seq(&["the", "cat", "sat"]), &seq(&["the", "cat", "ran"]), 2);
        assert!((v - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bleu_brevity_penalty() {
        // p1 = 1, p2 = 1, c = 2, r = 4 -> exp(1 - 2)
        let v = bleu(&seq(&["a", "b"]), &seq(&["a", "b", "c", "d"]), 2);
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn bleu_clips_repeated_candidate_tokens() {
        // "the the the" vs "the cat": p1 = 1/3
        let v = bleu(&seq(&["the", "the", "the"]), &seq(&["the", "cat"]), 1);
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_empty_and_short_candidate() {
        assert_eq!(bleu(&seq(&[]), &seq(&["a"]), 2), 0.0);
        assert_eq!(bleu(&seq(&["a"]), &seq(&[]), 2), 0.0);
        // no bigrams in a one-token candidate
        assert_eq!(bleu(&seq(&["a"]), &seq(&["a"]), 2), 0.0);
    }

    #[test]
    fn bleu_smoothing_keeps_score_positive() {
        let v = bleu_smoothed(&seq(&["the", "dog", "sat"]), &seq(&["the", "cat", "ran"]), 2, Some(0.1));
        assert!(v > 0.0);
        assert_eq!(bleu(&seq(&["the", "dog", "sat"]), &seq(&["the", "cat", "ran"]), 2), 0.0);
    }

    #[test]
    fn rouge_n_examples() {
        let s = seq(&["a", "b", "c"]);
        assert_eq!(rouge_n(&s, &s, 2, RougeMode::Recall), 1.0);
        assert_eq!(rouge_n(&s, &s, 2, RougeMode::F1), 1.0);
        let v = rouge_n(&seq(&["a", "b"]), &seq(&["a", "b", "c"]), 1, RougeMode::Recall);
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rouge_n(&s, &seq(&["a"]), 2, RougeMode::F1), 0.0);
    }

    #[test]
    fn rouge_l_examples() {
        let cand = seq(&["a", "x", "b", "y"]);
        let reference = seq(&["a", "b"]);
        assert_eq!(lcs_len(cand.tokens(), reference.tokens()), 2);
        assert_eq!(rouge_l(&cand, &reference, RougeMode::Recall), 1.0);
        assert_eq!(rouge_l(&cand, &reference, RougeMode::Precision), 0.5);
        assert!((rouge_l(&cand, &reference, RougeMode::F1) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge_l(&cand, &seq(&["q"]), RougeMode::F1), 0.0);
        assert_eq!(rouge_l(&seq(&[]), &reference, RougeMode::F1), 0.0);
    }

    #[test]
    fn formulaic_concatenation_rules() {
        let lex = SynonymLookup::default();
        let cfg = MetricConfig::default();
        let s = formulaic_score("What is it?", "cat", "cat", FormulaicMetric::Bleu2, &cfg, &lex);
        assert_eq!(s.value, 1.0);

        let q = "What kind of animal is standing next to the tall tree in the picture?";
        let v = formulaic_score(q, "giraffe", "zebra", FormulaicMetric::RougeL, &cfg, &lex).value;
        // 17 tokens per side, all but the answer word shared in order
        assert!((v - 16.0 / 17.0).abs() < 1e-12);

        let off = MetricConfig {
            concat_question: false,
            ..MetricConfig::default()
        };
        for m in FormulaicMetric::ALL {
            assert_eq!(formulaic_score(q, "giraffe", "zebra", m, &off, &lex).value, 0.0);
        }
        let empty = formulaic_score("", "", "x", FormulaicMetric::Bleu2, &off, &lex);
        assert!(empty.empty_input);
    }

    #[test]
    fn metric_names_parse() {
        assert_eq!("rougeL".parse::<FormulaicMetric>(), Ok(FormulaicMetric::RougeL));
        assert_eq!("BLEU4".parse::<FormulaicMetric>(), Ok(FormulaicMetric::Bleu4));
        assert!("bertscore".parse::<FormulaicMetric>().is_err());
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..12)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn scores_lie_in_unit_interval(c in words(), r in words()) {
            let (c, r) = (TokenSequence(c), TokenSequence(r));
            let lex = SynonymLookup::default();
            for v in [
                bleu(&c, &r, 2),
                bleu(&c, &r, 4),
                rouge_n(&c, &r, 2, RougeMode::F1),
                rouge_n(&c, &r, 1, RougeMode::Recall),
                rouge_l(&c, &r, RougeMode::F1),
                meteor(&c, &r, &lex),
            ] {
                prop_assert!((0.0..=1.0).contains(&v), "value {v}");
            }
        }

        #[test]
        fn identical_inputs_score_maximum(c in words()) {
            prop_assume!(c.len() >= 4);
            let c = TokenSequence(c);
            prop_assert!((bleu(&c, &c, 4) - 1.0).abs() < 1e-12);
            prop_assert_eq!(rouge_n(&c, &c, 2, RougeMode::F1), 1.0);
            prop_assert_eq!(rouge_l(&c, &c, RougeMode::F1), 1.0);
        }

        #[test]
        fn rouge_l_swap_exchanges_precision_and_recall(c in words(), r in words()) {
            let (c, r) = (TokenSequence(c), TokenSequence(r));
            prop_assert_eq!(rouge_l(&c, &r, RougeMode::Recall), rouge_l(&r, &c, RougeMode::Precision));
            prop_assert_eq!(rouge_l(&c, &r, RougeMode::F1), rouge_l(&r, &c, RougeMode::F1));
        }

        #[test]
        fn unigram_precision_is_clipped(c in words(), r in words()) {
            let (c, r) = (TokenSequence(c), TokenSequence(r));
            let (matched, total) = clipped_matches(&c, &r, 1);
            prop_assert!(matched <= total);
            let mut distinct = c.tokens().to_vec();
            distinct.sort();
            distinct.dedup();
            let expected: usize = distinct
                .iter()
                .map(|tok| {
                    let in_c = c.tokens().iter().filter(|t| *t == tok).count();
                    let in_r = r.tokens().iter().filter(|t| *t == tok).count();
                    in_c.min(in_r)
                })
                .sum();
            prop_assert_eq!(matched, expected);
        }
    }
}
