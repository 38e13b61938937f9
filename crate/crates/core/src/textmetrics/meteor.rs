use serde::{Deserialize, Serialize};

use super::porter::stem;
use super::TokenSequence;
use crate::augment::SynonymLookup;

/// METEOR weights: `alpha` balances precision against recall in F_mean,
/// `gamma` scales the fragmentation penalty and `beta` is its exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeteorParams {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl Default for MeteorParams {
    /// F_mean = 10PR/(R+9P), penalty = 0.5·(chunks/matches)³.
    fn default() -> Self {
        Self {
            alpha: 0.9,
            gamma: 0.5,
            beta: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Exact,
    Stem,
    Synonym,
}

/// Unigram alignment between candidate and reference positions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MeteorAlignment {
    /// `(candidate index, reference index)` sorted by candidate index.
    pub pairs: Vec<(usize, usize)>,
    pub chunks: usize,
}

impl MeteorAlignment {
    /// Staged greedy alignment: exact, then Porter stem, then synonym matches.
    /// Each stage only considers words left unmatched by earlier stages, and
    /// candidate words are matched left to right to the first free reference word.
    pub fn compute(candidate: &TokenSequence, reference: &TokenSequence, synonyms: &SynonymLookup) -> Self {
        let cand = candidate.tokens();
        let refs = reference.tokens();
        let cand_stems: Vec<String> = cand.iter().map(|w| stem(w)).collect();
        let ref_stems: Vec<String> = refs.iter().map(|w| stem(w)).collect();
        let mut cand_used = vec![false; cand.len()];
        let mut ref_used = vec![false; refs.len()];
        let mut pairs = Vec::new();

        for stage in [Stage::Exact, Stage::Stem, Stage::Synonym] {
            for i in 0..cand.len() {
                if cand_used[i] {
                    continue;
                }
                let hit = (0..refs.len()).find(|&j| {
                    !ref_used[j]
                        && match stage {
                            Stage::Exact => cand[i] == refs[j],
                            Stage::Stem => cand_stems[i] == ref_stems[j],
                            Stage::Synonym => synonyms.are_synonyms(&cand[i], &refs[j]),
                        }
                });
                if let Some(j) = hit {
                    cand_used[i] = true;
                    ref_used[j] = true;
                    pairs.push((i, j));
                }
            }
        }
        pairs.sort_unstable();
        let chunks = count_chunks(&pairs);
        Self { pairs, chunks }
    }

    pub fn matches(&self) -> usize {
        self.pairs.len()
    }
}

/// Runs of matches adjacent in both candidate and reference.
fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

pub fn meteor(candidate: &TokenSequence, reference: &TokenSequence, synonyms: &SynonymLookup) -> f64 {
    meteor_with(candidate, reference, synonyms, &MeteorParams::default())
}

pub fn meteor_with(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    synonyms: &SynonymLookup,
    params: &MeteorParams,
) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let alignment = MeteorAlignment::compute(candidate, reference, synonyms);
    let m = alignment.matches();
    if m == 0 {
        return 0.0;
    }
    let precision = m as f64 / candidate.len() as f64;
    let recall = m as f64 / reference.len() as f64;
    let f_mean = precision * recall / (params.alpha * precision + (1.0 - params.alpha) * recall);
    let frag = alignment.chunks as f64 / m as f64;
    let penalty = params.gamma * frag.powf(params.beta);
    f_mean * (1.0 - penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::SynonymLookup;

    fn seq(words: &[&str]) -> TokenSequence {
        TokenSequence::from_words(words)
    }

    #[test]
    fn single_identical_token_is_half() {
        let lex = SynonymLookup::default();
        let v = meteor(&seq(&["cat"]), &seq(&["cat"]), &lex);
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_matches_is_zero() {
        let lex = SynonymLookup::default();
        assert_eq!(meteor(&seq(&["dog"]), &seq(&["cat"]), &lex), 0.0);
        assert_eq!(meteor(&seq(&[]), &seq(&["cat"]), &lex), 0.0);
    }

    #[test]
    fn stem_stage_matches_plural() {
        let lex = SynonymLookup::default();
        let identical = meteor(&seq(&["cat"]), &seq(&["cat"]), &lex);
        let stemmed = meteor(&seq(&["cats"]), &seq(&["cat"]), &lex);
        assert_eq!(stemmed, identical);
    }

    #[test]
    fn synonym_stage_uses_lookup() {
        let mut lex = SynonymLookup::default();
        lex.add_synset(&["big", "large"]);
        let v = meteor(&seq(&["large"]), &seq(&["big"]), &lex);
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(meteor(&seq(&["large"]), &seq(&["big"]), &SynonymLookup::default()), 0.0);
    }

    #[test]
    fn hand_evaluated_fragmented_alignment() {
        // cand: the cat sat on mat, ref: on the mat sat the cat
        // exact greedy: the->1, cat->5, sat->3, on->0, mat->2; sorted by cand:
        // (0,1) (1,5) (2,3) (3,0) (4,2) -> 5 chunks, m = 5
        let lex = SynonymLookup::default();
        let c = seq(&["the", "cat", "sat", "on", "mat"]);
        let r = seq(&["on", "the", "mat", "sat", "the", "cat"]);
        let a = MeteorAlignment::compute(&c, &r, &lex);
        assert_eq!(a.pairs, vec![(0, 1), (1, 5), (2, 3), (3, 0), (4, 2)]);
        assert_eq!(a.chunks, 5);
        let p = 5.0 / 5.0;
        let rc = 5.0 / 6.0;
        let f = 10.0 * p * rc / (rc + 9.0 * p);
        let expected = f * (1.0 - 0.5);
        assert!((meteor(&c, &r, &lex) - expected).abs() < 1e-12);
    }

    #[test]
    fn contiguous_match_is_one_chunk() {
        let lex = SynonymLookup::default();
        let s = seq(&["a", "b", "c", "d"]);
        let a = MeteorAlignment::compute(&s, &s, &lex);
        assert_eq!(a.chunks, 1);
        let expected = 1.0 - 0.5 * (0.25f64).powi(3);
        assert!((meteor(&s, &s, &lex) - expected).abs() < 1e-12);
    }
}
