//! Seeded fixture generators shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vqaeval::augment::{TaskTag, TrainingPair};

const WORDS: [&str; 24] = [
    "a", "the", "dog", "cat", "red", "blue", "table", "cup", "two", "three", "man", "woman", "holding", "sitting",
    "on", "under", "green", "apple", "bread", "plate", "small", "large", "white", "car",
];

pub fn sentence(rng: &mut impl Rng, len: usize) -> String {
    (0..len)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// `n` (candidate, reference) sentence pairs of the given length.
pub fn sentence_pairs(seed: u64, n: usize, len: usize) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (sentence(&mut rng, len), sentence(&mut rng, len)))
        .collect()
}

/// Random score vectors with roughly 30% ties.
pub fn score_vectors(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = || {
        (0..n)
            .map(|_| f64::from(rng.random_range(0..(n as u32 * 7 / 10).max(1))))
            .collect()
    };
    (v(), v())
}

pub fn training_pairs(seed: u64, n: usize) -> Vec<TrainingPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| TrainingPair {
            anchor: sentence(&mut rng, 6),
            positive: sentence(&mut rng, 6),
            hard_negative: sentence(&mut rng, 6),
            task_tag: TaskTag::Candidates,
        })
        .collect()
}
