//! Training-pair generators for contrastive pretraining and the augmentation
//! stages that turn graded samples into Part 2 and Part 3 variants.
//!
//! Every random choice draws from a per-sample ChaCha8 stream derived from
//! the run seed and the sample id, so output does not depend on sample order
//! or on which other tasks ran.

pub mod descriptions;
mod lexicon;
mod morphology;
mod templates;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedder::format_pair;
use crate::model::{read_jsonl, write_jsonl, Part, Sample};

pub use descriptions::{
    conversion_prompt, describe_pairs, generate_descriptions, parse_descriptions, DescribeReport, DescriptionCache,
    GenError, HttpTextGenerator, TextGenerator,
};
pub use lexicon::{parse_wordnet_data, AntonymPointer, LexiconError, PosSet, SynonymLookup, WordnetSynset};
pub use morphology::{morphology_shift, pluralize, progressive, singularize, MorphRule, MorphShift};
pub use templates::{Template, TemplateSet};

/// Responses with this many words or more are not augmented with descriptions.
pub const LONG_RESPONSE_WORDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskTag {
    Nli,
    Candidates,
    SynonymAntonym,
    Description,
}

impl TaskTag {
    pub const ALL: [TaskTag; 4] = [
        TaskTag::Nli,
        TaskTag::Candidates,
        TaskTag::SynonymAntonym,
        TaskTag::Description,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskTag::Nli => "nli",
            TaskTag::Candidates => "candidates",
            TaskTag::SynonymAntonym => "synonym_antonym",
            TaskTag::Description => "description",
        }
    }
}

impl fmt::Display for TaskTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nli" => Ok(TaskTag::Nli),
            "candidates" => Ok(TaskTag::Candidates),
            "synant" | "synonym_antonym" => Ok(TaskTag::SynonymAntonym),
            "descriptions" | "description" => Ok(TaskTag::Description),
            other => Err(format!(
                "unknown task `{other}` (expected nli, candidates, synant, descriptions)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub anchor: String,
    pub positive: String,
    pub hard_negative: String,
    pub task_tag: TaskTag,
}

/// Why an opportunity produced no pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SkipReason {
    EmptyField,
    AnchorEqualsPositive,
    PositiveEqualsNegative,
    NoCandidates,
    NoLessCommonCandidate,
    NoNegative,
    NoSynonym,
    LongResponse,
    NoDescriptions,
    AnswerNotInDescription,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::EmptyField => "empty_field",
            SkipReason::AnchorEqualsPositive => "anchor_equals_positive",
            SkipReason::PositiveEqualsNegative => "positive_equals_negative",
            SkipReason::NoCandidates => "no_candidates",
            SkipReason::NoLessCommonCandidate => "no_less_common_candidate",
            SkipReason::NoNegative => "no_negative",
            SkipReason::NoSynonym => "no_synonym",
            SkipReason::LongResponse => "long_response",
            SkipReason::NoDescriptions => "no_descriptions",
            SkipReason::AnswerNotInDescription => "answer_not_in_description",
        }
    }
}

impl TrainingPair {
    /// Checks the pair invariants: all texts non-empty, anchor differs from
    /// positive and positive from hard negative.
    pub fn new(anchor: String, positive: String, hard_negative: String, task_tag: TaskTag) -> Result<Self, SkipReason> {
        if [&anchor, &positive, &hard_negative].iter().any(|t| t.trim().is_empty()) {
            return Err(SkipReason::EmptyField);
        }
        if anchor == positive {
            return Err(SkipReason::AnchorEqualsPositive);
        }
        if positive == hard_negative {
            return Err(SkipReason::PositiveEqualsNegative);
        }
        Ok(Self {
            anchor,
            positive,
            hard_negative,
            task_tag,
        })
    }
}

/// Per-task tally; `emitted + skipped == opportunities` always holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: TaskTag,
    pub opportunities: usize,
    pub emitted: usize,
    pub skipped: BTreeMap<String, usize>,
}

impl TaskReport {
    pub fn new(task: TaskTag) -> Self {
        Self {
            task,
            opportunities: 0,
            emitted: 0,
            skipped: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, outcome: Result<TrainingPair, SkipReason>, out: &mut Vec<TrainingPair>) {
        self.opportunities += 1;
        match outcome {
            Ok(p) => {
                self.emitted += 1;
                out.push(p);
            }
            Err(reason) => *self.skipped.entry(reason.as_str().to_string()).or_default() += 1,
        }
    }

    pub fn skipped_total(&self) -> usize {
        self.skipped.values().sum()
    }

    pub fn reconciles(&self) -> bool {
        self.emitted + self.skipped_total() == self.opportunities
    }
}

/// Per-sample random stream: `seed ^ fnv1a(salt, id)`.
pub fn sample_rng(seed: u64, salt: &str, id: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in salt.bytes().chain([0u8]).chain(id.bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

fn key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Sorted, de-duplicated pool of answers that negatives are drawn from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnswerSpace {
    answers: Vec<String>,
}

impl AnswerSpace {
    pub fn new<I, S>(answers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = answers
            .into_iter()
            .map(|a| a.as_ref().trim().to_string())
            .filter(|a| !a.is_empty())
            .collect();
        Self {
            answers: set.into_iter().collect(),
        }
    }

    /// Answers and candidate answers of every sample.
    pub fn from_samples(samples: &[Sample]) -> Self {
        Self::new(
            samples.iter().flat_map(|s| {
                std::iter::once(s.answer.as_str()).chain(s.candidates.iter().flatten().map(String::as_str))
            }),
        )
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn answers(&self) -> &[String] {
        &self.answers
    }

    /// Uniform draw among answers whose normalized form is not excluded.
    pub fn draw(&self, rng: &mut impl Rng, exclude: &BTreeSet<String>) -> Option<&str> {
        let eligible: Vec<&String> = self.answers.iter().filter(|a| !exclude.contains(&key(a))).collect();
        if eligible.is_empty() {
            return None;
        }
        Some(eligible[rng.random_range(0..eligible.len())])
    }
}

/// Texts that must never be drawn as a negative for this sample.
fn exclusions(sample: &Sample, extra: &[&str]) -> BTreeSet<String> {
    std::iter::once(sample.answer.as_str())
        .chain(sample.candidates.iter().flatten().map(String::as_str))
        .chain(extra.iter().copied())
        .map(key)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliRecord {
    pub premise: String,
    pub entailment: String,
    pub contradiction: String,
}

/// Premise as anchor, entailment as positive, contradiction as hard negative.
pub fn nli_pairs(premise: &str, entailment: &str, contradiction: &str) -> Result<TrainingPair, SkipReason> {
    TrainingPair::new(
        premise.trim().to_string(),
        entailment.trim().to_string(),
        contradiction.trim().to_string(),
        TaskTag::Nli,
    )
}

pub fn load_nli(path: impl AsRef<Path>) -> Result<Vec<NliRecord>, crate::model::LoadError> {
    read_jsonl(path)
}

pub fn nli_task(records: &[NliRecord]) -> (Vec<TrainingPair>, TaskReport) {
    let mut report = TaskReport::new(TaskTag::Nli);
    let mut out = Vec::new();
    for r in records {
        report.record(nli_pairs(&r.premise, &r.entailment, &r.contradiction), &mut out);
    }
    (out, report)
}

/// Modal candidate as anchor, the most frequent non-modal candidate as
/// positive, a random answer outside the candidates as hard negative. All
/// three are formatted with the question.
pub fn candidate_pairs(sample: &Sample, space: &AnswerSpace, rng: &mut impl Rng) -> Result<TrainingPair, SkipReason> {
    let candidates = sample
        .candidates
        .as_deref()
        .filter(|c| !c.is_empty())
        .ok_or(SkipReason::NoCandidates)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in candidates {
        let c = c.trim();
        if !c.is_empty() {
            *counts.entry(c).or_default() += 1;
        }
    }
    // count descending, then lexicographic
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let (modal, _) = *ranked.first().ok_or(SkipReason::NoCandidates)?;
    let (less, _) = *ranked.get(1).ok_or(SkipReason::NoLessCommonCandidate)?;
    let negative = space
        .draw(rng, &exclusions(sample, &[]))
        .ok_or(SkipReason::NoNegative)?;
    let q = &sample.question;
    TrainingPair::new(
        format_pair(q, modal),
        format_pair(q, less),
        format_pair(q, negative),
        TaskTag::Candidates,
    )
}

fn replace_last_word(phrase: &str, word: &str) -> String {
    match phrase.trim().rsplit_once(' ') {
        Some((head, _)) => format!("{head} {word}"),
        None => word.to_string(),
    }
}

/// Answer with a synonym swapped in as positive; the antonym (or a random
/// answer when there is none) as hard negative. Multiword answers try the
/// whole phrase first, then the last word.
pub fn synonym_antonym_pairs(
    sample: &Sample,
    lookup: &SynonymLookup,
    space: &AnswerSpace,
    rng: &mut impl Rng,
) -> Result<TrainingPair, SkipReason> {
    let answer = sample.answer.trim();
    let distinct = |w: &str| lookup.most_frequent_synonym(w).filter(|s| key(s) != key(w));
    let (positive, antonym) = match distinct(answer) {
        Some(syn) => (syn.to_string(), lookup.antonym(answer).map(str::to_string)),
        None => {
            let head = answer.rsplit(' ').next().unwrap_or(answer);
            if head == answer {
                return Err(SkipReason::NoSynonym);
            }
            let syn = distinct(head).ok_or(SkipReason::NoSynonym)?;
            (
                replace_last_word(answer, syn),
                lookup.antonym(head).map(|a| replace_last_word(answer, a)),
            )
        }
    };
    let negative = match antonym {
        Some(a) => a,
        None => {
            let mut excluded = exclusions(sample, &[&positive]);
            excluded.extend(lookup.synonyms(answer).into_iter().map(key));
            space.draw(rng, &excluded).ok_or(SkipReason::NoNegative)?.to_string()
        }
    };
    let q = &sample.question;
    TrainingPair::new(
        format_pair(q, answer),
        format_pair(q, &positive),
        format_pair(q, &negative),
        TaskTag::SynonymAntonym,
    )
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// One pair per description: the formatted answer as anchor, the
/// description as positive, and the description with the answer swapped for
/// a random different answer as hard negative.
pub fn description_pairs(
    sample: &Sample,
    descriptions: &[String],
    space: &AnswerSpace,
    rng: &mut impl Rng,
) -> Vec<Result<TrainingPair, SkipReason>> {
    if word_count(&sample.response) >= LONG_RESPONSE_WORDS {
        return vec![Err(SkipReason::LongResponse)];
    }
    if descriptions.is_empty() {
        return vec![Err(SkipReason::NoDescriptions)];
    }
    let answer = sample.answer.trim();
    let anchor = format_pair(&sample.question, answer);
    descriptions
        .iter()
        .map(|d| {
            if answer.is_empty() || !d.contains(answer) {
                return Err(SkipReason::AnswerNotInDescription);
            }
            let other = space
                .draw(rng, &exclusions(sample, &[]))
                .ok_or(SkipReason::NoNegative)?;
            TrainingPair::new(
                anchor.clone(),
                d.clone(),
                d.replace(answer, other),
                TaskTag::Description,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub seed: u64,
    /// Templates (filled with the answer) added to each sample's descriptions.
    pub templates_per_sample: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            templates_per_sample: 1,
        }
    }
}

/// `k` distinct template numbers (1-based) in draw order.
fn pick_templates(rng: &mut impl Rng, set: &TemplateSet, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (1..=set.len()).collect();
    let mut out = Vec::new();
    while out.len() < k && !pool.is_empty() {
        out.push(pool.remove(rng.random_range(0..pool.len())));
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AugmentRun {
    pub pairs: Vec<TrainingPair>,
    pub reports: Vec<TaskReport>,
}

/// Runs the sample-based tasks in the order given. Descriptions come from
/// the cache keyed by (question, answer); nothing here calls an endpoint.
pub fn run_sample_tasks(
    samples: &[Sample],
    tasks: &[TaskTag],
    lookup: &SynonymLookup,
    cache: &DescriptionCache,
    cfg: &AugmentConfig,
) -> AugmentRun {
    let space = AnswerSpace::from_samples(samples);
    let templates = TemplateSet::builtin();
    let mut run = AugmentRun::default();
    for &task in tasks {
        let mut report = TaskReport::new(task);
        for s in samples {
            let mut rng = sample_rng(cfg.seed, task.as_str(), &s.id);
            match task {
                TaskTag::Nli => {}
                TaskTag::Candidates => report.record(candidate_pairs(s, &space, &mut rng), &mut run.pairs),
                TaskTag::SynonymAntonym => {
                    report.record(synonym_antonym_pairs(s, lookup, &space, &mut rng), &mut run.pairs)
                }
                TaskTag::Description => {
                    let mut texts: Vec<String> = pick_templates(&mut rng, &templates, cfg.templates_per_sample)
                        .into_iter()
                        .filter_map(|n| templates.get(n).map(|t| t.fill(s.answer.trim())))
                        .collect();
                    texts.extend(cache.get(&s.question, &s.answer).unwrap_or_default().iter().cloned());
                    for outcome in description_pairs(s, &texts, &space, &mut rng) {
                        report.record(outcome, &mut run.pairs);
                    }
                }
            }
        }
        if task != TaskTag::Nli {
            run.reports.push(report);
        }
    }
    run
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[TrainingPair]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_jsonl(&mut out, pairs)?;
    std::io::Write::flush(&mut out)
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<TrainingPair>, crate::model::LoadError> {
    read_jsonl(path)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PartsReport {
    pub originals: usize,
    pub part2_emitted: usize,
    /// Samples whose response is too long for description augmentation.
    pub part2_long_response: usize,
    /// Samples with no cached descriptions (template variant only).
    pub part2_missing_descriptions: usize,
    pub part3_emitted: usize,
    pub part3_unchanged: usize,
    /// Ids of generated samples awaiting the manual filter.
    pub awaiting_filter: Vec<String>,
}

/// Builds Part 2 (response rewritten as sentences) and Part 3 (answer
/// morphology shifted) variants of Part 1 samples. Variants keep the group,
/// scores and annotations of their original. Part 2 uses the cached
/// descriptions of (question, response) plus one seeded template.
pub fn build_augmented_parts(
    originals: &[Sample],
    lookup: &SynonymLookup,
    cache: &DescriptionCache,
    seed: u64,
) -> (Vec<Sample>, PartsReport) {
    let templates = TemplateSet::builtin();
    let mut out = Vec::new();
    let mut report = PartsReport::default();
    for s in originals.iter().filter(|s| s.part == Part::P1) {
        report.originals += 1;
        let mut rng = sample_rng(seed, "parts", &s.id);
        if word_count(&s.response) >= LONG_RESPONSE_WORDS {
            report.part2_long_response += 1;
        } else {
            let mut texts: Vec<String> = cache.get(&s.question, &s.response).unwrap_or_default().to_vec();
            if texts.is_empty() {
                report.part2_missing_descriptions += 1;
            }
            let n = pick_templates(&mut rng, &templates, 1)[0];
            texts.push(
                templates
                    .get(n)
                    .expect("template number in range")
                    .fill(s.response.trim()),
            );
            for (k, text) in texts.into_iter().enumerate() {
                let mut v = s.clone();
                v.id = format!("{}:p2:{k}", s.id);
                v.part = Part::P2;
                v.response = text;
                report.awaiting_filter.push(v.id.clone());
                out.push(v);
                report.part2_emitted += 1;
            }
        }
        let shifted = morphology_shift(&s.answer, lookup);
        if shifted.changed() {
            let mut v = s.clone();
            v.id = format!("{}:p3", s.id);
            v.part = Part::P3;
            v.answer = shifted.text;
            report.awaiting_filter.push(v.id.clone());
            out.push(v);
            report.part3_emitted += 1;
        } else {
            report.part3_unchanged += 1;
        }
    }
    (out, report)
}
