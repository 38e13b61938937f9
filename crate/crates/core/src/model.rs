//! Shared data model: samples, prediction sets, assessment reports and their
//! JSON-lines file formats.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Scores are integers 0..=10 per annotator and their mean per sample.
pub const MAX_SCORE: f64 = 10.0;

const MEAN_TOLERANCE: f64 = 1e-9;

/// Source VQA dataset a sample was drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceDataset {
    Okvqa,
    Aokvqa,
    Vqav2,
    Gqa,
    Other(String),
}

impl SourceDataset {
    pub fn as_str(&self) -> &str {
        match self {
            SourceDataset::Okvqa => "okvqa",
            SourceDataset::Aokvqa => "aokvqa",
            SourceDataset::Vqav2 => "vqav2",
            SourceDataset::Gqa => "gqa",
            SourceDataset::Other(name) => name,
        }
    }
}

impl From<String> for SourceDataset {
    fn from(s: String) -> Self {
        match s.as_str() {
            "okvqa" => SourceDataset::Okvqa,
            "aokvqa" => SourceDataset::Aokvqa,
            "vqav2" => SourceDataset::Vqav2,
            "gqa" => SourceDataset::Gqa,
            _ => SourceDataset::Other(s),
        }
    }
}

impl From<&str> for SourceDataset {
    fn from(s: &str) -> Self {
        SourceDataset::from(s.to_string())
    }
}

impl fmt::Display for SourceDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for SourceDataset {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SourceDataset {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s.is_empty() {
            return Err(serde::de::Error::custom("source_dataset must not be empty"));
        }
        Ok(SourceDataset::from(s))
    }
}

/// Dataset part: original (P1), description-augmented (P2), morphology-shifted (P3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Part {
    P1,
    P2,
    P3,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::P1, Part::P2, Part::P3];

    pub fn as_str(self) -> &'static str {
        match self {
            Part::P1 => "P1",
            Part::P2 => "P2",
            Part::P3 => "P3",
        }
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Part {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "P1" | "p1" | "1" => Ok(Part::P1),
            "P2" | "p2" | "2" => Ok(Part::P2),
            "P3" | "p3" | "3" => Ok(Part::P3),
            other => Err(format!("unknown part `{other}`")),
        }
    }
}

/// One VQA evaluation item.
///
/// Fields are declared in alphabetical order so that serialization emits the
/// canonical field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
    pub group_id: String,
    /// Mean annotator score. Absent while annotation is still in progress.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_score: Option<f64>,
    pub id: String,
    pub part: Part,
    pub question: String,
    /// Integer scores keyed by annotator id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_annotations: Option<BTreeMap<String, u8>>,
    pub response: String,
    pub source_dataset: SourceDataset,
}

impl Sample {
    /// Checks the per-record invariants, returning one message per violation.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.id.is_empty() {
            problems.push("field `id` is empty".to_string());
        }
        if self.group_id.is_empty() {
            problems.push("field `group_id` is empty".to_string());
        }
        if let Some(score) = self.human_score {
            if !(0.0..=MAX_SCORE).contains(&score) {
                problems.push(format!("field `human_score` = {score} is outside [0, 10]"));
            }
        }
        if let Some(cands) = &self.candidates {
            if cands.len() > 10 {
                problems.push(format!(
                    "field `candidates` has {} entries, at most 10 allowed",
                    cands.len()
                ));
            }
        }
        if let Some(raw) = &self.raw_annotations {
            for (annotator, &score) in raw {
                if f64::from(score) > MAX_SCORE {
                    problems.push(format!(
                        "field `raw_annotations` has score {score} from `{annotator}` outside 0..=10"
                    ));
                }
            }
            if let (Some(mean), Some(score)) = (raw_mean(raw), self.human_score) {
                if (mean - score).abs() > MEAN_TOLERANCE {
                    problems.push(format!(
                        "field `human_score` = {score} differs from mean of raw_annotations = {mean}"
                    ));
                }
            }
        }
        problems
    }
}

/// Arithmetic mean of raw annotations, `None` when there are none.
pub fn raw_mean(raw: &BTreeMap<String, u8>) -> Option<f64> {
    if raw.is_empty() {
        return None;
    }
    Some(raw.values().map(|&v| f64::from(v)).sum::<f64>() / raw.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIssue {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid records:\n{}", format_issues(.0))]
    Invalid(Vec<LineIssue>),
}

fn format_issues(issues: &[LineIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

/// Reads a JSON-lines sample file. Blank lines are ignored.
///
/// Every offending line is reported, not just the first.
pub fn load_samples(path: impl AsRef<Path>) -> Result<Vec<Sample>, LoadError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_samples(BufReader::new(file)).map_err(|e| match e {
        LoadError::Io { source, .. } => LoadError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

pub fn read_samples(reader: impl BufRead) -> Result<Vec<Sample>, LoadError> {
    let mut samples = Vec::new();
    let mut lines_of = Vec::new();
    let mut issues = Vec::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| LoadError::Io {
            path: String::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = match serde_json::from_str(&line) {
            Ok(s) => s,
            Err(e) => {
                issues.push(LineIssue {
                    line: lineno,
                    message: e.to_string(),
                });
                continue;
            }
        };
        for message in sample.validate() {
            issues.push(LineIssue { line: lineno, message });
        }
        if let Some(first) = seen_ids.get(&sample.id) {
            issues.push(LineIssue {
                line: lineno,
                message: format!("duplicate id `{}` (first seen on line {first})", sample.id),
            });
        } else {
            seen_ids.insert(sample.id.clone(), lineno);
        }
        samples.push(sample);
        lines_of.push(lineno);
    }

    // Group consistency: same question and source for every member, same
    // answer for every P1/P2 member. P3 members carry a reworded answer.
    let mut group_head: HashMap<&str, usize> = HashMap::new();
    let mut answer_head: HashMap<&str, usize> = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        let mut report = |h: usize, diffs: &[&str]| {
            if !diffs.is_empty() {
                issues.push(LineIssue {
                    line: lines_of[i],
                    message: format!(
                        "group `{}` disagrees with line {} on {}",
                        s.group_id,
                        lines_of[h],
                        diffs.join(", ")
                    ),
                });
            }
        };
        match group_head.get(s.group_id.as_str()) {
            None => {
                group_head.insert(&s.group_id, i);
            }
            Some(&h) => {
                let head = &samples[h];
                let mut diffs = Vec::new();
                if head.question != s.question {
                    diffs.push("question");
                }
                if head.source_dataset != s.source_dataset {
                    diffs.push("source_dataset");
                }
                report(h, &diffs);
            }
        }
        if s.part == Part::P3 {
            continue;
        }
        match answer_head.get(s.group_id.as_str()) {
            None => {
                answer_head.insert(&s.group_id, i);
            }
            Some(&h) if samples[h].answer != s.answer => report(h, &["answer"]),
            Some(_) => {}
        }
    }

    if issues.is_empty() {
        Ok(samples)
    } else {
        issues.sort_by_key(|i| i.line);
        Err(LoadError::Invalid(issues))
    }
}

/// Writes samples as canonical JSON lines (alphabetical field order).
pub fn write_samples(path: impl AsRef<Path>, samples: &[Sample]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_jsonl(&mut out, samples)?;
    out.flush()
}

/// Writes any serializable records as JSON lines.
pub fn write_jsonl<T: Serialize>(out: &mut impl Write, records: &[T]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads JSON lines of any deserializable record type; errors carry line numbers.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>, LoadError> {
    let path = path.as_ref();
    let io_err = |source| LoadError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => records.push(r),
            Err(e) => issues.push(LineIssue {
                line: idx + 1,
                message: e.to_string(),
            }),
        }
    }
    if issues.is_empty() {
        Ok(records)
    } else {
        Err(LoadError::Invalid(issues))
    }
}

/// One evaluator prediction aligned with its human score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub sample_id: String,
    pub predicted: f64,
    pub human: f64,
    pub part: Part,
    pub source_dataset: SourceDataset,
    pub group_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub entries: Vec<PredictionEntry>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PredictionSetError {
    #[error("duplicate sample id `{0}` in prediction set")]
    DuplicateId(String),
    #[error("sample `{id}` has non-finite predicted score {value}")]
    NonFinite { id: String, value: f64 },
    #[error("sample `{id}` has human score {value} outside [0, 10]")]
    HumanOutOfRange { id: String, value: f64 },
}

impl PredictionSet {
    pub fn new(entries: Vec<PredictionEntry>) -> Result<Self, PredictionSetError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.sample_id.as_str()) {
                return Err(PredictionSetError::DuplicateId(e.sample_id.clone()));
            }
            if !e.predicted.is_finite() {
                return Err(PredictionSetError::NonFinite {
                    id: e.sample_id.clone(),
                    value: e.predicted,
                });
            }
            if !(0.0..=MAX_SCORE).contains(&e.human) {
                return Err(PredictionSetError::HumanOutOfRange {
                    id: e.sample_id.clone(),
                    value: e.human,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn predicted(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.predicted).collect()
    }

    pub fn human(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.human).collect()
    }

    /// Subset of entries satisfying a predicate, order preserved.
    pub fn filter(&self, mut keep: impl FnMut(&PredictionEntry) -> bool) -> PredictionSet {
        PredictionSet {
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }

    pub fn parts(&self) -> Vec<Part> {
        let mut parts: Vec<Part> = self.entries.iter().map(|e| e.part).collect();
        parts.sort();
        parts.dedup();
        parts
    }

    pub fn datasets(&self) -> Vec<SourceDataset> {
        let mut ds: Vec<SourceDataset> = self.entries.iter().map(|e| e.source_dataset.clone()).collect();
        ds.sort();
        ds.dedup();
        ds
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LoadError> {
        let entries: Vec<PredictionEntry> = read_jsonl(path)?;
        PredictionSet::new(entries).map_err(|e| {
            LoadError::Invalid(vec![LineIssue {
                line: 0,
                message: e.to_string(),
            }])
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        write_jsonl(&mut out, &self.entries)?;
        out.flush()
    }
}

/// Evaluator-quality report. Missing values are `None` and explained in `missing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub alignment_per_part: BTreeMap<Part, f64>,
    pub alignment_avg: Option<f64>,
    pub consistency: Option<f64>,
    pub generalization: Option<f64>,
    pub alignment_per_dataset: BTreeMap<String, f64>,
    pub n_parts: usize,
    pub n_samples: usize,
    /// Same values on the ×100 display scale.
    pub scaled: ScaledReport,
    /// One entry per unavailable field: `field: reason`.
    pub missing: Vec<String>,
    pub warnings: Vec<String>,
    pub metadata: ReportMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledReport {
    pub alignment_per_part: BTreeMap<Part, f64>,
    pub alignment_avg: Option<f64>,
    pub consistency: Option<f64>,
    pub generalization: Option<f64>,
    pub alignment_per_dataset: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub variance: String,
    pub log_base: String,
    pub variance_floor: f64,
    pub rank_ties: String,
    /// Value that Consistency/Generalization take when the variance is clamped.
    pub clamp_value: f64,
    pub consistency_clamped: bool,
    pub generalization_clamped: bool,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("cannot split an empty sample list")]
    Empty,
    #[error("split ratio components must be positive, got {0}:{1}")]
    BadRatio(u32, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
    pub warnings: Vec<String>,
}

/// Group-aware validation/test split.
///
/// Groups are shuffled with a seeded RNG and the first
/// `round(groups * val / (val + test))` groups go to validation. Sample order
/// within each side follows the input order.
pub fn split_validation_test(samples: &[Sample], ratio: (u32, u32), seed: u64) -> Result<Split, SplitError> {
    if samples.is_empty() {
        return Err(SplitError::Empty);
    }
    let (val_w, test_w) = ratio;
    if val_w == 0 || test_w == 0 {
        return Err(SplitError::BadRatio(val_w, test_w));
    }
    let mut groups: Vec<&str> = samples.iter().map(|s| s.group_id.as_str()).collect();
    groups.sort_unstable();
    groups.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);

    let total = groups.len() as u64;
    let n_val = ((total * u64::from(val_w)) as f64 / f64::from(val_w + test_w)).round() as usize;
    let mut warnings = Vec::new();
    if n_val == 0 {
        warnings.push(format!(
            "only {total} group(s): validation side is empty, all samples go to test"
        ));
    }
    let val_groups: HashSet<&str> = groups[..n_val].iter().copied().collect();
    let (validation, test): (Vec<Sample>, Vec<Sample>) = samples
        .iter()
        .cloned()
        .partition(|s| val_groups.contains(s.group_id.as_str()));
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Split {
        validation,
        test,
        warnings,
    })
}
