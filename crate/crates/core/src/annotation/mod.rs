//! Human annotation rounds: integer similarity scores and the manual
//! yes/no/unsure filter over augmented samples.
//!
//! State is a pure fold over an append-only event log, so reopening a log
//! reproduces the live state exactly.

mod log;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::model::{write_jsonl, Part, Sample};
use crate::stats::{krippendorff_alpha, AlphaMetric, AnnotationMatrix};

pub use self::log::{read_events, EventLog, Replayed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Score,
    Filter,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Score => "score",
            Mode::Filter => "filter",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = AnnotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "score" => Ok(Mode::Score),
            "filter" => Ok(Mode::Filter),
            other => Err(AnnotationError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterLabel {
    Yes,
    No,
    Unsure,
}

/// A score (0..=10) or a filter label. Serialized as a bare integer or string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Score(u8),
    Label(FilterLabel),
}

impl Payload {
    /// Parses a JSON payload for a task of the given mode.
    pub fn from_json(value: &serde_json::Value, mode: Mode) -> Result<Self, AnnotationError> {
        let bad = |why: String| Err(AnnotationError::InvalidPayload(why));
        let payload = match (mode, value) {
            (Mode::Score, serde_json::Value::Number(n)) => match n.as_u64() {
                Some(v) if v <= 10 => Payload::Score(v as u8),
                _ => return bad(format!("score {n} is not an integer in 0..=10")),
            },
            (Mode::Filter, serde_json::Value::String(s)) => match s.as_str() {
                "yes" => Payload::Label(FilterLabel::Yes),
                "no" => Payload::Label(FilterLabel::No),
                "unsure" => Payload::Label(FilterLabel::Unsure),
                _ => return bad(format!("label {s:?} is not one of yes, no, unsure")),
            },
            (Mode::Score, other) => return bad(format!("score task expects an integer 0..=10, got {other}")),
            (Mode::Filter, other) => return bad(format!("filter task expects yes, no or unsure, got {other}")),
        };
        Ok(payload)
    }

    pub fn check(self, mode: Mode) -> Result<(), AnnotationError> {
        match (self, mode) {
            (Payload::Score(v), Mode::Score) if v <= 10 => Ok(()),
            (Payload::Score(v), Mode::Score) => Err(AnnotationError::InvalidPayload(format!(
                "score {v} is not an integer in 0..=10"
            ))),
            (Payload::Label(_), Mode::Filter) => Ok(()),
            (p, m) => Err(AnnotationError::InvalidPayload(format!(
                "payload {p:?} does not fit a {m} task"
            ))),
        }
    }
}

/// One submission as stored in the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    /// Milliseconds since the Unix epoch.
    pub ts: u64,
    pub annotator_id: String,
    pub task_id: u64,
    pub mode: Mode,
    pub payload: Payload,
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
    #[error("unknown task {0}")]
    UnknownTask(u64),
    #[error("unknown mode `{0}` (expected score or filter)")]
    UnknownMode(String),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("task {task_id} is a {actual} task, not {claimed}")]
    ModeMismatch { task_id: u64, actual: Mode, claimed: Mode },
    #[error("filter tasks incomplete for samples: {}", .0.join(", "))]
    IncompleteTasks(Vec<String>),
    #[error("invalid session: {0}")]
    Config(String),
    #[error("event log: {0}")]
    Log(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How three (or more) filter labels decide keep vs drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepRule {
    /// Drop when "no" and "unsure" together are a strict majority.
    #[default]
    YesMajority,
    /// Labels read as "did the meaning change?": drop when "yes" and
    /// "unsure" together are a strict majority.
    NoMajority,
}

impl KeepRule {
    pub fn keeps(self, labels: &[FilterLabel]) -> bool {
        let against = labels
            .iter()
            .filter(|&&l| match self {
                KeepRule::YesMajority => l != FilterLabel::Yes,
                KeepRule::NoMajority => l != FilterLabel::No,
            })
            .count();
        2 * against <= labels.len()
    }
}

impl FromStr for KeepRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "yes_majority" | "yes-majority" => Ok(KeepRule::YesMajority),
            "no_majority" | "no-majority" => Ok(KeepRule::NoMajority),
            other => Err(format!("unknown keep rule `{other}` (yes_majority or no_majority)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub annotators: Vec<String>,
    /// Submissions needed before a task counts as complete.
    pub required: usize,
    pub keep_rule: KeepRule,
    pub alpha_metric: AlphaMetric,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            annotators: vec!["a1".into(), "a2".into(), "a3".into()],
            required: 3,
            keep_rule: KeepRule::default(),
            alpha_metric: AlphaMetric::Interval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationTask {
    pub task_id: u64,
    pub mode: Mode,
    pub sample_id: String,
}

/// What an annotator sees for one task. Never includes other annotators'
/// submissions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: u64,
    pub sample_id: String,
    pub mode: Mode,
    pub question: String,
    pub answer: String,
    pub response: String,
    /// Responses of the other members of the sample's group.
    pub augmentations: Vec<String>,
    /// 1-based position among tasks of this mode.
    pub index: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub task_id: u64,
    pub sample_id: String,
    /// The value this submission replaced, for resubmissions.
    pub replaced: Option<Payload>,
    pub complete: bool,
    pub human_score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Progress {
    pub score_tasks: usize,
    pub score_complete: usize,
    pub filter_tasks: usize,
    pub filter_complete: usize,
    pub submissions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    /// `None` until there are at least two items scored by two annotators.
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unavailable: Option<String>,
    pub metric: AlphaMetric,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Removal {
    pub sample_id: String,
    pub labels: BTreeMap<String, FilterLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<Sample>,
    pub removed: Vec<Removal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub path: String,
    pub samples: usize,
    /// Samples whose score task is complete and carry `human_score`.
    pub complete: usize,
    /// Samples with some but not enough scores: `raw_annotations` present,
    /// `human_score` absent.
    pub partial: usize,
}

/// Fixed part of a session: the samples and the tasks built from them.
#[derive(Debug, PartialEq)]
struct Catalog {
    samples: Vec<Sample>,
    tasks: Vec<AnnotationTask>,
    sample_index: HashMap<String, usize>,
    score_task: HashMap<String, u64>,
    filter_task: HashMap<String, u64>,
    groups: HashMap<String, Vec<usize>>,
}

/// Mutable part: current value per (task, annotator) plus every event seen.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationState {
    pub responses: BTreeMap<u64, BTreeMap<String, Payload>>,
    pub audit: Vec<AnnotationEvent>,
}

impl AnnotationState {
    fn apply(&mut self, ev: &AnnotationEvent) -> Option<Payload> {
        self.audit.push(ev.clone());
        self.responses
            .entry(ev.task_id)
            .or_default()
            .insert(ev.annotator_id.clone(), ev.payload)
    }
}

/// Score tasks for every sample (ids 1..=n in input order), then filter tasks
/// for every Part 2 and Part 3 sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    config: SessionConfig,
    catalog: Arc<Catalog>,
    state: AnnotationState,
}

impl Session {
    pub fn new(samples: Vec<Sample>, config: SessionConfig) -> Result<Self, AnnotationError> {
        if config.required == 0 {
            return Err(AnnotationError::Config("required annotators must be at least 1".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if config.annotators.is_empty() || !config.annotators.iter().all(|a| !a.is_empty() && seen.insert(a)) {
            return Err(AnnotationError::Config(
                "annotator ids must be non-empty and unique".into(),
            ));
        }
        let mut sample_index = HashMap::new();
        let mut groups: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, s) in samples.iter().enumerate() {
            if sample_index.insert(s.id.clone(), i).is_some() {
                return Err(AnnotationError::Config(format!("duplicate sample id `{}`", s.id)));
            }
            groups.entry(s.group_id.clone()).or_default().push(i);
        }
        let mut tasks = Vec::new();
        let mut score_task = HashMap::new();
        let mut filter_task = HashMap::new();
        for s in &samples {
            let task_id = tasks.len() as u64 + 1;
            score_task.insert(s.id.clone(), task_id);
            tasks.push(AnnotationTask {
                task_id,
                mode: Mode::Score,
                sample_id: s.id.clone(),
            });
        }
        for s in samples.iter().filter(|s| s.part != Part::P1) {
            let task_id = tasks.len() as u64 + 1;
            filter_task.insert(s.id.clone(), task_id);
            tasks.push(AnnotationTask {
                task_id,
                mode: Mode::Filter,
                sample_id: s.id.clone(),
            });
        }
        Ok(Self {
            config,
            catalog: Arc::new(Catalog {
                samples,
                tasks,
                sample_index,
                score_task,
                filter_task,
                groups,
            }),
            state: AnnotationState::default(),
        })
    }

    /// Rebuilds a session by folding `events` in order.
    pub fn replay(
        samples: Vec<Sample>,
        config: SessionConfig,
        events: &[AnnotationEvent],
    ) -> Result<Self, AnnotationError> {
        let mut s = Self::new(samples, config)?;
        for ev in events {
            s.submit(ev.clone())?;
        }
        Ok(s)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &AnnotationState {
        &self.state
    }

    pub fn samples(&self) -> &[Sample] {
        &self.catalog.samples
    }

    pub fn tasks(&self, mode: Mode) -> impl Iterator<Item = &AnnotationTask> {
        self.catalog.tasks.iter().filter(move |t| t.mode == mode)
    }

    pub fn task(&self, task_id: u64) -> Result<&AnnotationTask, AnnotationError> {
        task_id
            .checked_sub(1)
            .and_then(|i| self.catalog.tasks.get(i as usize))
            .ok_or(AnnotationError::UnknownTask(task_id))
    }

    fn check_annotator(&self, annotator: &str) -> Result<(), AnnotationError> {
        if self.config.annotators.iter().any(|a| a == annotator) {
            Ok(())
        } else {
            Err(AnnotationError::UnknownAnnotator(annotator.to_string()))
        }
    }

    fn responses(&self, task_id: u64) -> Option<&BTreeMap<String, Payload>> {
        self.state.responses.get(&task_id)
    }

    pub fn is_complete(&self, task_id: u64) -> bool {
        self.responses(task_id).map_or(0, BTreeMap::len) >= self.config.required
    }

    /// Lowest-id incomplete task of `mode` that `annotator` has not answered.
    pub fn next_task(&self, annotator: &str, mode: Mode) -> Result<Option<TaskView>, AnnotationError> {
        self.check_annotator(annotator)?;
        let total = self.tasks(mode).count();
        let found = self.tasks(mode).enumerate().find(|(_, t)| {
            !self.is_complete(t.task_id) && self.responses(t.task_id).is_none_or(|r| !r.contains_key(annotator))
        });
        Ok(found.map(|(pos, t)| self.view(t, pos + 1, total)))
    }

    fn view(&self, task: &AnnotationTask, index: usize, total: usize) -> TaskView {
        let cat = &self.catalog;
        let i = cat.sample_index[&task.sample_id];
        let s = &cat.samples[i];
        let mut others: Vec<&Sample> = cat.groups[&s.group_id]
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| &cat.samples[j])
            .collect();
        others.sort_by(|a, b| a.id.cmp(&b.id));
        TaskView {
            task_id: task.task_id,
            sample_id: s.id.clone(),
            mode: task.mode,
            question: s.question.clone(),
            answer: s.answer.clone(),
            response: s.response.clone(),
            augmentations: others.into_iter().map(|o| o.response.clone()).collect(),
            index,
            total,
        }
    }

    /// Checks an event against the session without applying it.
    pub fn validate(&self, ev: &AnnotationEvent) -> Result<(), AnnotationError> {
        self.check_annotator(&ev.annotator_id)?;
        let task = self.task(ev.task_id)?;
        if task.mode != ev.mode {
            return Err(AnnotationError::ModeMismatch {
                task_id: ev.task_id,
                actual: task.mode,
                claimed: ev.mode,
            });
        }
        ev.payload.check(task.mode)
    }

    /// Validates and folds one event. A repeat (annotator, task) submission
    /// replaces the earlier value; both stay in the audit trail.
    pub fn submit(&mut self, ev: AnnotationEvent) -> Result<Ack, AnnotationError> {
        self.validate(&ev)?;
        let replaced = self.state.apply(&ev);
        let sample_id = self.task(ev.task_id)?.sample_id.clone();
        Ok(Ack {
            task_id: ev.task_id,
            human_score: if ev.mode == Mode::Score {
                self.human_score(&sample_id)
            } else {
                None
            },
            sample_id,
            replaced,
            complete: self.is_complete(ev.task_id),
        })
    }

    /// Scores submitted so far for a sample's score task.
    pub fn raw_scores(&self, sample_id: &str) -> BTreeMap<String, u8> {
        self.catalog
            .score_task
            .get(sample_id)
            .and_then(|t| self.responses(*t))
            .map(|r| {
                r.iter()
                    .filter_map(|(a, p)| match p {
                        Payload::Score(v) => Some((a.clone(), *v)),
                        Payload::Label(_) => None,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Mean score once the sample's score task is complete.
    pub fn human_score(&self, sample_id: &str) -> Option<f64> {
        let task = *self.catalog.score_task.get(sample_id)?;
        if !self.is_complete(task) {
            return None;
        }
        crate::model::raw_mean(&self.raw_scores(sample_id))
    }

    pub fn progress(&self) -> Progress {
        let count = |mode| {
            let total = self.tasks(mode).count();
            let done = self.tasks(mode).filter(|t| self.is_complete(t.task_id)).count();
            (total, done)
        };
        let (score_tasks, score_complete) = count(Mode::Score);
        let (filter_tasks, filter_complete) = count(Mode::Filter);
        Progress {
            score_tasks,
            score_complete,
            filter_tasks,
            filter_complete,
            submissions: self.state.audit.len(),
        }
    }

    /// Annotators × score tasks, in configured annotator order and task order.
    pub fn score_matrix(&self) -> AnnotationMatrix {
        let rows = self
            .config
            .annotators
            .iter()
            .map(|a| {
                self.tasks(Mode::Score)
                    .map(|t| match self.responses(t.task_id).and_then(|r| r.get(a)) {
                        Some(Payload::Score(v)) => Some(*v),
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        AnnotationMatrix::new(rows).expect("scores are validated on submit")
    }

    pub fn agreement(&self) -> Agreement {
        let (alpha, unavailable) = match krippendorff_alpha(&self.score_matrix(), self.config.alpha_metric) {
            Ok(a) => (Some(a), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Agreement {
            alpha,
            unavailable,
            metric: self.config.alpha_metric,
            progress: self.progress(),
        }
    }

    /// Samples with submitted scores attached. A complete score task sets
    /// `human_score` to the mean; an incomplete one carries `raw_annotations`
    /// only. Samples nobody scored are returned unchanged.
    pub fn annotated_samples(&self) -> Vec<Sample> {
        self.catalog
            .samples
            .iter()
            .map(|s| {
                let raw = self.raw_scores(&s.id);
                if raw.is_empty() {
                    return s.clone();
                }
                let mut s = s.clone();
                s.human_score = self.human_score(&s.id);
                s.raw_annotations = Some(raw);
                s
            })
            .collect()
    }

    /// Drops samples whose filter labels fail the configured rule. Samples
    /// without a filter task (Part 1) are kept.
    pub fn apply_filter_outcomes(&self, samples: &[Sample]) -> Result<FilterOutcome, AnnotationError> {
        let incomplete: Vec<String> = samples
            .iter()
            .filter(|s| {
                self.catalog
                    .filter_task
                    .get(&s.id)
                    .is_some_and(|&t| !self.is_complete(t))
            })
            .map(|s| s.id.clone())
            .collect();
        if !incomplete.is_empty() {
            return Err(AnnotationError::IncompleteTasks(incomplete));
        }
        let mut out = FilterOutcome {
            kept: Vec::new(),
            removed: Vec::new(),
        };
        for s in samples {
            let Some(&task) = self.catalog.filter_task.get(&s.id) else {
                out.kept.push(s.clone());
                continue;
            };
            let labels: BTreeMap<String, FilterLabel> = self
                .responses(task)
                .into_iter()
                .flatten()
                .filter_map(|(a, p)| match p {
                    Payload::Label(l) => Some((a.clone(), *l)),
                    Payload::Score(_) => None,
                })
                .collect();
            let values: Vec<FilterLabel> = labels.values().copied().collect();
            if self.config.keep_rule.keeps(&values) {
                out.kept.push(s.clone());
            } else {
                ::log::info!("filter removes {}: {:?}", s.id, labels);
                out.removed.push(Removal {
                    sample_id: s.id.clone(),
                    labels,
                });
            }
        }
        Ok(out)
    }

    /// Writes `annotated_samples` as sample JSON lines via a temporary file
    /// and rename.
    pub fn export(&self, path: impl AsRef<Path>) -> Result<ExportSummary, AnnotationError> {
        let path = path.as_ref();
        let samples = self.annotated_samples();
        let tmp = tmp_path(path);
        {
            let mut out = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            write_jsonl(&mut out, &samples)?;
            out.flush()?;
            out.get_ref().sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        let annotated = samples.iter().filter(|s| s.raw_annotations.is_some());
        let complete = annotated.clone().filter(|s| s.human_score.is_some()).count();
        Ok(ExportSummary {
            path: path.display().to_string(),
            samples: samples.len(),
            complete,
            partial: annotated.count() - complete,
        })
    }
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Thread-safe session backed by an event log. Submissions go through one
/// writer lock (validate, append + sync, fold); readers take the latest
/// immutable snapshot.
#[derive(Debug)]
pub struct AnnotationService {
    writer: Mutex<(EventLog, Session)>,
    snapshot: RwLock<Arc<Session>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OpenReport {
    pub replayed_events: usize,
    pub truncated_bytes: usize,
}

impl AnnotationService {
    pub fn open(
        samples: Vec<Sample>,
        config: SessionConfig,
        log_path: impl AsRef<Path>,
    ) -> Result<(Self, OpenReport), AnnotationError> {
        let (log, replayed) = EventLog::open(log_path)?;
        let session = Session::replay(samples, config, &replayed.events)?;
        let report = OpenReport {
            replayed_events: replayed.events.len(),
            truncated_bytes: replayed.truncated_bytes,
        };
        let snapshot = RwLock::new(Arc::new(session.clone()));
        Ok((
            Self {
                writer: Mutex::new((log, session)),
                snapshot,
            },
            report,
        ))
    }

    pub fn snapshot(&self) -> Arc<Session> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn submit(&self, annotator_id: &str, task_id: u64, payload: Payload) -> Result<Ack, AnnotationError> {
        let mode = self.snapshot().task(task_id)?.mode;
        self.submit_event(AnnotationEvent {
            ts: now_millis(),
            annotator_id: annotator_id.to_string(),
            task_id,
            mode,
            payload,
        })
    }

    /// The event is durable in the log before the acknowledgement returns.
    pub fn submit_event(&self, ev: AnnotationEvent) -> Result<Ack, AnnotationError> {
        let mut guard = self.writer.lock().expect("writer lock");
        let (log, session) = &mut *guard;
        session.validate(&ev)?;
        log.append(&ev)?;
        let ack = session.submit(ev)?;
        *self.snapshot.write().expect("snapshot lock") = Arc::new(session.clone());
        Ok(ack)
    }

    pub fn next_task(&self, annotator: &str, mode: Mode) -> Result<Option<TaskView>, AnnotationError> {
        self.snapshot().next_task(annotator, mode)
    }

    pub fn agreement(&self) -> Agreement {
        self.snapshot().agreement()
    }

    pub fn export(&self, path: impl AsRef<Path>) -> Result<ExportSummary, AnnotationError> {
        self.snapshot().export(path)
    }

    pub fn log_path(&self) -> PathBuf {
        self.writer.lock().expect("writer lock").0.path().to_path_buf()
    }
}
