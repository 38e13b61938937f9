//! Evaluator-quality properties (Alignment, Consistency, Generalization) and
//! the classical VQA metrics.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::model::{AssessmentReport, Part, PredictionSet, ReportMetadata, ScaledReport, SourceDataset};
use crate::stats::{self, StatsError, VarianceKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyConfig {
    /// Lower clamp on the variances inside the log-inverse formulas.
    pub variance_floor: f64,
    pub variance_kind: VarianceKind,
}

impl Default for PropertyConfig {
    fn default() -> Self {
        Self {
            variance_floor: 1e-12,
            variance_kind: VarianceKind::Population,
        }
    }
}

impl PropertyConfig {
    /// Value of the log-inverse formulas at zero variance: `ln(1/floor)`.
    pub fn clamp_value(&self) -> f64 {
        (1.0 / self.variance_floor).ln()
    }

    fn validate(&self) -> Result<(), PropertyError> {
        if self.variance_floor > 0.0 && self.variance_floor.is_finite() {
            Ok(())
        } else {
            Err(PropertyError::BadFloor(self.variance_floor))
        }
    }

    fn log_inverse(&self, variance: f64) -> (f64, bool) {
        let clamped = variance < self.variance_floor;
        ((1.0 / variance.max(self.variance_floor)).ln(), clamped)
    }

    fn variance(&self, values: &[f64]) -> Result<f64, StatsError> {
        stats::variance_of(values, self.variance_kind)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PropertyError {
    #[error("part {part}: {source}")]
    Part {
        part: Part,
        #[source]
        source: StatsError,
    },
    #[error("dataset {dataset}: {source}")]
    Dataset {
        dataset: String,
        source: Box<PropertyError>,
    },
    #[error("no predictions")]
    Empty,
    #[error("no group has exactly one prediction in each of P1, P2 and P3")]
    NoCompleteGroups,
    #[error("generalization needs at least 2 source datasets, found {0}")]
    TooFewDatasets(usize),
    #[error("variance floor must be positive and finite, got {0}")]
    BadFloor(f64),
    #[error("variance: {0}")]
    Stats(#[from] StatsError),
    #[error("candidate answer list is empty")]
    NoCandidates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub per_part: BTreeMap<Part, f64>,
    /// Unweighted mean over the parts present.
    pub avg: f64,
}

/// Per-part Spearman between predicted and human scores, averaged over parts.
pub fn alignment(preds: &PredictionSet) -> Result<Alignment, PropertyError> {
    let parts = preds.parts();
    if parts.is_empty() {
        return Err(PropertyError::Empty);
    }
    let mut per_part = BTreeMap::new();
    for part in parts {
        let slice = preds.filter(|e| e.part == part);
        let rho = stats::spearman(&slice.predicted(), &slice.human())
            .map_err(|source| PropertyError::Part { part, source })?;
        per_part.insert(part, rho);
    }
    let avg = per_part.values().sum::<f64>() / per_part.len() as f64;
    Ok(Alignment { per_part, avg })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub value: f64,
    pub mean_variance: f64,
    pub complete_groups: usize,
    /// One per P2 member of each complete group.
    pub triples: usize,
    /// Groups missing a part or holding several P1 or P3 members.
    pub skipped_groups: usize,
    pub clamped: bool,
}

/// `ln(1 / mean var(o_P1, o_P2, o_P3))` over (P1, P2, P3) triples.
///
/// A group needs exactly one P1 and one P3 member; each of its P2 members
/// (one per description) forms its own triple.
pub fn consistency(preds: &PredictionSet, cfg: &PropertyConfig) -> Result<Consistency, PropertyError> {
    cfg.validate()?;
    let mut groups: BTreeMap<&str, [Vec<f64>; 3]> = BTreeMap::new();
    for e in &preds.entries {
        let slot = match e.part {
            Part::P1 => 0,
            Part::P2 => 1,
            Part::P3 => 2,
        };
        groups.entry(e.group_id.as_str()).or_default()[slot].push(e.predicted);
    }
    let mut variances = Vec::new();
    let mut skipped = 0;
    let mut complete = 0;
    for [p1, p2, p3] in groups.values() {
        if p1.len() == 1 && p3.len() == 1 && !p2.is_empty() {
            complete += 1;
            for &o2 in p2 {
                variances.push(cfg.variance(&[p1[0], o2, p3[0]])?);
            }
        } else {
            skipped += 1;
        }
    }
    if variances.is_empty() {
        return Err(PropertyError::NoCompleteGroups);
    }
    if skipped > 0 {
        log::warn!("consistency: skipped {skipped} incomplete group(s)");
    }
    let mean_variance = variances.iter().sum::<f64>() / variances.len() as f64;
    let (value, clamped) = cfg.log_inverse(mean_variance);
    Ok(Consistency {
        value,
        mean_variance,
        complete_groups: complete,
        triples: variances.len(),
        skipped_groups: skipped,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generalization {
    pub per_dataset: BTreeMap<String, f64>,
    pub variance: f64,
    pub value: f64,
    pub clamped: bool,
}

/// `ln(1 / var(align_d))` over the distinct source datasets present.
pub fn generalization(preds: &PredictionSet, cfg: &PropertyConfig) -> Result<Generalization, PropertyError> {
    cfg.validate()?;
    let datasets = preds.datasets();
    if datasets.len() < 2 {
        return Err(PropertyError::TooFewDatasets(datasets.len()));
    }
    let mut per_dataset = BTreeMap::new();
    for ds in datasets {
        let slice = preds.filter(|e| e.source_dataset == ds);
        let a = alignment(&slice).map_err(|e| PropertyError::Dataset {
            dataset: ds.to_string(),
            source: Box::new(e),
        })?;
        per_dataset.insert(ds.to_string(), a.avg);
    }
    generalization_from_alignments(per_dataset, cfg)
}

/// Generalization from already computed per-dataset alignments.
pub fn generalization_from_alignments(
    per_dataset: BTreeMap<String, f64>,
    cfg: &PropertyConfig,
) -> Result<Generalization, PropertyError> {
    cfg.validate()?;
    if per_dataset.len() < 2 {
        return Err(PropertyError::TooFewDatasets(per_dataset.len()));
    }
    let values: Vec<f64> = per_dataset.values().copied().collect();
    let variance = cfg.variance(&values)?;
    let (value, clamped) = cfg.log_inverse(variance);
    Ok(Generalization {
        per_dataset,
        variance,
        value,
        clamped,
    })
}

/// Lowercase, trim and collapse internal whitespace.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(response: &str, answer: &str) -> u8 {
    u8::from(normalize_answer(response) == normalize_answer(answer))
}

/// `min(hits / 3, 1)` where hits counts candidates equal to the response.
pub fn vqa_score(response: &str, candidates: &[String]) -> Result<f64, PropertyError> {
    if candidates.is_empty() {
        return Err(PropertyError::NoCandidates);
    }
    let r = normalize_answer(response);
    let hits = candidates.iter().filter(|c| normalize_answer(c) == r).count();
    Ok((hits as f64 / 3.0).min(1.0))
}

/// Computes every property that the data supports; the rest are reported missing.
pub fn assess(preds: &PredictionSet, cfg: &PropertyConfig) -> AssessmentReport {
    let mut missing = Vec::new();
    let mut warnings = Vec::new();

    let (alignment_per_part, alignment_avg) = match alignment(preds) {
        Ok(a) => (a.per_part, Some(a.avg)),
        Err(e) => {
            missing.push(format!("alignment: {e}"));
            (BTreeMap::new(), None)
        }
    };
    let (consistency_value, consistency_clamped) = match consistency(preds, cfg) {
        Ok(c) => {
            if c.skipped_groups > 0 {
                warnings.push(format!(
                    "consistency: {} group(s) skipped for missing or duplicated parts",
                    c.skipped_groups
                ));
            }
            (Some(c.value), c.clamped)
        }
        Err(e) => {
            missing.push(format!("consistency: {e}"));
            (None, false)
        }
    };
    let (alignment_per_dataset, generalization_value, generalization_clamped) = match generalization(preds, cfg) {
        Ok(g) => (g.per_dataset, Some(g.value), g.clamped),
        Err(e) => {
            missing.push(format!("generalization: {e}"));
            (per_dataset_best_effort(preds), None, false)
        }
    };

    let x100 = |v: f64| v * 100.0;
    let scaled = ScaledReport {
        alignment_per_part: alignment_per_part.iter().map(|(k, v)| (*k, x100(*v))).collect(),
        alignment_avg: alignment_avg.map(x100),
        consistency: consistency_value.map(x100),
        generalization: generalization_value.map(x100),
        alignment_per_dataset: alignment_per_dataset
            .iter()
            .map(|(k, v)| (k.clone(), x100(*v)))
            .collect(),
    };
    AssessmentReport {
        n_parts: preds.parts().len(),
        n_samples: preds.len(),
        alignment_per_part,
        alignment_avg,
        consistency: consistency_value,
        generalization: generalization_value,
        alignment_per_dataset,
        scaled,
        missing,
        warnings,
        metadata: ReportMetadata {
            variance: match cfg.variance_kind {
                VarianceKind::Population => "population".into(),
                VarianceKind::Sample => "sample".into(),
            },
            log_base: "e".into(),
            variance_floor: cfg.variance_floor,
            rank_ties: "average".into(),
            clamp_value: cfg.clamp_value(),
            consistency_clamped,
            generalization_clamped,
        },
    }
}

/// Per-dataset alignments for whichever datasets support them.
fn per_dataset_best_effort(preds: &PredictionSet) -> BTreeMap<String, f64> {
    let mut by_ds: HashMap<SourceDataset, f64> = HashMap::new();
    for ds in preds.datasets() {
        if let Ok(a) = alignment(&preds.filter(|e| e.source_dataset == ds)) {
            by_ds.insert(ds, a.avg);
        }
    }
    by_ds.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
