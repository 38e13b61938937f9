//! Rank correlation, variance and inter-annotator agreement.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("correlation undefined: {0} input is constant")]
    Constant(&'static str),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("annotation matrix needs at least 2 annotators and 2 items with paired values ({0})")]
    InsufficientPairs(String),
    #[error("annotation score {0} outside 0..=10")]
    ScoreOutOfRange(u8),
    #[error("ragged annotation matrix: row {row} has {got} cells, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
}

/// Values together with their fractional (average-for-ties) ranks, 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector {
    pub values: Vec<f64>,
    pub ranks: Vec<f64>,
}

impl RankVector {
    pub fn new(values: &[f64]) -> Self {
        Self {
            values: values.to_vec(),
            ranks: average_ranks(values),
        }
    }
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(StatsError::NonFinite(i)),
        None => Ok(()),
    }
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::Constant("first"));
    }
    if syy == 0.0 {
        return Err(StatsError::Constant("second"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            got: xs.len(),
        });
    }
    check_finite(xs)?;
    check_finite(ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceKind {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n - 1.
    Sample,
}

/// Population variance (divide by n).
pub fn variance(values: &[f64]) -> Result<f64, StatsError> {
    variance_of(values, VarianceKind::Population)
}

pub fn variance_of(values: &[f64], kind: VarianceKind) -> Result<f64, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            got: values.len(),
        });
    }
    check_finite(values)?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(match kind {
        VarianceKind::Population => ss / n,
        VarianceKind::Sample => ss / (n - 1.0),
    })
}

/// Annotators × items grid of optional integer scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMatrix {
    rows: Vec<Vec<Option<u8>>>,
}

impl AnnotationMatrix {
    /// `rows[annotator][item]`. Cells must be within 0..=10.
    pub fn new(rows: Vec<Vec<Option<u8>>>) -> Result<Self, StatsError> {
        let width = rows.first().map_or(0, Vec::len);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(StatsError::Ragged {
                    row: r,
                    got: row.len(),
                    expected: width,
                });
            }
            if let Some(&v) = row.iter().flatten().find(|&&v| v > 10) {
                return Err(StatsError::ScoreOutOfRange(v));
            }
        }
        Ok(Self { rows })
    }

    /// Builds from complete rows (no missing cells).
    pub fn from_complete(rows: &[Vec<u8>]) -> Result<Self, StatsError> {
        Self::new(rows.iter().map(|r| r.iter().copied().map(Some).collect()).collect())
    }

    pub fn annotators(&self) -> usize {
        self.rows.len()
    }

    pub fn items(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> &[Vec<Option<u8>>] {
        &self.rows
    }

    /// Values present for one item, in annotator order.
    pub fn item_values(&self, item: usize) -> Vec<u8> {
        self.rows.iter().filter_map(|r| r[item]).collect()
    }

    pub fn set(&mut self, annotator: usize, item: usize, value: Option<u8>) {
        self.rows[annotator][item] = value;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMetric {
    #[default]
    Interval,
    Ordinal,
}

/// Krippendorff's alpha via the coincidence matrix.
///
/// Items with fewer than two values are not pairable and are excluded.
pub fn krippendorff_alpha(m: &AnnotationMatrix, metric: AlphaMetric) -> Result<f64, StatsError> {
    if m.annotators() < 2 {
        return Err(StatsError::InsufficientPairs(format!(
            "{} annotator(s)",
            m.annotators()
        )));
    }
    // value -> index, over values in pairable units only
    let units: Vec<Vec<u8>> = (0..m.items())
        .map(|i| m.item_values(i))
        .filter(|v| v.len() >= 2)
        .collect();
    if units.len() < 2 {
        return Err(StatsError::InsufficientPairs(format!(
            "{} pairable item(s)",
            units.len()
        )));
    }
    let mut levels: BTreeMap<u8, usize> = BTreeMap::new();
    for &v in units.iter().flatten() {
        levels.insert(v, 0);
    }
    for (idx, slot) in levels.values_mut().enumerate() {
        *slot = idx;
    }
    let k = levels.len();
    let values: Vec<f64> = levels.keys().map(|&v| f64::from(v)).collect();

    let mut coincidence = vec![vec![0.0f64; k]; k];
    for unit in &units {
        let weight = 1.0 / (unit.len() as f64 - 1.0);
        for (a, &va) in unit.iter().enumerate() {
            for (b, &vb) in unit.iter().enumerate() {
                if a != b {
                    coincidence[levels[&va]][levels[&vb]] += weight;
                }
            }
        }
    }
    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();

    let delta = |c: usize, d: usize| -> f64 {
        match metric {
            AlphaMetric::Interval => (values[c] - values[d]).powi(2),
            AlphaMetric::Ordinal => {
                let (lo, hi) = if c <= d { (c, d) } else { (d, c) };
                let span: f64 = marginals[lo..=hi].iter().sum();
                (span - (marginals[c] + marginals[d]) / 2.0).powi(2)
            }
        }
    };

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            let dd = delta(c, d);
            observed += coincidence[c][d] * dd;
            expected += marginals[c] * marginals[d] * dd;
        }
    }
    observed /= n;
    expected /= n * (n - 1.0);
    if observed == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - observed / expected)
}
