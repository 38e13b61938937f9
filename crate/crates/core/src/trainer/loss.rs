//! In-batch hard-negative contrastive loss and its analytic gradients.
//!
//! With `s⁺_ij = cos(h_i, h_j⁺)` and `s⁻_ij = cos(h_i, h_j⁻)`:
//!
//! ```text
//! L = (1/N) Σ_i −log( e^{s⁺_ii/τ} / Σ_j (e^{s⁺_ij/τ} + e^{s⁻_ij/τ}) )
//! ```
//!
//! `LossForm::Literal` replaces the negative term by `N·e^{s⁻_ii/τ}`.

use serde::{Deserialize, Serialize};

use super::encoder::{Encoded, EncoderModel};

pub const MIN_TEMPERATURE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    /// Every anchor sees all positives and all hard negatives in the batch.
    #[default]
    InBatch,
    /// Only the anchor's own hard negative, counted N times.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainBatch {
    pub anchors: Vec<String>,
    pub positives: Vec<String>,
    pub hard_negatives: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("batch lists differ in length: {0}, {1}, {2}")]
    Ragged(usize, usize, usize),
    #[error("batch needs at least 2 items, got {0}")]
    TooSmall(usize),
    #[error("temperature {0} is below {MIN_TEMPERATURE}")]
    Temperature(f64),
    #[error("non-finite value at batch index {index}: {what}")]
    NonFinite { index: usize, what: String },
}

impl TrainBatch {
    pub fn new(anchors: Vec<String>, positives: Vec<String>, hard_negatives: Vec<String>) -> Result<Self, LossError> {
        let b = Self {
            anchors,
            positives,
            hard_negatives,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let (a, p, n) = (self.anchors.len(), self.positives.len(), self.hard_negatives.len());
        if a != p || a != n {
            return Err(LossError::Ragged(a, p, n));
        }
        if a < 2 {
            return Err(LossError::TooSmall(a));
        }
        Ok(())
    }
}

fn check_temperature(tau: f64) -> Result<(), LossError> {
    if !(tau.is_finite() && tau >= MIN_TEMPERATURE) {
        return Err(LossError::Temperature(tau));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

/// `∂cos(u, v)/∂u = v/(|u||v|) − cos·u/|u|²`.
fn cos_grad_u(u: &[f64], v: &[f64], c: f64) -> Vec<f64> {
    let (nu, nv) = (norm(u), norm(v));
    let k = 1.0 / (nu * nv);
    let j = c / (nu * nu);
    u.iter().zip(v).map(|(ui, vi)| k * vi - j * ui).collect()
}

/// `LSE(xs) − xs[0]`, via `ln_1p` when `xs[0]` dominates so that a nearly
/// solved row keeps its tiny positive loss instead of rounding to zero.
fn nll_first(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    let m = xs[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m <= x0 {
        xs[1..].iter().map(|x| (x - x0).exp()).sum::<f64>().ln_1p()
    } else {
        let d = m - x0;
        d + ((-d).exp() + xs[1..].iter().map(|x| (x - m).exp()).sum::<f64>()).ln()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Similarity matrices from raw encoder outputs.
pub struct Similarities {
    pub pos: Vec<Vec<f64>>,
    pub neg: Vec<Vec<f64>>,
}

impl Similarities {
    pub fn compute(anchors: &[&[f64]], positives: &[&[f64]], negatives: &[&[f64]]) -> Self {
        let row = |others: &[&[f64]], a: &[f64]| others.iter().map(|o| cos(a, o)).collect();
        Self {
            pos: anchors.iter().map(|a| row(positives, a)).collect(),
            neg: anchors.iter().map(|a| row(negatives, a)).collect(),
        }
    }
}

/// Logits of anchor `i` and their multiplicity-adjusted form; index 0 is
/// always the anchor's own positive.
fn logits(sims: &Similarities, i: usize, tau: f64, form: LossForm) -> Vec<f64> {
    let n = sims.pos.len();
    let mut out: Vec<f64> = Vec::with_capacity(2 * n);
    out.push(sims.pos[i][i] / tau);
    out.extend((0..n).filter(|&j| j != i).map(|j| sims.pos[i][j] / tau));
    match form {
        LossForm::InBatch => out.extend((0..n).map(|j| sims.neg[i][j] / tau)),
        LossForm::Literal => out.push(sims.neg[i][i] / tau + (n as f64).ln()),
    }
    out
}

/// Loss from precomputed similarities, stabilized with log-sum-exp.
pub fn loss_from_similarities(sims: &Similarities, tau: f64, form: LossForm) -> Result<f64, LossError> {
    check_temperature(tau)?;
    let n = sims.pos.len();
    let mut total = 0.0;
    for i in 0..n {
        let l = logits(sims, i, tau, form);
        let li = nll_first(&l);
        if !li.is_finite() {
            return Err(LossError::NonFinite {
                index: i,
                what: format!("loss term {li}"),
            });
        }
        total += li;
    }
    Ok(total / n as f64)
}

struct Forward {
    anchors: Vec<Encoded>,
    positives: Vec<Encoded>,
    negatives: Vec<Encoded>,
    sims: Similarities,
}

fn forward(model: &EncoderModel, batch: &TrainBatch) -> Result<Forward, LossError> {
    batch.validate()?;
    let enc = |texts: &[String]| -> Vec<Encoded> { texts.iter().map(|t| model.encode_detailed(t)).collect() };
    let anchors = enc(&batch.anchors);
    let positives = enc(&batch.positives);
    let negatives = enc(&batch.hard_negatives);
    for (what, list) in [
        ("anchor", &anchors),
        ("positive", &positives),
        ("hard negative", &negatives),
    ] {
        for (i, e) in list.iter().enumerate() {
            let n = norm(&e.raw);
            if !n.is_finite() || n == 0.0 {
                return Err(LossError::NonFinite {
                    index: i,
                    what: format!("{what} embedding norm {n}"),
                });
            }
        }
    }
    let raw = |l: &[Encoded]| -> Vec<Vec<f64>> { l.iter().map(|e| e.raw.clone()).collect() };
    let (a, p, n) = (raw(&anchors), raw(&positives), raw(&negatives));
    fn slices(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }
    let sims = Similarities::compute(&slices(&a), &slices(&p), &slices(&n));
    Ok(Forward {
        anchors,
        positives,
        negatives,
        sims,
    })
}

/// Mean contrastive loss over the batch.
pub fn loss_ibn(model: &EncoderModel, batch: &TrainBatch, tau: f64, form: LossForm) -> Result<f64, LossError> {
    check_temperature(tau)?;
    let f = forward(model, batch)?;
    loss_from_similarities(&f.sims, tau, form)
}

/// Dense gradients shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub table: Vec<f64>,
    pub projection: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &EncoderModel) -> Self {
        Self {
            table: vec![0.0; model.table.len()],
            projection: vec![0.0; model.projection.len()],
        }
    }

    pub fn get(&self, p: ParamRef) -> f64 {
        match p {
            ParamRef::Table(k) => self.table[k],
            ParamRef::Projection(k) => self.projection[k],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.table.iter().chain(&self.projection).all(|x| x.is_finite())
    }
}

/// Flat index into one of the two parameter arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamRef {
    Table(usize),
    Projection(usize),
}

impl ParamRef {
    pub fn get(self, model: &EncoderModel) -> f64 {
        match self {
            ParamRef::Table(k) => model.table[k],
            ParamRef::Projection(k) => model.projection[k],
        }
    }

    pub fn set(self, model: &mut EncoderModel, value: f64) {
        match self {
            ParamRef::Table(k) => model.table[k] = value,
            ParamRef::Projection(k) => model.projection[k] = value,
        }
    }
}

/// Adds the contribution of `∂L/∂raw = g` for one encoded text.
fn backprop_encoded(model: &EncoderModel, e: &Encoded, g: &[f64], grads: &mut Gradients) {
    let d = model.dim;
    // ∂L/∂P = g ⊗ pooled
    for (r, gr) in g.iter().enumerate() {
        let row = &mut grads.projection[r * d..(r + 1) * d];
        for (x, m) in row.iter_mut().zip(&e.pooled) {
            *x += gr * m;
        }
    }
    // ∂L/∂pooled = Pᵀ g, spread evenly over the token rows
    let mut gm = vec![0.0; d];
    for (r, gr) in g.iter().enumerate() {
        let prow = &model.projection[r * d..(r + 1) * d];
        for (x, p) in gm.iter_mut().zip(prow) {
            *x += gr * p;
        }
    }
    let inv = 1.0 / e.rows.len() as f64;
    for &t in &e.rows {
        let row = &mut grads.table[t * d..(t + 1) * d];
        for (x, gv) in row.iter_mut().zip(&gm) {
            *x += gv * inv;
        }
    }
}

/// Loss and exact gradients with respect to the table and projection.
pub fn loss_and_gradients(
    model: &EncoderModel,
    batch: &TrainBatch,
    tau: f64,
    form: LossForm,
) -> Result<(f64, Gradients), LossError> {
    check_temperature(tau)?;
    let f = forward(model, batch)?;
    let loss = loss_from_similarities(&f.sims, tau, form)?;
    let n = batch.len();
    let scale = 1.0 / (n as f64 * tau);

    // ∂L/∂s for every similarity: (softmax − onehot) / (N τ)
    let mut d_pos = vec![vec![0.0; n]; n];
    let mut d_neg = vec![vec![0.0; n]; n];
    for i in 0..n {
        let l = logits(&f.sims, i, tau, form);
        let lse = log_sum_exp(&l);
        let prob: Vec<f64> = l.iter().map(|x| (x - lse).exp()).collect();
        d_pos[i][i] = (prob[0] - 1.0) * scale;
        let mut k = 1;
        for j in (0..n).filter(|&j| j != i) {
            d_pos[i][j] = prob[k] * scale;
            k += 1;
        }
        match form {
            LossForm::InBatch => {
                for j in 0..n {
                    d_neg[i][j] = prob[k + j] * scale;
                }
            }
            LossForm::Literal => d_neg[i][i] = prob[k] * scale,
        }
    }

    let out = model.out_dim;
    let mut g_anchor = vec![vec![0.0; out]; n];
    let mut g_pos = vec![vec![0.0; out]; n];
    let mut g_neg = vec![vec![0.0; out]; n];
    for i in 0..n {
        let a = &f.anchors[i].raw;
        for j in 0..n {
            for (ds, targets, g_t, sims) in [
                (d_pos[i][j], &f.positives, &mut g_pos, &f.sims.pos),
                (d_neg[i][j], &f.negatives, &mut g_neg, &f.sims.neg),
            ] {
                if ds == 0.0 {
                    continue;
                }
                let t = &targets[j].raw;
                let c = sims[i][j];
                for (x, y) in g_anchor[i].iter_mut().zip(cos_grad_u(a, t, c)) {
                    *x += ds * y;
                }
                for (x, y) in g_t[j].iter_mut().zip(cos_grad_u(t, a, c)) {
                    *x += ds * y;
                }
            }
        }
    }

    let mut grads = Gradients::zeros_like(model);
    for (encs, gs) in [(&f.anchors, &g_anchor), (&f.positives, &g_pos), (&f.negatives, &g_neg)] {
        for (e, g) in encs.iter().zip(gs) {
            backprop_encoded(model, e, g, &mut grads);
        }
    }
    if !grads.is_finite() {
        return Err(LossError::NonFinite {
            index: 0,
            what: "gradient".into(),
        });
    }
    Ok((loss, grads))
}

pub fn gradients(model: &EncoderModel, batch: &TrainBatch, tau: f64, form: LossForm) -> Result<Gradients, LossError> {
    loss_and_gradients(model, batch, tau, form).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::super::encoder::UNK;
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Straightforward evaluation of the printed formula, no stabilization.
    fn naive_loss(sims: &Similarities, tau: f64, form: LossForm) -> f64 {
        let n = sims.pos.len();
        let mut total = 0.0;
        for i in 0..n {
            let num = (sims.pos[i][i] / tau).exp();
            let mut den = 0.0;
            for j in 0..n {
                den += (sims.pos[i][j] / tau).exp();
                den += match form {
                    LossForm::InBatch => (sims.neg[i][j] / tau).exp(),
                    LossForm::Literal => (sims.neg[i][i] / tau).exp(),
                };
            }
            total += -(num / den).ln();
        }
        total / n as f64
    }

    fn uniform(n: usize, s: f64) -> Similarities {
        Similarities {
            pos: vec![vec![s; n]; n],
            neg: vec![vec![s; n]; n],
        }
    }

    #[test]
    fn uniform_similarities_give_ln_2n() {
        for form in [LossForm::InBatch, LossForm::Literal] {
            for s in [-0.3, 0.0, 0.7] {
                let l = loss_from_similarities(&uniform(4, s), 0.05, form).unwrap();
                assert!((l - 8f64.ln()).abs() < 1e-9, "{form:?} {s} {l}");
            }
        }
    }

    #[test]
    fn loss_falls_as_positive_separates() {
        let mut prev = f64::INFINITY;
        for k in 0..=10 {
            let p = k as f64 / 10.0;
            let mut sims = uniform(3, -p);
            for i in 0..3 {
                sims.pos[i][i] = p;
            }
            let l = loss_from_similarities(&sims, 0.05, LossForm::InBatch).unwrap();
            assert!(l < prev && l > 0.0);
            prev = l;
        }
        assert!(prev < 1e-15);
    }

    #[test]
    fn two_by_two_matches_naive() {
        let sims = Similarities {
            pos: vec![vec![0.9, 0.1], vec![-0.2, 0.4]],
            neg: vec![vec![0.3, -0.5], vec![0.0, 0.6]],
        };
        for form in [LossForm::InBatch, LossForm::Literal] {
            let a = loss_from_similarities(&sims, 0.5, form).unwrap();
            assert!((a - naive_loss(&sims, 0.5, form)).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_temperature_is_an_error() {
        let err = loss_from_similarities(&uniform(2, 0.0), 1e-7, LossForm::InBatch).unwrap_err();
        assert_eq!(err, LossError::Temperature(1e-7));
        assert!(loss_from_similarities(&uniform(2, 0.0), f64::NAN, LossForm::InBatch).is_err());
    }

    #[test]
    fn small_temperature_stays_finite_where_naive_overflows() {
        let mut sims = uniform(2, -1.0);
        sims.pos[0][0] = 1.0;
        sims.pos[1][1] = 1.0;
        let l = loss_from_similarities(&sims, 1e-3, LossForm::InBatch).unwrap();
        assert!(l.is_finite());
        assert!(!naive_loss(&sims, 1e-3, LossForm::InBatch).is_finite());
    }

    proptest! {
        #[test]
        fn stabilized_matches_naive(seed in any::<u64>(), n in 2usize..6, tau in 0.05f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = || (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let sims = Similarities { pos: m(), neg: m() };
            for form in [LossForm::InBatch, LossForm::Literal] {
                let a = loss_from_similarities(&sims, tau, form).unwrap();
                let b = naive_loss(&sims, tau, form);
                prop_assert!((a - b).abs() < 1e-9);
                prop_assert!(a > 0.0);
            }
        }
    }

    fn batch(texts: &[(&str, &str, &str)]) -> TrainBatch {
        TrainBatch::new(
            texts.iter().map(|t| t.0.to_string()).collect(),
            texts.iter().map(|t| t.1.to_string()).collect(),
            texts.iter().map(|t| t.2.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn ragged_and_tiny_batches_rejected() {
        assert_eq!(
            TrainBatch::new(vec!["a".into()], vec!["b".into()], vec!["c".into()]),
            Err(LossError::TooSmall(1))
        );
        assert!(matches!(
            TrainBatch::new(vec!["a".into(); 2], vec!["b".into(); 3], vec!["c".into(); 2]),
            Err(LossError::Ragged(2, 3, 2))
        ));
    }

    #[test]
    fn repeated_items_give_batch_size_free_gradients() {
        // identical items: L = ln N + ln(1 + e^{(s⁻ − s⁺)/τ}), so the
        // gradient does not depend on N
        let m = EncoderModel::from_parts(
            vec![UNK.into(), "p".into(), "x".into(), "y".into()],
            2,
            2,
            false,
            vec![0.3, 0.1, 1.0, 0.2, 0.4, 0.9, 0.4, 0.9],
            vec![1.0, 0.0, 0.0, 1.0],
        );
        let b = batch(&[("p", "x", "y"), ("p", "x", "y")]);
        let g = gradients(&m, &b, 0.1, LossForm::InBatch).unwrap();
        let b1 = batch(&[("p", "x", "y"), ("p", "x", "y"), ("p", "x", "y")]);
        let g1 = gradients(&m, &b1, 0.1, LossForm::InBatch).unwrap();
        for (a, c) in g.table.iter().zip(&g1.table) {
            assert!((a - c).abs() < 1e-12);
        }
        // the unknown row is never touched
        assert_eq!(&g.table[0..2], &[0.0, 0.0]);
    }
}
