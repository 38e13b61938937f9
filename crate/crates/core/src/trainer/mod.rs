//! Desk-scale contrastive training of a bag-of-tokens encoder.

mod encoder;
mod loss;
mod optim;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::TrainingPair;
use crate::embedder::cosine_slices;

pub use encoder::{CheckpointError, Encoded, EncoderModel, UNK};
pub use loss::{
    gradients, loss_and_gradients, loss_from_similarities, loss_ibn, Gradients, LossError, LossForm, ParamRef,
    Similarities, TrainBatch, MIN_TEMPERATURE,
};
pub use optim::{AdamW, AdamWParams, CosineSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub temperature: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub peak_lr: f64,
    /// Fraction of all steps spent in linear warmup.
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss_form: LossForm,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        let a = AdamWParams::default();
        Self {
            temperature: 0.05,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            weight_decay: a.weight_decay,
            peak_lr: 5e-3,
            warmup_fraction: 0.1,
            batch_size: 32,
            epochs: 5,
            seed: 0,
            loss_form: LossForm::InBatch,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid trainer config: {0}")]
    Config(String),
    #[error("no training pairs")]
    NoPairs,
    #[error("step {step}: {source}")]
    Loss {
        step: u64,
        source: LossError,
        trace: Vec<StepRecord>,
    },
    #[error("loss diverged at step {step}")]
    Diverged { step: u64, trace: Vec<StepRecord> },
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.temperature >= MIN_TEMPERATURE && self.temperature.is_finite()) {
            return bad("temperature must be at least 1e-6");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0 && self.weight_decay >= 0.0 && self.peak_lr >= 0.0) {
            return bad("eps must be positive; weight_decay and peak_lr non-negative");
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1]");
        }
        if self.batch_size < 2 || self.epochs == 0 {
            return bad("batch_size must be at least 2 and epochs at least 1");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWParams {
        AdamWParams {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EncoderModel,
    pub trace: Vec<StepRecord>,
}

/// Batches of indices for every epoch; a trailing batch of one item is
/// folded into the previous batch.
fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        let tail = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(tail);
    }
    batches
}

fn make_batch(pairs: &[TrainingPair], idx: &[usize]) -> TrainBatch {
    TrainBatch {
        anchors: idx.iter().map(|&i| pairs[i].anchor.clone()).collect(),
        positives: idx.iter().map(|&i| pairs[i].positive.clone()).collect(),
        hard_negatives: idx.iter().map(|&i| pairs[i].hard_negative.clone()).collect(),
    }
}

/// AdamW with a warmup + cosine learning-rate schedule. Shuffling is seeded,
/// so a fixed config reproduces the loss trace exactly.
pub fn train(mut model: EncoderModel, pairs: &[TrainingPair], cfg: &TrainerConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if pairs.len() < 2 {
        return Err(TrainError::NoPairs);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let per_epoch = epoch_batches(pairs.len(), cfg.batch_size, &mut rng.clone()).len() as u64;
    let schedule = CosineSchedule::new(cfg.peak_lr, cfg.warmup_fraction, per_epoch * cfg.epochs as u64);
    let mut opt = AdamW::new(cfg.adamw(), &model);
    let mut trace = Vec::with_capacity(schedule.total_steps as usize);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        for idx in epoch_batches(pairs.len(), cfg.batch_size, &mut rng) {
            let batch = make_batch(pairs, &idx);
            let (loss, grads) = match loss_and_gradients(&model, &batch, cfg.temperature, cfg.loss_form) {
                Ok(v) => v,
                Err(source) => return Err(TrainError::Loss { step, source, trace }),
            };
            if !loss.is_finite() {
                return Err(TrainError::Diverged { step, trace });
            }
            let lr = schedule.lr(step);
            opt.step(&mut model, &grads, lr);
            trace.push(StepRecord { step, epoch, lr, loss });
            step += 1;
        }
        log::info!(
            "epoch {} done, last loss {:.4}",
            epoch + 1,
            trace.last().map_or(f64::NAN, |r| r.loss)
        );
    }
    Ok(TrainOutcome { model, trace })
}

/// Mean cosine of anchor/positive and of anchor/hard-negative over the pairs.
pub fn pair_cosine_gap(model: &EncoderModel, pairs: &[TrainingPair]) -> (f64, f64) {
    let mut pos = 0.0;
    let mut neg = 0.0;
    for p in pairs {
        let a = model.encode(&p.anchor);
        let c = |t: &str| cosine_slices(a.as_slice(), model.encode(t).as_slice()).unwrap_or(0.0);
        pos += c(&p.positive);
        neg += c(&p.hard_negative);
    }
    let n = pairs.len().max(1) as f64;
    (pos / n, neg / n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub checked: usize,
    /// Coordinates whose analytic and numeric gradients were both below
    /// `NEGLIGIBLE_GRADIENT`; relative error is meaningless there.
    pub negligible: usize,
    pub max_rel_error: f64,
    pub worst: Option<String>,
}

pub const NEGLIGIBLE_GRADIENT: f64 = 1e-7;

/// Compares analytic gradients with central differences on up to `coords`
/// randomly chosen parameters: the projection plus every table row the
/// batch touches. Relative error is `|a − n| / max(|a|, |n|)`.
pub fn gradcheck(
    model: &EncoderModel,
    batch: &TrainBatch,
    tau: f64,
    form: LossForm,
    coords: usize,
    step: f64,
    seed: u64,
) -> Result<GradcheckReport, LossError> {
    let grads = gradients(model, batch, tau, form)?;
    let mut rows: Vec<usize> = batch
        .anchors
        .iter()
        .chain(&batch.positives)
        .chain(&batch.hard_negatives)
        .flat_map(|t| model.encode_detailed(t).rows)
        .collect();
    rows.sort_unstable();
    rows.dedup();
    let mut pool: Vec<ParamRef> = (0..model.projection.len()).map(ParamRef::Projection).collect();
    for r in rows {
        pool.extend((r * model.dim..(r + 1) * model.dim).map(ParamRef::Table));
    }
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut work = model.clone();
    let mut report = GradcheckReport {
        checked: 0,
        negligible: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for p in pool {
        if report.checked >= coords {
            break;
        }
        let x0 = p.get(&work);
        p.set(&mut work, x0 + step);
        let up = loss_ibn(&work, batch, tau, form)?;
        p.set(&mut work, x0 - step);
        let down = loss_ibn(&work, batch, tau, form)?;
        p.set(&mut work, x0);
        let numeric = (up - down) / (2.0 * step);
        let analytic = grads.get(p);
        let scale = analytic.abs().max(numeric.abs());
        if scale < NEGLIGIBLE_GRADIENT {
            report.negligible += 1;
            continue;
        }
        let rel = (analytic - numeric).abs() / scale;
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some(format!("{p:?}: analytic {analytic:e}, numeric {numeric:e}"));
        }
    }
    Ok(report)
}

/// Seeded small model and batch for gradient checks: `vocab` words, texts of
/// one to three words, `n` items.
pub fn random_instance(seed: u64, vocab: usize, dim: usize, out_dim: usize, n: usize) -> (EncoderModel, TrainBatch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..vocab).map(|i| format!("w{i}")).collect();
    let text = |rng: &mut ChaCha8Rng| {
        let k = rng.random_range(1..=3);
        (0..k)
            .map(|_| words[rng.random_range(0..vocab)].clone())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let list = |rng: &mut ChaCha8Rng| (0..n).map(|_| text(rng)).collect::<Vec<_>>();
    let batch = TrainBatch {
        anchors: list(&mut rng),
        positives: list(&mut rng),
        hard_negatives: list(&mut rng),
    };
    let mut model = EncoderModel::new(&words, dim, out_dim, false, rng.random());
    // larger entries than the training init so cosines spread out
    for x in model.table.iter_mut().chain(model.projection.iter_mut()) {
        *x = rng.random_range(-1.0..1.0);
    }
    (model, batch)
}
