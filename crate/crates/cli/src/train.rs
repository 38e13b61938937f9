use anyhow::{bail, Context};
use serde::Serialize;

use vqaeval::augment::read_pairs;
use vqaeval::model::write_jsonl;
use vqaeval::trainer::{
    gradcheck as check_gradients, pair_cosine_gap, random_instance, train as run_training, EncoderModel, LossForm,
    StepRecord, TrainBatch, TrainError, TrainerConfig,
};

use crate::config::{parse_name, pick, FileConfig};
use crate::report::{Report, Table};
use crate::{GradcheckArgs, Outcome, TrainArgs};

fn trainer_config(a: &crate::TrainerArgs, file: &FileConfig) -> anyhow::Result<TrainerConfig> {
    let f = &file.trainer;
    let d = TrainerConfig::default();
    Ok(TrainerConfig {
        temperature: pick(a.temperature, f.temperature, d.temperature),
        beta1: pick(a.beta1, f.beta1, d.beta1),
        beta2: pick(a.beta2, f.beta2, d.beta2),
        eps: pick(a.eps, f.eps, d.eps),
        weight_decay: pick(a.weight_decay, f.weight_decay, d.weight_decay),
        peak_lr: pick(a.lr, f.peak_lr, d.peak_lr),
        warmup_fraction: pick(a.warmup_fraction, f.warmup_fraction, d.warmup_fraction),
        batch_size: pick(a.batch_size, f.batch_size, d.batch_size),
        epochs: pick(a.epochs, f.epochs, d.epochs),
        seed: pick(a.seed, file.seed, d.seed),
        loss_form: match a.loss_form.as_ref().or(f.loss_form.as_ref()) {
            Some(s) => parse_name("loss form", s)?,
            None => d.loss_form,
        },
    })
}

#[derive(Serialize)]
struct TrainSettings {
    pairs: String,
    init: Option<String>,
    dim: usize,
    out_dim: usize,
    normalize: bool,
    trainer: TrainerConfig,
}

#[derive(Serialize)]
struct Gap {
    positive: f64,
    negative: f64,
}

#[derive(Serialize)]
struct TrainResults {
    pairs: usize,
    vocab: usize,
    parameters: usize,
    steps: usize,
    first_loss: Option<f64>,
    final_loss: Option<f64>,
    before: Gap,
    after: Gap,
    checkpoint: String,
}

fn write_trace(path: &std::path::Path, trace: &[StepRecord]) -> anyhow::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_jsonl(&mut out, trace)?;
    std::io::Write::flush(&mut out)?;
    Ok(())
}

pub fn train(a: TrainArgs, file: &FileConfig) -> anyhow::Result<Outcome> {
    let pairs = read_pairs(&a.pairs).with_context(|| format!("loading pairs from {}", a.pairs.display()))?;
    let cfg = trainer_config(&a.trainer, file)?;
    let e = &file.encoder;
    let dim = pick(a.dim, e.dim, 64);
    let out_dim = pick(a.out_dim, e.out_dim, dim);
    let normalize = pick(a.normalize, e.normalize, true);
    if dim == 0 || out_dim == 0 {
        bail!("encoder dimensions must be positive");
    }
    let model = match &a.init {
        Some(p) => EncoderModel::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => {
            let texts: Vec<&str> = pairs
                .iter()
                .flat_map(|p| [p.anchor.as_str(), p.positive.as_str(), p.hard_negative.as_str()])
                .collect();
            EncoderModel::new(&texts, dim, out_dim, normalize, cfg.seed)
        }
    };
    let before = pair_cosine_gap(&model, &pairs);
    let outcome = match run_training(model, &pairs, &cfg) {
        Ok(o) => o,
        Err(err) => {
            if let (Some(path), TrainError::Loss { trace, .. } | TrainError::Diverged { trace, .. }) = (&a.trace, &err)
            {
                write_trace(path, trace)?;
            }
            return Err(err.into());
        }
    };
    if let Some(path) = &a.trace {
        write_trace(path, &outcome.trace).with_context(|| format!("writing {}", path.display()))?;
    }
    outcome
        .model
        .save(&a.output)
        .with_context(|| format!("writing {}", a.output.display()))?;
    let after = pair_cosine_gap(&outcome.model, &pairs);

    let results = TrainResults {
        pairs: pairs.len(),
        vocab: outcome.model.vocab_size(),
        parameters: outcome.model.parameter_count(),
        steps: outcome.trace.len(),
        first_loss: outcome.trace.first().map(|r| r.loss),
        final_loss: outcome.trace.last().map(|r| r.loss),
        before: Gap {
            positive: before.0,
            negative: before.1,
        },
        after: Gap {
            positive: after.0,
            negative: after.1,
        },
        checkpoint: a.output.display().to_string(),
    };
    let mut t = Table::new(["", "cos(anchor, positive)", "cos(anchor, negative)", "loss"]);
    t.row([
        "before".to_string(),
        format!("{:.4}", before.0),
        format!("{:.4}", before.1),
        crate::report::fmt_opt(results.first_loss, 4),
    ]);
    t.row([
        "after".to_string(),
        format!("{:.4}", after.0),
        format!("{:.4}", after.1),
        crate::report::fmt_opt(results.final_loss, 4),
    ]);
    let settings = TrainSettings {
        pairs: a.pairs.display().to_string(),
        init: a.init.as_ref().map(|p| p.display().to_string()),
        dim,
        out_dim,
        normalize,
        trainer: cfg,
    };
    Ok(Outcome {
        report: Report::new(settings, results, Vec::new())?,
        table: t.render(),
        ok: true,
    })
}

pub fn gradcheck(a: GradcheckArgs) -> anyhow::Result<Outcome> {
    let form: LossForm = parse_name("loss form", &a.loss_form)?;
    let (model, batch) = match (&a.checkpoint, &a.pairs) {
        (Some(ckpt), Some(pairs)) => {
            let model = EncoderModel::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            let pairs = read_pairs(pairs)?;
            let take = &pairs[..a.batch.min(pairs.len())];
            let batch = TrainBatch::new(
                take.iter().map(|p| p.anchor.clone()).collect(),
                take.iter().map(|p| p.positive.clone()).collect(),
                take.iter().map(|p| p.hard_negative.clone()).collect(),
            )?;
            (model, batch)
        }
        _ => random_instance(a.seed, 40, 8, 6, 6),
    };
    let r = check_gradients(&model, &batch, a.temperature, form, a.coords, a.step, a.seed)?;
    let ok = r.max_rel_error < a.tolerance;
    let mut t = Table::new(["checked", "negligible", "max rel error", "tolerance", "result"]);
    t.row([
        r.checked.to_string(),
        r.negligible.to_string(),
        format!("{:.3e}", r.max_rel_error),
        format!("{:.0e}", a.tolerance),
        if ok { "pass" } else { "FAIL" }.to_string(),
    ]);
    let mut warnings = Vec::new();
    if let (false, Some(w)) = (ok, &r.worst) {
        warnings.push(format!("worst coordinate: {w}"));
    }
    let settings = serde_json::json!({
        "seed": a.seed,
        "coords": a.coords,
        "step": a.step,
        "temperature": a.temperature,
        "tolerance": a.tolerance,
        "loss_form": form,
        "checkpoint": a.checkpoint.as_ref().map(|p| p.display().to_string()),
    });
    Ok(Outcome {
        report: Report::new(settings, &r, warnings)?,
        table: t.render(),
        ok,
    })
}
