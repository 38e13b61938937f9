use std::collections::BTreeSet;

use anyhow::{bail, Context};
use serde::Serialize;

use vqaeval::augment::SynonymLookup;
use vqaeval::embedder::{score_dataset, score_sample, FileStore, HttpBackend, HttpConfig, PromptStyle};
use vqaeval::model::split_validation_test;
use vqaeval::properties::{exact_match, vqa_score};
use vqaeval::stats::{AlphaMetric, VarianceKind};
use vqaeval::textmetrics::{formulaic_score, FormulaicMetric, MetricConfig, RougeMode};
use vqaeval::trainer::EncoderModel;
use vqaeval::{
    assess as assess_predictions, krippendorff_alpha, load_samples, spearman, write_samples, AnnotationMatrix,
    EmbeddingBackend, PredictionEntry, PredictionSet, PropertyConfig, Sample,
};

use crate::config::{parse_name, pick, FileConfig, ScoreSection};
use crate::report::{fmt_opt, Report, Table};
use crate::{AssessArgs, Outcome, ScoreArgs, ScorerArgs, SplitArgs, StatsArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Classical {
    ExactMatch,
    VqaScore,
}

enum Scorer {
    Formulaic {
        metric: FormulaicMetric,
        config: MetricConfig,
        synonyms: Box<SynonymLookup>,
    },
    Classical(Classical),
    Embedding {
        backend: Box<dyn EmbeddingBackend>,
        style: PromptStyle,
        batch_size: usize,
    },
}

/// Resolved scorer settings, echoed into the report.
#[derive(Debug, Serialize)]
struct ScorerSettings {
    backend: String,
    metric: Option<String>,
    prompt_style: Option<PromptStyle>,
    batch_size: Option<usize>,
    concat_question: Option<bool>,
    rouge_mode: Option<RougeMode>,
    bleu_smoothing: Option<f64>,
    source: Option<String>,
}

fn build_scorer(a: &ScorerArgs, f: &ScoreSection) -> anyhow::Result<(Scorer, ScorerSettings)> {
    let metric = a.metric.clone().or_else(|| f.metric.clone());
    let backend = match (&a.backend, &a.metric) {
        (Some(b), _) => b.clone(),
        (None, Some(_)) => "metric".to_string(),
        (None, None) => f
            .backend
            .clone()
            .unwrap_or_else(|| if metric.is_some() { "metric" } else { "toy" }.to_string()),
    };
    let mut settings = ScorerSettings {
        backend: backend.clone(),
        metric: None,
        prompt_style: None,
        batch_size: None,
        concat_question: None,
        rouge_mode: None,
        bleu_smoothing: None,
        source: None,
    };
    if backend == "metric" {
        let name = metric.context("--backend metric needs --metric")?;
        settings.metric = Some(name.clone());
        let classical = match name.as_str() {
            "exact_match" => Some(Classical::ExactMatch),
            "vqa_score" => Some(Classical::VqaScore),
            _ => None,
        };
        if let Some(c) = classical {
            return Ok((Scorer::Classical(c), settings));
        }
        let metric: FormulaicMetric = name.parse()?;
        let mut config = MetricConfig::default();
        config.concat_question = if a.no_concat_question {
            false
        } else {
            f.concat_question.unwrap_or(config.concat_question)
        };
        if let Some(m) = a.rouge_mode.as_ref().or(f.rouge_mode.as_ref()) {
            config.rouge_mode = parse_name("rouge mode", m)?;
        }
        config.bleu_smoothing = a.bleu_smoothing.or(f.bleu_smoothing);
        let mut synonyms = SynonymLookup::default();
        if let Some(dir) = &a.wordnet_dir {
            let n = synonyms.load_wordnet_dir(dir)?;
            log::info!("loaded {n} synsets from {}", dir.display());
        }
        settings.concat_question = Some(config.concat_question);
        settings.rouge_mode = Some(config.rouge_mode);
        settings.bleu_smoothing = config.bleu_smoothing;
        return Ok((
            Scorer::Formulaic {
                metric,
                config,
                synonyms: Box::new(synonyms),
            },
            settings,
        ));
    }

    let style = match a.prompt_style.as_ref().or(f.prompt_style.as_ref()) {
        Some(s) => parse_name("prompt style", s)?,
        None => PromptStyle::default(),
    };
    let batch_size = pick(a.batch_size, f.batch_size, 32);
    settings.prompt_style = Some(style);
    settings.batch_size = Some(batch_size);
    let backend: Box<dyn EmbeddingBackend> = match backend.as_str() {
        "file" => {
            let path = a
                .store
                .clone()
                .or_else(|| f.store.clone())
                .context("--backend file needs --store")?;
            settings.source = Some(path.display().to_string());
            Box::new(FileStore::load(&path).with_context(|| format!("loading {}", path.display()))?)
        }
        "http" => {
            let url = a
                .url
                .clone()
                .or_else(|| f.url.clone())
                .context("--backend http needs --url")?;
            settings.source = Some(url.clone());
            let mut cfg = HttpConfig::new(url);
            cfg.batch_size = batch_size;
            Box::new(HttpBackend::new(cfg)?)
        }
        "toy" => {
            let path = a
                .checkpoint
                .clone()
                .or_else(|| f.checkpoint.clone())
                .context("--backend toy needs --checkpoint (see `vqaeval train`)")?;
            settings.source = Some(path.display().to_string());
            Box::new(EncoderModel::load(&path).with_context(|| format!("loading {}", path.display()))?)
        }
        other => bail!("unknown backend `{other}` (expected metric, file, http or toy)"),
    };
    Ok((
        Scorer::Embedding {
            backend,
            style,
            batch_size,
        },
        settings,
    ))
}

/// One predicted score per sample, in input order.
fn predict(scorer: &Scorer, samples: &[Sample], warnings: &mut Vec<String>) -> anyhow::Result<Vec<f64>> {
    match scorer {
        Scorer::Formulaic {
            metric,
            config,
            synonyms,
        } => {
            let mut empty = 0;
            let out = samples
                .iter()
                .map(|s| {
                    let r = formulaic_score(&s.question, &s.answer, &s.response, *metric, config, synonyms);
                    empty += usize::from(r.empty_input);
                    r.value
                })
                .collect();
            if empty > 0 {
                warnings.push(format!(
                    "{empty} samples had an empty side after tokenization and scored 0"
                ));
            }
            Ok(out)
        }
        Scorer::Classical(Classical::ExactMatch) => Ok(samples
            .iter()
            .map(|s| f64::from(exact_match(&s.response, &s.answer)))
            .collect()),
        Scorer::Classical(Classical::VqaScore) => samples
            .iter()
            .map(|s| {
                vqa_score(&s.response, s.candidates.as_deref().unwrap_or_default())
                    .with_context(|| format!("sample `{}`", s.id))
            })
            .collect(),
        Scorer::Embedding {
            backend,
            style,
            batch_size,
        } => {
            if samples.iter().all(|s| s.human_score.is_some()) {
                let set = score_dataset(backend.as_ref(), samples, *style, *batch_size)?;
                Ok(set.predicted())
            } else {
                samples
                    .iter()
                    .map(|s| Ok(score_sample(backend.as_ref(), s, *style)?))
                    .collect()
            }
        }
    }
}

fn prediction_set(samples: &[Sample], predicted: &[f64]) -> anyhow::Result<PredictionSet> {
    let entries = samples
        .iter()
        .zip(predicted)
        .map(|(s, &p)| {
            let human = s
                .human_score
                .with_context(|| format!("sample `{}` has no human_score", s.id))?;
            Ok(PredictionEntry {
                sample_id: s.id.clone(),
                predicted: p,
                human,
                part: s.part,
                source_dataset: s.source_dataset.clone(),
                group_id: s.group_id.clone(),
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(PredictionSet::new(entries)?)
}

fn load(path: &std::path::Path) -> anyhow::Result<Vec<Sample>> {
    load_samples(path).with_context(|| format!("loading samples from {}", path.display()))
}

#[derive(Serialize)]
struct ScoreResults {
    samples: usize,
    mean_predicted: Option<f64>,
    spearman: Option<f64>,
    output: Option<String>,
    scores: Vec<ScoreRow>,
}

#[derive(Serialize)]
struct ScoreRow {
    id: String,
    predicted: f64,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn score(a: ScoreArgs, file: &FileConfig) -> anyhow::Result<Outcome> {
    let samples = load(&a.input)?;
    let (scorer, settings) = build_scorer(&a.scorer, &file.score)?;
    let mut warnings = Vec::new();
    let predicted = predict(&scorer, &samples, &mut warnings)?;

    let human: Option<Vec<f64>> = samples.iter().map(|s| s.human_score).collect();
    let rho = match &human {
        Some(h) if h.len() >= 2 => match spearman(&predicted, h) {
            Ok(r) => Some(r),
            Err(e) => {
                warnings.push(format!("spearman unavailable: {e}"));
                None
            }
        },
        _ => None,
    };
    if let Some(out) = &a.output {
        prediction_set(&samples, &predicted)?
            .save(out)
            .with_context(|| format!("writing {}", out.display()))?;
    }

    let results = ScoreResults {
        samples: samples.len(),
        mean_predicted: mean(&predicted),
        spearman: rho,
        output: a.output.as_ref().map(|p| p.display().to_string()),
        scores: samples
            .iter()
            .zip(&predicted)
            .map(|(s, &p)| ScoreRow {
                id: s.id.clone(),
                predicted: p,
            })
            .collect(),
    };
    let evaluator = settings.metric.clone().unwrap_or_else(|| settings.backend.clone());
    let mut t = Table::new(["id", "part", evaluator.as_str(), "human"]);
    for (s, p) in samples.iter().zip(&predicted) {
        t.row([
            s.id.clone(),
            s.part.as_str().to_string(),
            format!("{p:.4}"),
            fmt_opt(s.human_score, 2),
        ]);
    }
    let mut summary = Table::new(["samples", "mean score", "spearman"]);
    summary.row([
        samples.len().to_string(),
        fmt_opt(results.mean_predicted, 4),
        fmt_opt(rho, 4),
    ]);
    let table = format!("{}\n{}", t.render(), summary.render());
    Ok(Outcome {
        report: Report::new(settings, results, warnings)?,
        table,
        ok: true,
    })
}

#[derive(Serialize)]
struct AssessSettings {
    source: String,
    scorer: Option<ScorerSettings>,
    properties: PropertyConfig,
}

pub fn assess(a: AssessArgs, file: &FileConfig) -> anyhow::Result<Outcome> {
    let mut warnings = Vec::new();
    let (preds, source, scorer) = match (&a.predictions, &a.input) {
        (Some(p), _) => (
            PredictionSet::load(p).with_context(|| format!("loading predictions from {}", p.display()))?,
            p.display().to_string(),
            None,
        ),
        (None, Some(input)) => {
            let samples = load(input)?;
            let (scorer, settings) = build_scorer(&a.scorer, &file.score)?;
            let predicted = predict(&scorer, &samples, &mut warnings)?;
            (
                prediction_set(&samples, &predicted)?,
                input.display().to_string(),
                Some(settings),
            )
        }
        (None, None) => bail!("assess needs --predictions or --input"),
    };
    let mut cfg = PropertyConfig::default();
    cfg.variance_floor = pick(a.variance_floor, file.properties.variance_floor, cfg.variance_floor);
    if let Some(k) = a.variance_kind.as_ref().or(file.properties.variance_kind.as_ref()) {
        cfg.variance_kind = parse_name::<VarianceKind>("variance kind", k)?;
    }

    let r = assess_predictions(&preds, &cfg);
    warnings.extend(r.warnings.iter().cloned());
    warnings.extend(r.missing.iter().map(|m| format!("missing {m}")));

    let mut t = Table::new(["property", "value (x100)"]);
    for (part, v) in &r.scaled.alignment_per_part {
        t.row([format!("alignment {}", part.as_str()), format!("{v:.2}")]);
    }
    t.row(["alignment avg".to_string(), fmt_opt(r.scaled.alignment_avg, 2)]);
    t.row(["consistency".to_string(), fmt_opt(r.scaled.consistency, 2)]);
    t.row(["generalization".to_string(), fmt_opt(r.scaled.generalization, 2)]);
    for (ds, v) in &r.scaled.alignment_per_dataset {
        t.row([format!("alignment {ds}"), format!("{v:.2}")]);
    }
    let settings = AssessSettings {
        source,
        scorer,
        properties: cfg,
    };
    Ok(Outcome {
        report: Report::new(settings, &r, warnings)?,
        table: t.render(),
        ok: true,
    })
}

#[derive(Serialize, Default)]
struct StatsResults {
    annotators: Vec<String>,
    annotated_items: usize,
    alpha_interval: Option<f64>,
    alpha_ordinal: Option<f64>,
    predictions: Option<usize>,
    spearman: Option<f64>,
}

pub fn stats(a: StatsArgs) -> anyhow::Result<Outcome> {
    if a.input.is_none() && a.predictions.is_none() {
        bail!("stats needs --input and/or --predictions");
    }
    let mut warnings = Vec::new();
    let mut res = StatsResults::default();
    let mut t = Table::new(["statistic", "value"]);
    if let Some(input) = &a.input {
        let samples = load(input)?;
        let raws: Vec<_> = samples.iter().filter_map(|s| s.raw_annotations.as_ref()).collect();
        let ids: BTreeSet<&String> = raws.iter().flat_map(|r| r.keys()).collect();
        res.annotators = ids.iter().map(|s| s.to_string()).collect();
        res.annotated_items = raws.len();
        let rows = ids
            .iter()
            .map(|id| raws.iter().map(|r| r.get(*id).copied()).collect())
            .collect();
        let m = AnnotationMatrix::new(rows);
        for metric in [AlphaMetric::Interval, AlphaMetric::Ordinal] {
            let alpha = match m
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|m| krippendorff_alpha(m, metric))
            {
                Ok(v) => Some(v),
                Err(e) => {
                    warnings.push(format!("{metric:?} alpha unavailable: {e}").to_lowercase());
                    None
                }
            };
            match metric {
                AlphaMetric::Interval => res.alpha_interval = alpha,
                AlphaMetric::Ordinal => res.alpha_ordinal = alpha,
            }
        }
        t.row(["annotators".to_string(), res.annotators.len().to_string()]);
        t.row(["annotated items".to_string(), res.annotated_items.to_string()]);
        t.row(["alpha (interval)".to_string(), fmt_opt(res.alpha_interval, 4)]);
        t.row(["alpha (ordinal)".to_string(), fmt_opt(res.alpha_ordinal, 4)]);
    }
    if let Some(p) = &a.predictions {
        let preds = PredictionSet::load(p).with_context(|| format!("loading predictions from {}", p.display()))?;
        res.predictions = Some(preds.len());
        res.spearman = match spearman(&preds.predicted(), &preds.human()) {
            Ok(r) => Some(r),
            Err(e) => {
                warnings.push(format!("spearman unavailable: {e}"));
                None
            }
        };
        t.row(["predictions".to_string(), preds.len().to_string()]);
        t.row(["spearman".to_string(), fmt_opt(res.spearman, 4)]);
    }
    let settings = serde_json::json!({
        "input": a.input.as_ref().map(|p| p.display().to_string()),
        "predictions": a.predictions.as_ref().map(|p| p.display().to_string()),
    });
    Ok(Outcome {
        report: Report::new(settings, res, warnings)?,
        table: t.render(),
        ok: true,
    })
}

fn parse_ratio(s: &str) -> anyhow::Result<(u32, u32)> {
    let (v, t) = s.split_once(':').context("ratio must look like 3:7")?;
    Ok((v.trim().parse()?, t.trim().parse()?))
}

pub fn split(a: SplitArgs, file: &FileConfig) -> anyhow::Result<Outcome> {
    let samples = load(&a.input)?;
    let ratio = parse_ratio(&a.ratio)?;
    let seed = pick(a.seed, file.seed, 0);
    let s = split_validation_test(&samples, ratio, seed)?;
    write_samples(&a.validation, &s.validation).with_context(|| format!("writing {}", a.validation.display()))?;
    write_samples(&a.test, &s.test).with_context(|| format!("writing {}", a.test.display()))?;
    let groups = |xs: &[Sample]| xs.iter().map(|s| s.group_id.as_str()).collect::<BTreeSet<_>>().len();
    let mut t = Table::new(["side", "samples", "groups"]);
    t.row([
        "validation".to_string(),
        s.validation.len().to_string(),
        groups(&s.validation).to_string(),
    ]);
    t.row([
        "test".to_string(),
        s.test.len().to_string(),
        groups(&s.test).to_string(),
    ]);
    let settings = serde_json::json!({ "ratio": [ratio.0, ratio.1], "seed": seed });
    let results = serde_json::json!({
        "validation": s.validation.len(),
        "test": s.test.len(),
        "validation_groups": groups(&s.validation),
        "test_groups": groups(&s.test),
    });
    Ok(Outcome {
        report: Report::new(settings, results, s.warnings)?,
        table: t.render(),
        ok: true,
    })
}
