use std::time::Duration;

use anyhow::{bail, Context};
use serde::Serialize;

use vqaeval::augment::{
    build_augmented_parts, describe_pairs, load_nli, nli_task, run_sample_tasks, word_count, write_pairs,
    AugmentConfig, DescribeReport, DescriptionCache, HttpTextGenerator, PartsReport, SynonymLookup, TaskReport,
    TaskTag, TrainingPair, LONG_RESPONSE_WORDS,
};
use vqaeval::{load_samples, write_samples, Part, Sample};

use crate::config::{pick, FileConfig};
use crate::report::{Report, Table};
use crate::{AugmentArgs, Outcome};

#[derive(Serialize)]
struct AugmentSettings {
    tasks: Vec<TaskTag>,
    seed: u64,
    templates_per_sample: usize,
    wordnet_dir: Option<String>,
    frequencies: Option<String>,
    descriptions_cache: Option<String>,
    generate_url: Option<String>,
}

#[derive(Serialize)]
struct AugmentResults {
    pairs: usize,
    tasks: Vec<TaskReport>,
    lexicon_words: usize,
    describe: Option<DescribeReport>,
    parts: Option<PartsReport>,
}

fn parse_tasks(spec: &str, have_nli: bool) -> anyhow::Result<Vec<TaskTag>> {
    if spec == "all" {
        return Ok(TaskTag::ALL
            .into_iter()
            .filter(|t| have_nli || *t != TaskTag::Nli)
            .collect());
    }
    let mut out = Vec::new();
    for name in spec.split(',') {
        let t: TaskTag = name.trim().parse().map_err(anyhow::Error::msg)?;
        if !out.contains(&t) {
            out.push(t);
        }
    }
    Ok(out)
}

fn display(p: &Option<std::path::PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

pub fn augment(a: AugmentArgs, file: &FileConfig) -> anyhow::Result<Outcome> {
    let f = &file.augment;
    let tasks = parse_tasks(&a.task, a.nli.is_some())?;
    let cfg = AugmentConfig {
        seed: pick(a.seed, file.seed, 0),
        templates_per_sample: pick(a.templates_per_sample, f.templates_per_sample, 1),
    };
    let wordnet_dir = a.wordnet_dir.clone().or_else(|| f.wordnet_dir.clone());
    let frequencies = a.frequencies.clone().or_else(|| f.frequencies.clone());
    let cache_path = a.descriptions_cache.clone().or_else(|| f.descriptions_cache.clone());
    let generate_url = a.generate_url.clone().or_else(|| f.generate_url.clone());
    let mut warnings = Vec::new();

    let needs_samples = tasks.iter().any(|t| *t != TaskTag::Nli) || a.parts_output.is_some();
    let samples: Vec<Sample> = match (&a.input, needs_samples) {
        (Some(p), _) => load_samples(p).with_context(|| format!("loading samples from {}", p.display()))?,
        (None, true) => bail!("--input is required for the sample-based tasks and --parts-output"),
        (None, false) => Vec::new(),
    };

    let mut lookup = SynonymLookup::default();
    if let Some(dir) = &wordnet_dir {
        let n = lookup.load_wordnet_dir(dir)?;
        log::info!("loaded {n} synsets from {}", dir.display());
    }
    if let Some(path) = &frequencies {
        lookup.load_frequencies(path)?;
    }
    if tasks.contains(&TaskTag::SynonymAntonym) && lookup.word_count() == 0 {
        warnings.push("no lexicon loaded (--wordnet-dir); synonym_antonym emits no pairs".to_string());
    }

    let mut cache = match &cache_path {
        Some(p) => DescriptionCache::open(p).with_context(|| format!("opening {}", p.display()))?,
        None => DescriptionCache::in_memory(),
    };
    let mut describe = None;
    if let Some(url) = &generate_url {
        let mut wanted: Vec<(String, String)> = Vec::new();
        if tasks.contains(&TaskTag::Description) {
            wanted.extend(samples.iter().map(|s| (s.question.clone(), s.answer.clone())));
        }
        if a.parts_output.is_some() {
            wanted.extend(
                samples
                    .iter()
                    .filter(|s| s.part == Part::P1 && word_count(&s.response) < LONG_RESPONSE_WORDS)
                    .map(|s| (s.question.clone(), s.response.clone())),
            );
        }
        let key = match &a.api_key_env {
            Some(var) => Some(std::env::var(var).with_context(|| format!("reading ${var}"))?),
            None => None,
        };
        let generator = HttpTextGenerator::new(url.clone(), key, Duration::from_secs(120));
        let report = describe_pairs(
            &generator,
            &wanted,
            &mut cache,
            pick(a.max_retries, f.max_retries, 4),
            pick(a.max_in_flight, f.max_in_flight, 4),
        )?;
        if report.failed > 0 {
            warnings.push(format!(
                "{} description requests failed and were skipped",
                report.failed
            ));
        }
        describe = Some(report);
    } else if tasks.contains(&TaskTag::Description) && cache.is_empty() {
        warnings.push("description cache is empty; descriptions come from templates only".to_string());
    }

    let mut pairs: Vec<TrainingPair> = Vec::new();
    let mut reports = Vec::new();
    if tasks.contains(&TaskTag::Nli) {
        let path = a.nli.as_ref().context("the nli task needs --nli")?;
        let records = load_nli(path).with_context(|| format!("loading {}", path.display()))?;
        let (p, r) = nli_task(&records);
        pairs.extend(p);
        reports.push(r);
    }
    let sample_tasks: Vec<TaskTag> = tasks.iter().copied().filter(|t| *t != TaskTag::Nli).collect();
    let run = run_sample_tasks(&samples, &sample_tasks, &lookup, &cache, &cfg);
    pairs.extend(run.pairs);
    reports.extend(run.reports);
    write_pairs(&a.output, &pairs).with_context(|| format!("writing {}", a.output.display()))?;

    let parts = match &a.parts_output {
        Some(out) => {
            let (variants, report) = build_augmented_parts(&samples, &lookup, &cache, cfg.seed);
            write_samples(out, &variants).with_context(|| format!("writing {}", out.display()))?;
            if !report.awaiting_filter.is_empty() {
                warnings.push(format!(
                    "{} generated samples await the manual filter before use",
                    report.awaiting_filter.len()
                ));
            }
            Some(report)
        }
        None => None,
    };

    let mut t = Table::new(["task", "opportunities", "emitted", "skipped"]);
    for r in &reports {
        t.row([
            r.task.to_string(),
            r.opportunities.to_string(),
            r.emitted.to_string(),
            r.skipped_total().to_string(),
        ]);
    }
    let settings = AugmentSettings {
        tasks,
        seed: cfg.seed,
        templates_per_sample: cfg.templates_per_sample,
        wordnet_dir: display(&wordnet_dir),
        frequencies: display(&frequencies),
        descriptions_cache: display(&cache_path),
        generate_url,
    };
    let results = AugmentResults {
        pairs: pairs.len(),
        tasks: reports,
        lexicon_words: lookup.word_count(),
        describe,
        parts,
    };
    Ok(Outcome {
        report: Report::new(settings, results, warnings)?,
        table: t.render(),
        ok: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_lists() {
        assert_eq!(parse_tasks("all", false).unwrap().len(), 3);
        assert_eq!(parse_tasks("all", true).unwrap()[0], TaskTag::Nli);
        assert_eq!(
            parse_tasks("synant, candidates,synant", false).unwrap(),
            [TaskTag::SynonymAntonym, TaskTag::Candidates]
        );
        assert!(parse_tasks("rank", false).is_err());
    }
}
