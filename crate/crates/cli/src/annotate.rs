use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::Context;
use serde::Serialize;

use vqaeval::annotation::{read_events, AnnotationService, KeepRule, Session, SessionConfig};
use vqaeval::{load_samples, write_samples};
use vqaeval_annotate::{router, ServerConfig};

use crate::config::{pick, FileConfig};
use crate::report::{Report, Table};
use crate::{ExportArgs, Outcome, ServeArgs, SessionArgs};

fn session_config(a: &SessionArgs, file: &FileConfig) -> anyhow::Result<SessionConfig> {
    let f = &file.annotate;
    let d = SessionConfig::default();
    Ok(SessionConfig {
        annotators: pick(a.annotators.clone(), f.annotators.clone(), d.annotators),
        required: pick(a.required, f.required, d.required),
        keep_rule: match a.keep_rule.as_ref().or(f.keep_rule.as_ref()) {
            Some(s) => s.parse::<KeepRule>().map_err(anyhow::Error::msg)?,
            None => d.keep_rule,
        },
        alpha_metric: d.alpha_metric,
    })
}

pub fn serve(a: ServeArgs, file: &FileConfig) -> anyhow::Result<()> {
    let samples = load_samples(&a.input).with_context(|| format!("loading samples from {}", a.input.display()))?;
    let cfg = session_config(&a.session, file)?;
    let (service, opened) = AnnotationService::open(samples, cfg, &a.log)?;
    if opened.truncated_bytes > 0 {
        log::warn!("dropped {} bytes of a torn trailing event", opened.truncated_bytes);
    }
    eprintln!("replayed {} events from {}", opened.replayed_events, a.log.display());
    let addr: SocketAddr = pick(a.addr.clone(), file.annotate.addr.clone(), "127.0.0.1:8080".to_string())
        .parse()
        .context("parsing --addr")?;
    let app = router(
        Arc::new(service),
        ServerConfig {
            export_path: a.export.clone(),
            static_dir: a.static_dir.clone().or_else(|| file.annotate.static_dir.clone()),
        },
    );
    eprintln!("serving on http://{addr}");
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(vqaeval_annotate::serve(addr, app))?;
    Ok(())
}

#[derive(Serialize)]
struct ExportResults {
    events: usize,
    written: usize,
    complete: usize,
    partial: usize,
    removed: Vec<vqaeval::annotation::Removal>,
    output: String,
}

pub fn export(a: ExportArgs, file: &FileConfig) -> anyhow::Result<Outcome> {
    let samples = load_samples(&a.input).with_context(|| format!("loading samples from {}", a.input.display()))?;
    let cfg = session_config(&a.session, file)?;
    let replayed = read_events(&a.log)?;
    let mut warnings = Vec::new();
    if replayed.truncated_bytes > 0 {
        warnings.push(format!(
            "ignored {} bytes of a torn trailing event",
            replayed.truncated_bytes
        ));
    }
    let session = Session::replay(samples, cfg.clone(), &replayed.events)?;
    let annotated = session.annotated_samples();
    let (kept, removed) = if a.apply_filter {
        let outcome = session.apply_filter_outcomes(&annotated)?;
        (outcome.kept, outcome.removed)
    } else {
        (annotated, Vec::new())
    };
    write_samples(&a.output, &kept).with_context(|| format!("writing {}", a.output.display()))?;
    let scored = kept.iter().filter(|s| s.raw_annotations.is_some());
    let complete = scored.clone().filter(|s| s.human_score.is_some()).count();
    let results = ExportResults {
        events: replayed.events.len(),
        written: kept.len(),
        complete,
        partial: scored.count() - complete,
        removed,
        output: a.output.display().to_string(),
    };
    if results.partial > 0 {
        warnings.push(format!(
            "{} samples have fewer than {} scores",
            results.partial, cfg.required
        ));
    }
    let mut t = Table::new(["events", "written", "complete", "partial", "removed"]);
    t.row([
        results.events.to_string(),
        results.written.to_string(),
        results.complete.to_string(),
        results.partial.to_string(),
        results.removed.len().to_string(),
    ]);
    let settings = serde_json::json!({
        "annotators": cfg.annotators,
        "required": cfg.required,
        "keep_rule": cfg.keep_rule,
        "apply_filter": a.apply_filter,
    });
    Ok(Outcome {
        report: Report::new(settings, results, warnings)?,
        table: t.render(),
        ok: true,
    })
}
