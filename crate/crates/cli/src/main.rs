mod annotate;
mod augment;
mod config;
mod eval;
mod report;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::FileConfig;
use report::Report;

#[derive(Debug, Parser)]
#[command(
    name = "vqaeval",
    version,
    about = "Semantic evaluation of VQA responses and of the evaluators"
)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the machine-readable JSON report here.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Print the JSON report to stdout instead of the table.
    #[arg(long, global = true)]
    json: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score each sample's response against its answer.
    Score(ScoreArgs),
    /// Alignment, Consistency and Generalization of an evaluator.
    Assess(AssessArgs),
    /// Generate contrastive training pairs and augmented sample parts.
    Augment(AugmentArgs),
    /// Train the bag-of-tokens encoder on training pairs.
    Train(TrainArgs),
    /// Compare analytic and finite-difference loss gradients.
    Gradcheck(GradcheckArgs),
    /// Annotator agreement and rank correlation summaries.
    Stats(StatsArgs),
    /// Run the annotation HTTP service.
    AnnotateServe(ServeArgs),
    /// Group-aware validation/test split.
    Split(SplitArgs),
    /// Replay an annotation event log and write annotated samples.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScorerArgs {
    /// Evaluator backend: metric, file, http or toy.
    #[arg(long)]
    pub backend: Option<String>,
    /// bleu2, bleu4, rouge2, rougeL, meteor, exact_match or vqa_score; implies --backend metric.
    #[arg(long)]
    pub metric: Option<String>,
    /// question_answer or single_word_summary.
    #[arg(long)]
    pub prompt_style: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Vector store JSONL for the file backend.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Embedding endpoint for the http backend.
    #[arg(long)]
    pub url: Option<String>,
    /// Encoder checkpoint for the toy backend.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Compare bare response and answer instead of question-prefixed strings.
    #[arg(long)]
    pub no_concat_question: bool,
    /// recall, precision or f1.
    #[arg(long)]
    pub rouge_mode: Option<String>,
    #[arg(long)]
    pub bleu_smoothing: Option<f64>,
    /// WordNet dictionary directory; METEOR uses it for synonym matches.
    #[arg(long)]
    pub wordnet_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Sample JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Prediction JSONL to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub scorer: ScorerArgs,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    /// Prediction JSONL from `score`.
    #[arg(long, visible_alias = "in", conflicts_with = "input")]
    pub predictions: Option<PathBuf>,
    /// Sample JSONL to score first.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[arg(long)]
    pub variance_floor: Option<f64>,
    /// population or sample.
    #[arg(long)]
    pub variance_kind: Option<String>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Sample JSONL (needed by every task except nli).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Training pair JSONL to write.
    #[arg(long)]
    pub output: PathBuf,
    /// nli, candidates, synant, descriptions or all.
    #[arg(long, default_value = "all")]
    pub task: String,
    /// NLI triples JSONL: {premise, entailment, contradiction}.
    #[arg(long)]
    pub nli: Option<PathBuf>,
    #[arg(long)]
    pub wordnet_dir: Option<PathBuf>,
    /// Two-column word/count file.
    #[arg(long)]
    pub frequencies: Option<PathBuf>,
    /// Description cache JSONL; read, and appended to when generating.
    #[arg(long)]
    pub descriptions_cache: Option<PathBuf>,
    /// Text-generation endpoint used to fill the description cache.
    #[arg(long)]
    pub generate_url: Option<String>,
    /// Environment variable holding a bearer token for the endpoint.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub templates_per_sample: Option<usize>,
    /// Also write Part 2 and Part 3 variants of the Part 1 samples here.
    #[arg(long)]
    pub parts_output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainerArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Peak learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub warmup_fraction: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// in_batch or literal.
    #[arg(long)]
    pub loss_form: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training pair JSONL.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Continue from this checkpoint instead of a fresh model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub out_dim: Option<usize>,
    /// L2-normalize encoder outputs.
    #[arg(long)]
    pub normalize: Option<bool>,
    /// Per-step loss trace JSONL.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub trainer: TrainerArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Coordinates to check (non-negligible ones).
    #[arg(long, default_value_t = 100)]
    pub coords: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 0.1)]
    pub temperature: f64,
    /// Exit non-zero when the max relative error reaches this.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// in_batch or literal.
    #[arg(long, default_value = "in_batch")]
    pub loss_form: String,
    /// Check this checkpoint on a batch from --pairs instead of a seeded toy model.
    #[arg(long, requires = "pairs")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Batch size taken from --pairs.
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Sample JSONL; agreement over `raw_annotations`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Prediction JSONL; Spearman between predicted and human scores.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SessionArgs {
    /// Comma-separated annotator ids.
    #[arg(long, value_delimiter = ',')]
    pub annotators: Option<Vec<String>>,
    /// Submissions needed to complete a task.
    #[arg(long)]
    pub required: Option<usize>,
    /// yes_majority or no_majority.
    #[arg(long)]
    pub keep_rule: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Event log (created if missing, replayed if present).
    #[arg(long)]
    pub log: PathBuf,
    /// Where POST /api/export writes.
    #[arg(long)]
    pub export: PathBuf,
    #[arg(long)]
    pub addr: Option<String>,
    /// Browser bundle served at /.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[command(flatten)]
    pub session: SessionArgs,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub validation: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// validation:test weights.
    #[arg(long, default_value = "3:7")]
    pub ratio: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Drop samples whose filter labels fail the keep rule.
    #[arg(long)]
    pub apply_filter: bool,
    #[command(flatten)]
    pub session: SessionArgs,
}

/// What a subcommand hands back for printing.
pub struct Outcome {
    pub report: Report,
    pub table: String,
    /// False when the command ran but its check failed (non-zero exit).
    pub ok: bool,
}

fn run(cli: Cli) -> anyhow::Result<Option<Outcome>> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let outcome = match cli.command {
        Command::Score(a) => eval::score(a, &file)?,
        Command::Assess(a) => eval::assess(a, &file)?,
        Command::Stats(a) => eval::stats(a)?,
        Command::Split(a) => eval::split(a, &file)?,
        Command::Augment(a) => augment::augment(a, &file)?,
        Command::Train(a) => train::train(a, &file)?,
        Command::Gradcheck(a) => train::gradcheck(a)?,
        Command::Export(a) => annotate::export(a, &file)?,
        Command::AnnotateServe(a) => {
            annotate::serve(a, &file)?;
            return Ok(None);
        }
    };
    if let Some(path) = &cli.report {
        outcome.report.write(path)?;
    }
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&outcome.report)?);
    } else {
        print!("{}", outcome.table);
        for w in &outcome.report.warnings {
            eprintln!("warning: {w}");
        }
    }
    Ok(Some(outcome))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(Some(o)) if !o.ok => ExitCode::FAILURE,
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
