//! `triage` command line.
//!
//! ```text
//! triage <ingest|train|evaluate|rank|curve|serve> [--dataset PATH] [--keywords PATH]
//!        [--model lr|svm|tree|forest|lstm] [--seed INT] [--folds INT] [--out DIR]
//!        [--recall-mode positives|total]
//! ```
//!
//! Exit status is 0 on success, 1 on a usage error and 2 on a data error.
//! Errors go to stderr as `error_code: message`. `TRIAGE_LOG` sets the log
//! level (error, info, debug).

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use triage_core::corpus::{ingest, load_dataset, save_dataset, Dataset, KeywordList};
use triage_core::eval::{
    dataset_learning_curve, evaluate_dataset, recall_curve, write_learning_curve_csv, write_recall_csv,
    write_report_csv, ClassificationReport, CurvePoint, RecallCurve, RecallMode,
};
use triage_core::features::{FeatureConfig, TokenizeMode};
use triage_core::models::{load_model, save_model, ModelKind, TrainConfig};
use triage_core::pipeline::{build_queue, fit_feature_space, train_on_dataset, write_ranked_csv};
use triage_core::ModelBundle;
use triage_service::{RetrainRequest, Service, ServiceConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{message}")]
    Data { code: &'static str, message: String },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage_error",
            CliError::Data { code, .. } => code,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data { .. } => EXIT_DATA,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data { code: e.code(), message: e.to_string() }
            }
        }
    )*};
}

data_error!(
    triage_core::corpus::CorpusError,
    triage_core::models::ModelError,
    triage_core::pipeline::PipelineError,
    triage_core::eval::EvalError,
    triage_service::ServiceError
);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data {
            code: "io",
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "triage", version, about = "Suspicious-news triage: score posts, rank articles, collect verdicts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Keyword filter, comment cleaning and grouping by article.
    Ingest(IngestArgs),
    /// Train one model on every labelled post and save it.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation → report.csv.
    Evaluate(EvaluateArgs),
    /// Score every article and write the review queue → ranked.csv.
    Rank(RankArgs),
    /// Recall@K and learning-curve CSVs plus curves.json for plotting.
    Curve(CurveArgs),
    /// Start the review service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, default_value = "lr")]
    model: ModelKind,
    #[arg(long, default_value = "auto")]
    tokenizer: TokenizeMode,
}

impl ModelArgs {
    fn features(&self) -> FeatureConfig {
        FeatureConfig {
            tokenizer: self.tokenizer,
            ..FeatureConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    /// One keyword per line; the built-in list when absent.
    #[arg(long)]
    keywords: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u16).range(3..))]
    folds: u16,
    /// Name the metric columns micro_precision/micro_recall/micro_f1.
    #[arg(long)]
    micro_f1_alias: bool,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    /// Score with a saved model instead of training one.
    #[arg(long)]
    model_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CurveArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u16).range(3..))]
    folds: u16,
    #[arg(long, default_value = "positives")]
    recall_mode: RecallMode,
    /// Training fractions for the learning curve, ascending, in (0, 1].
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    fractions: Vec<f64>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    model_file: Option<PathBuf>,
    #[arg(long)]
    keywords: Option<PathBuf>,
    /// Verdict log; `<out>/feedback.jsonl` when absent.
    #[arg(long)]
    feedback: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Cross-validate the starting model so `/api/metrics` has numbers.
    #[arg(long)]
    evaluate: bool,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u16).range(3..))]
    folds: u16,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("TRIAGE_LOG", "error");
    let _ = env_logger::Builder::from_env(env).format_target(false).try_init();
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or_default();
            eprintln!("usage_error: {}", first.trim_start_matches("error: "));
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}: {}", e.code(), e);
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Rank(a) => cmd_rank(&a),
        Command::Curve(a) => cmd_curve(&a),
        Command::Serve(a) => cmd_serve(&a),
    }
}

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    if !path.is_file() {
        return Err(CliError::Data {
            code: "missing_input",
            message: format!("dataset {} does not exist", path.display()),
        });
    }
    Ok(load_dataset(path)?)
}

fn read_keywords(path: Option<&Path>) -> Result<KeywordList, CliError> {
    Ok(match path {
        Some(p) => KeywordList::from_file(p)?,
        None => KeywordList::default(),
    })
}

/// Creates `<out>/<name>`, refusing to overwrite any input.
fn output(out: &Path, name: &str, inputs: &[&Path]) -> Result<(PathBuf, BufWriter<File>), CliError> {
    std::fs::create_dir_all(out)?;
    let path = out.join(name);
    if let Ok(target) = path.canonicalize() {
        for input in inputs {
            if input.canonicalize().is_ok_and(|i| i == target) {
                return Err(CliError::Usage(format!(
                    "output {} would overwrite input {}",
                    path.display(),
                    input.display()
                )));
            }
        }
    }
    let file = File::create(&path)?;
    Ok((path, BufWriter::new(file)))
}

fn finish(path: PathBuf, mut w: BufWriter<File>) -> Result<(), CliError> {
    w.flush()?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn train_bundle(ds: &Dataset, m: &ModelArgs, seed: u64) -> Result<ModelBundle, CliError> {
    let cfg = TrainConfig::new(m.model, seed);
    let space = fit_feature_space(ds, m.model, &m.features())?;
    let model = train_on_dataset(ds, &space, &cfg)?;
    Ok(ModelBundle {
        model,
        space,
        config: cfg,
    })
}

fn cmd_ingest(a: &IngestArgs) -> Result<(), CliError> {
    let raw = read_dataset(&a.common.dataset)?;
    let keywords = read_keywords(a.keywords.as_deref())?;
    let outcome = ingest(&raw, &keywords)?;
    let mut inputs = vec![a.common.dataset.as_path()];
    inputs.extend(a.keywords.as_deref());
    let (path, w) = output(&a.common.out, "dataset.jsonl", &inputs)?;
    drop(w);
    save_dataset(&outcome.dataset, &path)?;
    log::info!("wrote {}", path.display());

    let stats = outcome.dataset.stats();
    let (path, mut w) = output(&a.common.out, "stats.json", &inputs)?;
    serde_json::to_writer_pretty(&mut w, &serde_json::json!({
        "candidates": outcome.candidates,
        "dropped": outcome.dropped,
        "dataset": stats,
    }))
    .map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    finish(path, w)
}

fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let ds = read_dataset(&a.common.dataset)?;
    let bundle = train_bundle(&ds, &a.model, a.common.seed)?;
    let (path, w) = output(&a.common.out, "model.json", &[&a.common.dataset])?;
    drop(w);
    save_model(&path, &bundle)?;
    log::info!("wrote {} ({})", path.display(), &bundle.fingerprint()[..12]);
    Ok(())
}

#[derive(Serialize)]
struct CvSummary<'a> {
    model: ModelKind,
    seed: u64,
    k: usize,
    folds: &'a [ClassificationReport],
    aggregate: &'a ClassificationReport,
    article: &'a ClassificationReport,
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let ds = read_dataset(&a.common.dataset)?;
    let cfg = TrainConfig::new(a.model.model, a.common.seed);
    let space = fit_feature_space::<f64>(&ds, a.model.model, &a.model.features())?;
    let eval = evaluate_dataset(&ds, &space, &cfg, a.folds.into())?;
    let kind = a.model.model.as_str();
    let article_name = format!("{kind}-article");
    let (path, mut w) = output(&a.common.out, "report.csv", &[&a.common.dataset])?;
    write_report_csv(
        &[
            (kind, &eval.cv.folds, &eval.cv.aggregate),
            (&article_name, &[], &eval.articles.report),
        ],
        &mut w,
        a.micro_f1_alias,
    )?;
    finish(path, w)?;

    let (path, mut w) = output(&a.common.out, "cv.json", &[&a.common.dataset])?;
    let summary = CvSummary {
        model: a.model.model,
        seed: a.common.seed,
        k: eval.cv.k,
        folds: &eval.cv.folds,
        aggregate: &eval.cv.aggregate,
        article: &eval.articles.report,
    };
    serde_json::to_writer_pretty(&mut w, &summary).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    finish(path, w)
}

fn cmd_rank(a: &RankArgs) -> Result<(), CliError> {
    let ds = read_dataset(&a.common.dataset)?;
    let bundle = match &a.model_file {
        Some(p) => load_model(p)?,
        None => train_bundle(&ds, &a.model, a.common.seed)?,
    };
    let (queue, _) = build_queue(&ds, &bundle.space, &bundle.model)?;
    let mut inputs = vec![a.common.dataset.as_path()];
    inputs.extend(a.model_file.as_deref());
    let (path, mut w) = output(&a.common.out, "ranked.csv", &inputs)?;
    write_ranked_csv(&queue, &mut w)?;
    finish(path, w)
}

#[derive(Serialize)]
struct Curves<'a> {
    model: ModelKind,
    seed: u64,
    recall: &'a RecallCurve,
    learning: &'a [CurvePoint],
}

fn cmd_curve(a: &CurveArgs) -> Result<(), CliError> {
    let ds = read_dataset(&a.common.dataset)?;
    let cfg = TrainConfig::new(a.model.model, a.common.seed);
    let space = fit_feature_space::<f64>(&ds, a.model.model, &a.model.features())?;
    let k = usize::from(a.folds);
    let eval = evaluate_dataset(&ds, &space, &cfg, k)?;
    let recall = recall_curve(&eval.articles.queue, &eval.articles.golds, a.recall_mode)?;
    let learning = dataset_learning_curve(&ds, &space, &cfg, k, &a.fractions)?;
    let inputs = [a.common.dataset.as_path()];

    let (path, mut w) = output(&a.common.out, "recall_at_k.csv", &inputs)?;
    write_recall_csv(&recall, &mut w)?;
    finish(path, w)?;
    let (path, mut w) = output(&a.common.out, "learning_curve.csv", &inputs)?;
    write_learning_curve_csv(&learning, &mut w)?;
    finish(path, w)?;
    let (path, mut w) = output(&a.common.out, "curves.json", &inputs)?;
    let curves = Curves {
        model: a.model.model,
        seed: a.common.seed,
        recall: &recall,
        learning: &learning,
    };
    serde_json::to_writer(&mut w, &curves).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    finish(path, w)
}

fn cmd_serve(a: &ServeArgs) -> Result<(), CliError> {
    let ds = read_dataset(&a.common.dataset)?;
    let initial = a.model_file.as_deref().map(load_model).transpose()?;
    let feedback = a.feedback.clone().unwrap_or_else(|| a.common.out.join("feedback.jsonl"));
    let cfg = ServiceConfig {
        feedback_log: feedback,
        train: TrainConfig::new(a.model.model, a.common.seed),
        features: a.model.features(),
        keywords: read_keywords(a.keywords.as_deref())?,
    };
    let service = Arc::new(Service::open(ds, initial, cfg)?);
    if a.evaluate {
        service.retrain(&RetrainRequest {
            evaluate: true,
            folds: Some(a.folds.into()),
            ..RetrainRequest::default()
        })?;
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.addr).await?;
        log::info!("serving on http://{}", listener.local_addr()?);
        triage_service::serve(listener, service).await
    })?;
    Ok(())
}
