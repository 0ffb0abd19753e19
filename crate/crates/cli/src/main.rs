//! Command-line driver for the redaction-inference pipeline.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on bad input or
//! configuration.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use redactprobe_core::balance::Seed;
use redactprobe_core::classify::{ClassifierModel, ModelKind};
use redactprobe_core::corpus::{corpus_stats, parse_corpus, serialize_corpus, CorpusError};
use redactprobe_core::embed::{
    embed_base, import_embeddings, load_projection, save_projection, write_embeddings, Projection,
    EMBED_DIM,
};
use redactprobe_core::evade::{detect, fold, harden, HomoglyphMap};
use redactprobe_core::pipeline::{
    attack_document, ingest_documents, run_pipeline_on_samples, BalanceReport, Embedder, Mode,
    PipelineConfig, PipelineError,
};
use redactprobe_core::synthetic::generate_corpus;

#[derive(Parser)]
#[command(name = "redactprobe", version, about = "Infer entity types hidden under document redactions, and harden documents against that inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a corpus and emit redacted samples (JSON lines) plus class stats.
    Ingest {
        /// Corpus JSON file.
        #[arg(long)]
        corpus: PathBuf,
        /// Output samples file (JSON lines).
        #[arg(long)]
        samples_out: PathBuf,
        /// Optional per-class stats JSON output; printed to stdout otherwise.
        #[arg(long)]
        stats_out: Option<PathBuf>,
    },
    /// Generate a deterministic synthetic corpus.
    Generate {
        #[arg(long)]
        seed: u64,
        /// Documents per entity class.
        #[arg(long)]
        per_class: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline: balance, (fine-tune), embed, train, evaluate.
    Run(RunArgs),
    /// Predict the entity type under every asterisk run of a redacted document.
    Attack {
        /// Trained model file.
        #[arg(long)]
        model: PathBuf,
        /// Optional trained projection; identity when absent.
        #[arg(long)]
        projection: Option<PathBuf>,
        /// Redacted document; stdin when absent.
        #[arg(long)]
        doc: Option<PathBuf>,
        /// Output predictions (JSON lines); stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Substitute mapped characters with their confusables.
    Harden(TextArgs),
    /// Map confusables back to ASCII.
    Fold(TextArgs),
    /// Report confusable occurrences with positions and preimages.
    Detect(TextArgs),
    /// Pretty-print a metrics or balancing report.
    Report {
        /// Metrics report JSON (array of rows).
        #[arg(long, conflicts_with = "balance")]
        metrics: Option<PathBuf>,
        /// Balancing report JSON.
        #[arg(long)]
        balance: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Corpus JSON file.
    #[arg(long)]
    corpus: PathBuf,
    /// baseline | finetuned
    #[arg(long)]
    mode: String,
    /// dnn | cnn | rf
    #[arg(long)]
    model: String,
    #[arg(long)]
    seed: u64,
    /// Pipeline configuration JSON; flag values override its mode/seed.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for reports, model, and projection files.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Homoglyph map JSON; adds an evasion evaluation to the report.
    #[arg(long)]
    evasion_map: Option<PathBuf>,
    /// Imported base embeddings (RBEMB1 file keyed by sample id).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Write the base embeddings of all ingested samples to this file.
    #[arg(long)]
    embeddings_out: Option<PathBuf>,
}

#[derive(Args)]
struct TextArgs {
    /// Substitution map JSON; the built-in five-pair map when absent.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Input text file; stdin when absent.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn bad_input(message: impl Into<String>) -> Failure {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Failure {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::runtime(e.to_string())
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Failure {
        Failure::bad_input(e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Failure {
        match e {
            PipelineError::Balance(_) | PipelineError::MissingEmbedding(_) | PipelineError::Config(_) => {
                Failure::bad_input(e.to_string())
            }
            _ => Failure::runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Ingest {
            corpus,
            samples_out,
            stats_out,
        } => cmd_ingest(&corpus, &samples_out, stats_out.as_deref()),
        Command::Generate {
            seed,
            per_class,
            out,
        } => cmd_generate(seed, per_class, &out),
        Command::Run(args) => cmd_run(args),
        Command::Attack {
            model,
            projection,
            doc,
            out,
        } => cmd_attack(&model, projection.as_deref(), doc.as_deref(), out.as_deref()),
        Command::Harden(args) => cmd_text(args, TextOp::Harden),
        Command::Fold(args) => cmd_text(args, TextOp::Fold),
        Command::Detect(args) => cmd_text(args, TextOp::Detect),
        Command::Report { metrics, balance } => cmd_report(metrics.as_deref(), balance.as_deref()),
    }
}

fn read_corpus(path: &Path) -> Result<Vec<redactprobe_core::AnnotatedDocument>, Failure> {
    let bytes = fs::read(path)
        .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_corpus(&bytes)?)
}

fn cmd_ingest(corpus: &Path, samples_out: &Path, stats_out: Option<&Path>) -> Result<(), Failure> {
    let docs = read_corpus(corpus)?;
    let ingested = ingest_documents(&docs);
    for straddler in &ingested.straddling {
        eprintln!("warning: excluded {straddler}");
    }

    let mut out = String::new();
    for sample in &ingested.samples {
        out.push_str(&serde_json::to_string(sample).map_err(|e| Failure::runtime(e.to_string()))?);
        out.push('\n');
    }
    fs::write(samples_out, out)?;

    let stats = corpus_stats(&docs);
    let stats_json =
        serde_json::to_string_pretty(&stats).map_err(|e| Failure::runtime(e.to_string()))?;
    match stats_out {
        Some(path) => fs::write(path, stats_json)?,
        None => println!("{stats_json}"),
    }
    eprintln!(
        "ingested {} samples from {} documents",
        ingested.samples.len(),
        docs.len()
    );
    Ok(())
}

fn cmd_generate(seed: u64, per_class: usize, out: &Path) -> Result<(), Failure> {
    let docs = generate_corpus(per_class, Seed(seed));
    fs::write(out, serialize_corpus(&docs))?;
    eprintln!("wrote {} documents to {}", docs.len(), out.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mode: Mode = args.mode.parse().map_err(Failure::bad_input)?;
    let model_kind: ModelKind = args.model.parse().map_err(Failure::bad_input)?;

    let mut cfg = match &args.config {
        Some(path) => {
            let bytes = fs::read(path)
                .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_slice::<PipelineConfig>(&bytes)
                .map_err(|e| Failure::bad_input(format!("bad config {}: {e}", path.display())))?
        }
        None => PipelineConfig::new(mode, Seed(args.seed)),
    };
    cfg.mode = mode;
    cfg.seed = Seed(args.seed);

    let evasion_map = args
        .evasion_map
        .as_deref()
        .map(load_map)
        .transpose()?;

    let docs = read_corpus(&args.corpus)?;
    let ingested = ingest_documents(&docs);
    for straddler in &ingested.straddling {
        eprintln!("warning: excluded {straddler}");
    }

    if let Some(path) = &args.embeddings_out {
        let embeddings: Vec<_> = ingested
            .samples
            .iter()
            .map(|s| embed_base(&s.redacted_sentence))
            .collect();
        let rows = ingested
            .ids
            .iter()
            .map(String::as_str)
            .zip(embeddings.iter());
        let mut file = fs::File::create(path)?;
        write_embeddings(rows, EMBED_DIM, &mut file)
            .map_err(|e| Failure::runtime(e.to_string()))?;
    }

    let embedder = match &args.embeddings {
        Some(path) => {
            let mut file = fs::File::open(path)
                .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", path.display())))?;
            let map = import_embeddings(&mut file).map_err(|e| Failure::bad_input(e.to_string()))?;
            Embedder::Imported(map)
        }
        None => Embedder::Hashing,
    };

    let artifacts =
        run_pipeline_on_samples(ingested, model_kind, &cfg, &embedder, evasion_map.as_ref())?;

    fs::create_dir_all(&args.out_dir)?;
    let metrics_json = serde_json::to_string_pretty(&artifacts.reports)
        .map_err(|e| Failure::runtime(e.to_string()))?;
    fs::write(args.out_dir.join("metrics.json"), metrics_json)?;
    let balance_json = serde_json::to_string_pretty(&artifacts.balance_report)
        .map_err(|e| Failure::runtime(e.to_string()))?;
    fs::write(args.out_dir.join("balance.json"), balance_json)?;

    let model_path = args.out_dir.join(format!("model-{}.bin", model_kind.name()));
    let mut model_file = fs::File::create(&model_path)?;
    artifacts
        .model
        .save(&mut model_file)
        .map_err(|e| Failure::runtime(e.to_string()))?;

    let projection_path = args.out_dir.join("projection.bin");
    let mut projection_file = fs::File::create(&projection_path)?;
    save_projection(&artifacts.projection, &mut projection_file)
        .map_err(|e| Failure::runtime(e.to_string()))?;

    for report in &artifacts.reports {
        println!(
            "{} {}: train accuracy {:.4}, test accuracy {:.4}",
            report.model, report.mode, report.train_accuracy, report.test_accuracy
        );
    }
    if let Some(evasion) = &artifacts.evasion {
        println!(
            "evasion on {} real test sentences: undefended {:.4}, evaded {:.4}, folded {:.4}",
            evasion.real_test_samples,
            evasion.undefended_accuracy,
            evasion.evaded_accuracy,
            evasion.folded_accuracy
        );
    }
    Ok(())
}

fn cmd_attack(
    model_path: &Path,
    projection_path: Option<&Path>,
    doc: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let mut model_file = fs::File::open(model_path)
        .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", model_path.display())))?;
    let model =
        ClassifierModel::load(&mut model_file).map_err(|e| Failure::bad_input(e.to_string()))?;
    let projection = match projection_path {
        Some(path) => {
            let mut file = fs::File::open(path)
                .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", path.display())))?;
            load_projection(&mut file).map_err(|e| Failure::bad_input(e.to_string()))?
        }
        None => Projection::identity(EMBED_DIM),
    };
    let text = read_text(doc)?;
    let predictions = attack_document(&text, &model, &projection)?;
    let mut lines = String::new();
    for prediction in &predictions {
        lines.push_str(
            &serde_json::to_string(prediction).map_err(|e| Failure::runtime(e.to_string()))?,
        );
        lines.push('\n');
    }
    write_text(out, &lines)?;
    Ok(())
}

enum TextOp {
    Harden,
    Fold,
    Detect,
}

fn load_map(path: &Path) -> Result<HomoglyphMap, Failure> {
    let bytes = fs::read(path)
        .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", path.display())))?;
    HomoglyphMap::from_json(&bytes).map_err(|e| Failure::bad_input(e.to_string()))
}

fn cmd_text(args: TextArgs, op: TextOp) -> Result<(), Failure> {
    let map = match &args.map {
        Some(path) => load_map(path)?,
        None => HomoglyphMap::default(),
    };
    let text = read_text(args.input.as_deref())?;
    let output = match op {
        TextOp::Harden => harden(&text, &map),
        TextOp::Fold => fold(&text, &map),
        TextOp::Detect => {
            let mut lines = String::new();
            for hit in detect(&text, &map) {
                lines.push_str(&format!(
                    "{{\"position\":{},\"original\":\"{}\",\"confusable\":\"{}\"}}\n",
                    hit.position, hit.original, hit.confusable
                ));
            }
            lines
        }
    };
    write_text(args.out.as_deref(), &output)?;
    Ok(())
}

fn read_text(path: Option<&Path>) -> Result<String, Failure> {
    match path {
        Some(path) => Ok(fs::read_to_string(path)
            .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", path.display())))?),
        None => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            Ok(buf)
        }
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(path) => fs::write(path, text)?,
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn cmd_report(metrics: Option<&Path>, balance: Option<&Path>) -> Result<(), Failure> {
    match (metrics, balance) {
        (Some(path), None) => {
            let bytes = fs::read(path)
                .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", path.display())))?;
            let reports: Vec<redactprobe_core::classify::MetricsReport> =
                serde_json::from_slice(&bytes).map_err(|e| Failure::bad_input(e.to_string()))?;
            println!("{:<6} {:<10} {:>8} {:>8}", "model", "mode", "train", "test");
            for r in &reports {
                println!(
                    "{:<6} {:<10} {:>8.4} {:>8.4}",
                    r.model, r.mode, r.train_accuracy, r.test_accuracy
                );
            }
            Ok(())
        }
        (None, Some(path)) => {
            let bytes = fs::read(path)
                .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", path.display())))?;
            let report: BalanceReport =
                serde_json::from_slice(&bytes).map_err(|e| Failure::bad_input(e.to_string()))?;
            println!(
                "{:<10} {:>9} {:>14} {:>12} {:>13}",
                "class", "dataset", "undersampling", "fine-tuning", "oversampling"
            );
            for row in report.classes.iter().chain(std::iter::once(&report.totals)) {
                println!(
                    "{:<10} {:>9} {:>14} {:>12} {:>13}",
                    row.label, row.dataset, row.undersampling, row.fine_tuning, row.oversampling
                );
            }
            Ok(())
        }
        _ => Err(Failure::bad_input(
            "pass exactly one of --metrics or --balance",
        )),
    }
}
