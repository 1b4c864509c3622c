//! `ironylab`: run experiments, build reports, serve the annotation API.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use ironylab_core::annotate::{AnnotationStore, AppState};
use ironylab_core::corpus::{load_corpus, DatasetSpec};
use ironylab_core::gateway::{Gateway, MockScript, Provider, ResponseCache};
use ironylab_core::metrics::HashedNgramEmbedder;
use ironylab_core::pipeline::{extract_knowledge, ModelSettings, Strategy};
use ironylab_core::prompts::export_catalog;
use ironylab_core::runner::{self, read_log, report_from_log, ExperimentConfig};

#[derive(Parser)]
#[command(name = "ironylab", version, about = "Zero-shot irony detection, reasoning and understanding workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run(RunArgs),
    /// Compute the evaluation report for an existing result log.
    Report(ReportArgs),
    /// Serve the annotation API over a result log.
    Serve(ServeArgs),
    /// Knowledge bundle tools.
    Knowledge {
        #[command(subcommand)]
        command: KnowledgeCommand,
    },
    /// Prompt catalog tools.
    Prompts {
        #[command(subcommand)]
        command: PromptsCommand,
    },
    /// Print size, ironic ratio and average token length of a corpus file.
    Stats {
        /// One of isarcasm, semeval, gen, rq, hyp, reddit.
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        path: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Dataset preset, replacing the one in the config.
    #[arg(long)]
    dataset: Option<String>,
    /// Corpus file, replacing the one in the config.
    #[arg(long)]
    dataset_path: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep the existing result log and only run missing statements.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Also write report.json and report.csv into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print CSV instead of JSON.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Annotation store; defaults to annotations.jsonl next to the log.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Comma-separated annotator ids for round-robin assignment.
    #[arg(long, value_delimiter = ',')]
    annotators: Vec<String>,
    /// Show gold labels to annotators.
    #[arg(long)]
    reveal_gold: bool,
    /// Directory with built UI assets to serve at `/`.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum KnowledgeCommand {
    /// Ask a provider for a fresh knowledge bundle.
    Extract {
        #[arg(long)]
        provider: String,
        #[arg(long, default_value = "gpt-3.5-turbo")]
        model: String,
        /// Script for the mock provider.
        #[arg(long)]
        mock_script: Option<PathBuf>,
        /// Write the transcript and bundle here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PromptsCommand {
    /// Write every template and a manifest into a directory.
    Export {
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_provider(s: &str) -> Result<Provider> {
    Provider::parse(s).with_context(|| format!("unknown provider `{s}` (openai, gemini, mock)"))
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(d) = args.dataset {
        cfg.dataset.preset = Some(d);
        cfg.dataset.name = None;
    }
    if let Some(p) = args.dataset_path {
        cfg.dataset.path = p;
    }
    if let Some(s) = args.strategy {
        cfg.strategy = Strategy::parse(&s).with_context(|| format!("unknown strategy `{s}`"))?;
    }
    if let Some(p) = args.provider {
        cfg.provider = parse_provider(&p)?;
        if cfg.provider != Provider::Mock {
            cfg.mock_script = None;
        }
    }
    if let Some(m) = args.model {
        cfg.model = m;
    }
    if args.limit.is_some() {
        cfg.limit = args.limit;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = args.parallelism {
        cfg.parallelism = p;
    }
    if let Some(o) = args.out {
        cfg.out_dir = o;
    }
    let outcome = if args.resume {
        runner::resume(&cfg)?
    } else {
        runner::run_experiment(&cfg)?
    };
    let d = &outcome.report.detection;
    eprintln!(
        "{} / {}: {} statements ({} run, {} reused, {} rows skipped, {} log lines quarantined)",
        outcome.report.dataset,
        outcome.report.strategy,
        outcome.report.evaluated,
        outcome.executed,
        outcome.reused,
        outcome.skipped_rows,
        outcome.quarantined,
    );
    eprintln!(
        "P {:.3}  R {:.3}  F1 {:.3}  | provider calls {}, retries {}, cache hits {}",
        d.macro_precision,
        d.macro_recall,
        d.micro_f1,
        outcome.gateway.live_calls,
        outcome.gateway.retries,
        outcome.gateway.cache_hits
    );
    println!("{}", cfg.out_dir.join(runner::REPORT_JSON).display());
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let report = report_from_log(&args.log, args.annotations.as_deref(), &HashedNgramEmbedder::default())?;
    if let Some(dir) = &args.out {
        report.write(dir)?;
    }
    if args.csv {
        print!("{}", report.to_csv());
    } else {
        print!("{}", report.to_json());
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let contents = read_log(&args.log)?;
    if contents.records.is_empty() {
        bail!("{} has no result records", args.log.display());
    }
    let store_path = args.annotations.unwrap_or_else(|| {
        args.log
            .parent()
            .unwrap_or(Path::new("."))
            .join("annotations.jsonl")
    });
    let store = AnnotationStore::open(&store_path).with_context(|| format!("opening {}", store_path.display()))?;
    let state = AppState::new(&contents.records, store, &args.annotators)
        .with_reveal_gold(args.reveal_gold)
        .with_ui_dir(args.ui_dir);
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .with_context(|| format!("bad address {}:{}", args.host, args.port))?;
    eprintln!("serving {} items on http://{addr} (annotations in {})", contents.records.len(), store_path.display());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(ironylab_core::annotate::serve(Arc::new(state), addr))?;
    Ok(())
}

fn knowledge(command: KnowledgeCommand) -> Result<()> {
    let KnowledgeCommand::Extract {
        provider,
        model,
        mock_script,
        out,
    } = command;
    let provider = parse_provider(&provider)?;
    let gateway = match (provider, mock_script) {
        (Provider::Mock, Some(path)) => Gateway::mock(MockScript::load(&path).with_context(|| format!("reading {}", path.display()))?),
        (Provider::Mock, None) => bail!("the mock provider needs --mock-script"),
        _ => Gateway::new(ResponseCache::memory()),
    };
    let transcript = extract_knowledge(&gateway, &ModelSettings::new(provider, model))?;
    let json = serde_json::to_string_pretty(&transcript)? + "\n";
    match out {
        Some(path) => runner::write_atomic(&path, json.as_bytes())?,
        None => print!("{json}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Report(args) => report(args),
        Command::Serve(args) => serve(args),
        Command::Knowledge { command } => knowledge(command),
        Command::Prompts {
            command: PromptsCommand::Export { out },
        } => {
            let manifest = export_catalog(&out)?;
            eprintln!("wrote {} templates to {}", manifest.len(), out.display());
            Ok(())
        }
        Command::Stats { dataset, path } => {
            let loaded = load_corpus(&DatasetSpec::preset(&dataset, path)?)?;
            let s = loaded.corpus.stats();
            println!(
                "{}: size {}  ironic ratio {:.4}  avg length {:.2}  skipped rows {}",
                loaded.corpus.name(),
                s.size,
                s.ironic_ratio,
                s.avg_token_length,
                loaded.skipped.len()
            );
            Ok(())
        }
    }
}
