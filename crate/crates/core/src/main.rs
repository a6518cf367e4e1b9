use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use assocbench::builder::{build_sets, shared_concepts};
use assocbench::config::{Overrides, RunConfig};
use assocbench::corpus::{load_manifest, write_manifest, Corpus};
use assocbench::experiment::{report_from_logs, run_experiment};
use assocbench::metrics::{compare, render_compare, Report, ReportFormat};
use assocbench::modelio::ModelClient;
use assocbench::refine::{self, RefineConfig};
use assocbench::runner::Agent;
use assocbench::server::{self, AppState, ServerOptions};
use assocbench::{MemoryStrategy, RoundKind};

#[derive(Parser)]
#[command(name = "assocbench", version, about = "Association-chain benchmark for vision-language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a manifest and write association sets for every sample.
    Build(BuildArgs),
    /// Resolution filter, model verification and human review.
    Refine(RefineArgs),
    /// Run the configured protocols against the configured backends.
    Run(RunArgs),
    /// Recompute a report from round logs, or compare two reports.
    Report(ReportArgs),
    /// Serve the human test session API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Corpus manifest (JSONL).
    corpus: PathBuf,
    #[arg(long, default_value_t = 5)]
    positives: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "sets.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct RefineArgs {
    corpus: PathBuf,
    #[arg(long, default_value = "refined")]
    out: PathBuf,
    #[arg(long, default_value_t = refine::DEFAULT_MIN_PIXELS)]
    min_pixels: u64,
    /// Run config supplying the verifier backends.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Primary verifier backend id.
    #[arg(long)]
    verifier: Option<String>,
    /// Fallback verifier backend id.
    #[arg(long)]
    fallback: Option<String>,
    /// Human review decisions to apply after the automatic stages.
    #[arg(long)]
    review: Option<PathBuf>,
    /// Ethic reports (a server review queue) to carry into the exported queue.
    #[arg(long)]
    flags: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated backend ids.
    #[arg(long, value_delimiter = ',')]
    backend: Option<Vec<String>>,
    /// Comma-separated round kinds: single, sync, async.
    #[arg(long, value_delimiter = ',')]
    kind: Option<Vec<RoundKind>>,
    /// Comma-separated cells; join pool concepts with `+`, e.g. `metal,furry+metal`.
    #[arg(long, value_delimiter = ',')]
    concepts: Option<Vec<String>>,
    /// Comma-separated strategies: NoM, StructM, NLM, ChainM.
    #[arg(long, value_delimiter = ',')]
    strategy: Option<Vec<MemoryStrategy>>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    examples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of round logs (usually `<out>/logs`).
    logs: Option<PathBuf>,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compare two report files (json or csv) cell by cell.
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with = "logs")]
    compare: Option<Vec<PathBuf>>,
}

#[derive(Args)]
struct ServeArgs {
    corpus: PathBuf,
    #[arg(long, env = "ASSOCBENCH_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Image root; defaults to the manifest's directory.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Static UI assets.
    #[arg(long)]
    ui: Option<PathBuf>,
    #[arg(long, default_value = "sessions")]
    state: PathBuf,
    #[arg(long, default_value_t = server::MAX_CAP)]
    max_cap: usize,
}

enum Failure {
    Config(String),
    Other(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Other(e.to_string())
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn load_corpus(path: &Path) -> Result<Corpus, Failure> {
    let (corpus, report) = load_manifest(path).map_err(config_err)?;
    log::info!(
        "{}: {} samples accepted, {} rejected",
        report.source,
        report.accepted,
        report.rejected
    );
    Ok(corpus)
}

fn cmd_build(a: BuildArgs) -> Result<u8, Failure> {
    let corpus = load_corpus(&a.corpus)?;
    let shared = shared_concepts(&corpus);
    let mut text = serde_json::to_string(&serde_json::json!({
        "format": "assocbench.sets/1",
        "kind": corpus.kind(),
        "seed": a.seed,
        "positives": a.positives,
        "negatives": a.negatives,
        "shared_concepts": shared.concepts,
    }))?;
    text.push('\n');
    for (i, s) in corpus.samples().iter().enumerate() {
        let sets = build_sets(&corpus, &s.id, a.positives, a.negatives, assocbench::rng::derive(a.seed, &[i as u64]))?;
        text.push_str(&serde_json::to_string(&sets)?);
        text.push('\n');
    }
    if let Some(dir) = a.out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&a.out, text)?;
    println!("wrote {} association sets to {}", corpus.len(), a.out.display());
    Ok(0)
}

fn single_client(agents: &BTreeMap<String, Agent>, id: &str) -> Result<Arc<dyn ModelClient>, Failure> {
    match agents.get(id) {
        Some(Agent::Single(c)) => Ok(c.clone()),
        Some(Agent::Moe { .. }) => Err(Failure::Config(format!("verifier '{id}' must be a single backend"))),
        None => Err(Failure::Config(format!("unknown backend id '{id}'"))),
    }
}

fn cmd_refine(a: RefineArgs) -> Result<u8, Failure> {
    let corpus = load_corpus(&a.corpus)?;
    let mut agents = BTreeMap::new();
    if a.verifier.is_some() || a.fallback.is_some() {
        let path = a.config.as_ref().ok_or_else(|| Failure::Config("--verifier needs --config".into()))?;
        let mut config = RunConfig::load(path).map_err(config_err)?;
        config.backend = a.verifier.iter().chain(a.fallback.iter()).cloned().collect();
        agents = config.build_agents().map_err(config_err)?;
    }
    let primary = a.verifier.as_deref().map(|id| single_client(&agents, id)).transpose()?;
    let fallback = a.fallback.as_deref().map(|id| single_client(&agents, id)).transpose()?;
    let config = RefineConfig {
        min_pixels: a.min_pixels,
        max_in_flight: a.max_in_flight,
        ..RefineConfig::default()
    };
    let out = refine::refine_corpus(&corpus, &config, primary.as_deref(), fallback.as_deref())?;
    let mut decisions = out.decisions;
    let mut refined = out.corpus;
    if let Some(review) = &a.review {
        let imported = refine::import_review_decisions(&refined, review)?;
        for d in &imported.diagnostics {
            log::warn!("{}:{}: {}", review.display(), d.line, d.message);
        }
        decisions.extend(imported.decisions);
        refined = imported.corpus;
    }
    let mut flags = BTreeMap::new();
    if let Some(path) = &a.flags {
        let (items, _) = refine::read_review_file(path)?;
        for item in items {
            if let Some(flag) = item.ethic_flag {
                flags.insert(item.sample_id, (flag, item.note));
            }
        }
    }
    std::fs::create_dir_all(&a.out)?;
    refine::write_decision_log(&a.out.join("decisions.jsonl"), &decisions)?;
    refine::export_review_queue(refined.samples(), &flags, &a.out.join("review_queue.jsonl"))?;
    std::fs::write(a.out.join("refined.jsonl"), write_manifest(&refined))?;
    println!(
        "kept {} of {} samples; outputs in {}",
        refined.len(),
        corpus.len(),
        a.out.display()
    );
    Ok(0)
}

fn install_ctrl_c(flag: Arc<AtomicBool>) {
    std::thread::spawn(move || {
        let Ok(rt) = tokio::runtime::Builder::new_current_thread().enable_all().build() else {
            return;
        };
        rt.block_on(async {
            if tokio::signal::ctrl_c().await.is_ok() {
                eprintln!("interrupt: finishing rounds in flight, skipping the rest");
                flag.store(true, Ordering::SeqCst);
            }
        });
    });
}

fn cmd_run(a: RunArgs) -> Result<u8, Failure> {
    let mut config = RunConfig::load(&a.config).map_err(config_err)?;
    config.apply(&Overrides {
        seed: a.seed,
        backend: a.backend,
        kinds: a.kind,
        concepts: a.concepts,
        strategies: a.strategy,
        rounds: a.rounds,
        cap: a.cap,
        examples: a.examples,
        out: a.out,
    });
    let corpus = load_corpus(&config.corpus)?;
    config.validate(&corpus).map_err(config_err)?;
    let agents = config.build_agents().map_err(config_err)?;
    let cancel = Arc::new(AtomicBool::new(false));
    install_ctrl_c(cancel.clone());
    let outcome = run_experiment(&config, &corpus, &agents, Some(&cancel))?;
    print!("{}", outcome.report.to_markdown());
    println!(
        "\n{} round logs in {}; config {} seed {}",
        outcome.log_paths.len(),
        config.out.join("logs").display(),
        outcome.report.meta.config_hash,
        config.seed
    );
    if outcome.skipped > 0 {
        eprintln!("{} rounds skipped after interrupt", outcome.skipped);
    }
    if outcome.transport_failures > 0 {
        eprintln!("{} rounds ended by transport failures", outcome.transport_failures);
        return Ok(2);
    }
    Ok(if outcome.skipped > 0 { 130 } else { 0 })
}

fn cmd_report(a: ReportArgs) -> Result<u8, Failure> {
    let text = if let Some(paths) = &a.compare {
        let left = Report::read(&paths[0])?;
        let right = Report::read(&paths[1])?;
        render_compare(&compare(&left, &right))
    } else {
        let logs = a.logs.ok_or_else(|| Failure::Config("give a log directory or --compare A B".into()))?;
        let report = report_from_logs(&logs)?;
        match a.format {
            ReportFormat::Json => report.to_json(),
            ReportFormat::Csv => report.to_csv(),
            ReportFormat::Markdown => report.to_markdown(),
        }
    };
    match &a.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_serve(a: ServeArgs) -> Result<u8, Failure> {
    let corpus = load_corpus(&a.corpus)?;
    let image_root = a
        .images
        .clone()
        .or_else(|| a.corpus.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let mut options = ServerOptions::new(image_root, a.state.clone());
    options.ui_dir = a.ui;
    options.max_cap = a.max_cap;
    let state = Arc::new(AppState::new(corpus, options)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        server::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Refine(a) => cmd_refine(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(m)) | Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
