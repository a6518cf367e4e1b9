//! A full `run`: every configured cell against every selected backend, with
//! round logs and reports written under the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use crate::builder::{make_round, RoundKind};
use crate::config::RunConfig;
use crate::corpus::Corpus;
use crate::metrics::{aggregate, MetricsError, Report, ReportFormat, ReportMeta};
use crate::roundlog::{self, LogError, LoggedRun};
use crate::runner::{run_rounds, run_single_step, Agent, RoundResult, RunError, RunParams, SingleStepRun, Terminal};
use crate::rng;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("logs in {0} come from different configurations")]
    MixedLogs(String),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Report,
    pub log_paths: Vec<PathBuf>,
    /// Chain rounds and single-step trials ended by a transport failure.
    pub transport_failures: usize,
    /// Rounds never started because of cancellation.
    pub skipped: usize,
}

fn file_part(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn kind_name(k: RoundKind) -> &'static str {
    match k {
        RoundKind::SingleStep => "single",
        RoundKind::Synchronous => "sync",
        RoundKind::Asynchronous => "async",
    }
}

/// Seed of round `r` in a cell. Backends and strategies share it, so they are
/// compared on the same starting samples and candidate draws.
pub fn round_seed(seed: u64, kind: RoundKind, cell: &str, r: usize) -> u64 {
    rng::derive(seed, &[rng::hash_str(kind_name(kind)), rng::hash_str(cell), r as u64])
}

fn run_params(config: &RunConfig, strategy: crate::memory::MemoryStrategy, round_id: u64) -> RunParams {
    RunParams {
        strategy,
        memory: config.memory,
        templates: config.templates.clone(),
        deadline: config.deadline(),
        round_id,
    }
}

pub fn report_paths(out: &Path) -> [(PathBuf, ReportFormat); 3] {
    [
        (out.join("report.json"), ReportFormat::Json),
        (out.join("report.csv"), ReportFormat::Csv),
        (out.join("report.md"), ReportFormat::Markdown),
    ]
}

/// Runs the configured experiment. The config must already be validated
/// against `corpus`. Logs go to `out/logs`, reports to `out/report.*`.
pub fn run_experiment(
    config: &RunConfig,
    corpus: &Corpus,
    agents: &BTreeMap<String, Agent>,
    cancel: Option<&AtomicBool>,
) -> Result<RunOutcome, ExperimentError> {
    let hash = config.hash();
    let logs = config.out.join("logs");
    let cancelled = || cancel.is_some_and(|c| c.load(Ordering::SeqCst));
    let mut log_paths = Vec::new();
    let mut rounds: Vec<RoundResult> = Vec::new();
    let mut singles: Vec<SingleStepRun> = Vec::new();
    let mut skipped = 0;
    clear_logs(&logs)?;

    for backend in config.selected_backends() {
        let agent = &agents[&backend];
        let mut plans = Vec::new();
        let mut names = Vec::new();
        for &kind in &config.kinds {
            for cell in config.cells(kind) {
                let label = cell.join("-");
                for &strategy in &config.strategies {
                    let round_id = |s: u64| rng::derive(s, &[rng::hash_str(&backend), rng::hash_str(strategy.as_str())]);
                    if kind == RoundKind::SingleStep {
                        if cancelled() {
                            skipped += 1;
                            continue;
                        }
                        let seed = round_seed(config.seed, kind, &label, 0);
                        let params = run_params(config, strategy, round_id(seed));
                        let run = run_single_step(corpus, &cell[0], agent, &params, config.rounds, seed, config.examples)?;
                        let path = logs.join(format!(
                            "{}__single__{}__{}.jsonl",
                            file_part(&backend),
                            file_part(&label),
                            strategy.as_str()
                        ));
                        roundlog::write_file(&path, &roundlog::render_single_log(&run, config.seed, &hash))?;
                        log_paths.push(path);
                        singles.push(run);
                        continue;
                    }
                    for r in 0..config.rounds {
                        let seed = round_seed(config.seed, kind, &label, r);
                        let plan = make_round(corpus, kind, &cell, config.cap, seed, config.examples, config.segment_len)
                            .map_err(RunError::from)?;
                        plans.push((plan, run_params(config, strategy, round_id(seed))));
                        names.push(format!(
                            "{}__{}__{}__{}__r{r:04}.jsonl",
                            file_part(&backend),
                            kind_name(kind),
                            file_part(&label),
                            strategy.as_str()
                        ));
                    }
                }
            }
        }
        let results = run_rounds(corpus, &plans, agent, config.max_parallel, cancel);
        for (name, result) in names.into_iter().zip(results) {
            let Some(result) = result else {
                skipped += 1;
                continue;
            };
            let run = result?;
            let path = logs.join(name);
            roundlog::write_file(&path, &roundlog::render_chain_log(&run, config.seed, &hash))?;
            log_paths.push(path);
            rounds.push(run.result);
        }
    }

    let transport_failures = rounds.iter().filter(|r| r.terminal == Terminal::Transport).count()
        + singles.iter().map(|s| s.transport_failures).sum::<usize>();
    let report = aggregate(&rounds, &singles, ReportMeta { config_hash: hash, seed: config.seed });
    for (path, format) in report_paths(&config.out) {
        report.write(&path, format)?;
    }
    Ok(RunOutcome {
        report,
        log_paths,
        transport_failures,
        skipped,
    })
}

/// Removes round logs left by an earlier run into the same directory, so a
/// recomputed report never mixes two runs.
fn clear_logs(dir: &Path) -> Result<(), LogError> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Ok(());
    };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "jsonl") {
            std::fs::remove_file(&path).map_err(|source| LogError::Io { path: path.clone(), source })?;
        }
    }
    Ok(())
}

/// Rebuilds the report from the round logs in `dir` alone.
pub fn report_from_logs(dir: &Path) -> Result<Report, ExperimentError> {
    let runs = roundlog::read_dir(dir)?;
    let mut meta: Option<ReportMeta> = None;
    let mut rounds = Vec::new();
    let mut singles = Vec::new();
    for run in runs {
        let (hash, seed) = match run {
            LoggedRun::Chain { config_hash, seed, result } => {
                rounds.push(result);
                (config_hash, seed)
            }
            LoggedRun::Single { config_hash, seed, run } => {
                singles.push(run);
                (config_hash, seed)
            }
        };
        match &meta {
            None => meta = Some(ReportMeta { config_hash: hash, seed }),
            Some(m) if m.config_hash != hash => return Err(ExperimentError::MixedLogs(dir.display().to_string())),
            Some(_) => {}
        }
    }
    Ok(aggregate(&rounds, &singles, meta.unwrap_or_default()))
}
