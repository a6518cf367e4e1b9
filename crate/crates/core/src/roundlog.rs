//! Round log files: one JSON record per line, enough to replay a round and
//! recompute every metric offline.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::builder::{Exhausted, RoundPlan};
use crate::memory::{MemoryBase, MemoryStrategy};
use crate::runner::{RoundResult, RoundRun, SingleStepRun, StepRecord, Terminal};

pub const FORMAT: &str = "assocbench.roundlog/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Header {
        format: String,
        config_hash: String,
        seed: u64,
        backend: String,
        strategy: MemoryStrategy,
        round_id: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan: Option<RoundPlan>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        concept: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_memory: Option<MemoryBase>,
    },
    Step {
        record: StepRecord,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        memory: Option<MemoryBase>,
    },
    End {
        final_step_count: usize,
        terminal: Terminal,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exhausted: Option<Exhausted>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    SingleEnd {
        transport_failures: usize,
        exhausted: usize,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Everything recovered from one log file.
#[derive(Debug, Clone, PartialEq)]
pub enum LoggedRun {
    Chain {
        config_hash: String,
        seed: u64,
        result: RoundResult,
    },
    Single {
        config_hash: String,
        seed: u64,
        run: SingleStepRun,
    },
}

fn to_line(l: &LogLine) -> String {
    let mut s = serde_json::to_string(l).expect("log lines serialize");
    s.push('\n');
    s
}

/// `seed` is the run seed; the plan inside carries the round's own seed.
pub fn render_chain_log(run: &RoundRun, seed: u64, config_hash: &str) -> String {
    let r = &run.result;
    let mut out = to_line(&LogLine::Header {
        format: FORMAT.into(),
        config_hash: config_hash.into(),
        seed,
        backend: r.backend.clone(),
        strategy: r.strategy,
        round_id: r.round_id,
        plan: Some(r.plan.clone()),
        concept: None,
        initial_memory: run.memory.first().cloned(),
    });
    for (i, step) in r.steps.iter().enumerate() {
        out.push_str(&to_line(&LogLine::Step {
            record: step.clone(),
            memory: if step.association_correct { run.memory.get(i + 1).cloned() } else { None },
        }));
    }
    out.push_str(&to_line(&LogLine::End {
        final_step_count: r.final_step_count,
        terminal: r.terminal,
        exhausted: r.exhausted,
        error: r.error.clone(),
    }));
    out
}

pub fn render_single_log(run: &SingleStepRun, seed: u64, config_hash: &str) -> String {
    let mut out = to_line(&LogLine::Header {
        format: FORMAT.into(),
        config_hash: config_hash.into(),
        seed,
        backend: run.backend.clone(),
        strategy: run.strategy,
        round_id: 0,
        plan: None,
        concept: Some(run.concept.clone()),
        initial_memory: None,
    });
    for r in &run.records {
        out.push_str(&to_line(&LogLine::Step { record: r.clone(), memory: None }));
    }
    out.push_str(&to_line(&LogLine::SingleEnd {
        transport_failures: run.transport_failures,
        exhausted: run.exhausted,
    }));
    out
}

pub fn write_file(path: &Path, text: &str) -> Result<(), LogError> {
    let io = |source| LogError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)?;
    Ok(())
}

pub fn parse_log(text: &str, path: &Path) -> Result<LoggedRun, LogError> {
    let err = |line: usize, message: String| LogError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let l: LogLine = serde_json::from_str(raw).map_err(|e| err(i + 1, e.to_string()))?;
        lines.push((i + 1, l));
    }
    let mut it = lines.into_iter();
    let Some((_, LogLine::Header { format, config_hash, seed, backend, strategy, round_id, plan, concept, .. })) = it.next()
    else {
        return Err(err(1, "missing header".into()));
    };
    if format != FORMAT {
        return Err(err(1, format!("unsupported format '{format}'")));
    }
    let mut steps = Vec::new();
    for (n, line) in it {
        match line {
            LogLine::Step { record, .. } => steps.push(record),
            LogLine::End { final_step_count, terminal, exhausted, error } => {
                let plan = plan.ok_or_else(|| err(n, "chain log without plan".into()))?;
                return Ok(LoggedRun::Chain {
                    config_hash,
                    seed,
                    result: RoundResult {
                        round_id,
                        backend,
                        strategy,
                        plan,
                        steps,
                        final_step_count,
                        terminal,
                        exhausted,
                        error,
                    },
                });
            }
            LogLine::SingleEnd { transport_failures, exhausted } => {
                let concept = concept.ok_or_else(|| err(n, "single-step log without concept".into()))?;
                return Ok(LoggedRun::Single {
                    config_hash,
                    seed,
                    run: SingleStepRun {
                        concept,
                        backend,
                        strategy,
                        records: steps,
                        transport_failures,
                        exhausted,
                    },
                });
            }
            LogLine::Header { .. } => return Err(err(n, "second header".into())),
        }
    }
    Err(err(0, "log is truncated (no end record)".into()))
}

pub fn read_log(path: &Path) -> Result<LoggedRun, LogError> {
    let text = std::fs::read_to_string(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_log(&text, path)
}

/// Reads every `*.jsonl` log under `dir`, in file-name order.
pub fn read_dir(dir: &Path) -> Result<Vec<LoggedRun>, LogError> {
    let io = |source| LogError::Io { path: dir.to_path_buf(), source };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_log(p)).collect()
}

/// Zeroes wall-clock fields so logs from separate runs can be byte-compared.
pub fn normalize_timing(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for raw in text.lines() {
        match serde_json::from_str::<LogLine>(raw) {
            Ok(LogLine::Step { mut record, memory }) => {
                record.latency_ms = 0;
                out.push_str(&to_line(&LogLine::Step { record, memory }));
            }
            _ => {
                out.push_str(raw);
                out.push('\n');
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{make_round, RoundKind};
    use crate::fixtures::synthetic_corpus;
    use crate::modelio::{OracleClient, OracleConfig};
    use crate::runner::{run_chain, run_single_step, Agent, RunParams};
    use crate::corpus::ConceptKind;
    use std::sync::Arc;

    #[test]
    fn chain_log_round_trips() {
        let c = synthetic_corpus(ConceptKind::Attribute, 120, 3, 2);
        let plan = make_round(&c, RoundKind::Synchronous, &["ripe".into()], 30, 4, 3, 2).unwrap();
        let agent = Agent::Single(Arc::new(
            OracleClient::new("o", OracleConfig { p_assoc: 0.9, p_deduct: 0.7, seed: 8, ..Default::default() }).unwrap(),
        ));
        let run = run_chain(&c, &plan, &agent, &RunParams::new(MemoryStrategy::Nlm)).unwrap();
        let text = render_chain_log(&run, 4, "abc");
        match parse_log(&text, Path::new("x.jsonl")).unwrap() {
            LoggedRun::Chain { config_hash, seed, result } => {
                assert_eq!(config_hash, "abc");
                assert_eq!(seed, 4);
                assert_eq!(result, run.result);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_log_round_trips() {
        let c = synthetic_corpus(ConceptKind::Attribute, 120, 3, 2);
        let agent = Agent::Single(Arc::new(OracleClient::new("o", OracleConfig { p_assoc: 0.5, ..Default::default() }).unwrap()));
        let run = run_single_step(&c, "metal", &agent, &RunParams::new(MemoryStrategy::NoM), 20, 1, 3).unwrap();
        let text = render_single_log(&run, 1, "h");
        match parse_log(&text, Path::new("x.jsonl")).unwrap() {
            LoggedRun::Single { run: back, .. } => assert_eq!(back, run),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_log_is_rejected() {
        let c = synthetic_corpus(ConceptKind::Attribute, 60, 3, 2);
        let plan = make_round(&c, RoundKind::Synchronous, &["ripe".into()], 3, 4, 0, 2).unwrap();
        let agent = Agent::Single(Arc::new(OracleClient::new("o", OracleConfig::default()).unwrap()));
        let run = run_chain(&c, &plan, &agent, &RunParams::new(MemoryStrategy::NoM)).unwrap();
        let text = render_chain_log(&run, 4, "h");
        let cut: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(parse_log(&cut, Path::new("x.jsonl")).is_err());
    }
}
