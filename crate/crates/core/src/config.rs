//! Declarative run configuration (TOML), flag overrides and backend wiring.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::builder::{self, RoundKind};
use crate::corpus::{Concept, Corpus};
use crate::memory::{MemoryParams, MemoryStrategy};
use crate::modelio::{ModelClient, OracleClient, OracleConfig, RemoteClient, RemoteConfig};
use crate::prompt::PromptTemplates;
use crate::runner::Agent;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("config: {0}")]
    Parse(String),
    #[error("environment variable '{0}' referenced by the config is not set")]
    MissingEnv(String),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Oracle,
    Moe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub id: String,
    pub kind: BackendKind,
    /// Backend ids voting in an ensemble (`kind = "moe"` only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
}

fn default_kinds() -> Vec<RoundKind> {
    vec![RoundKind::Synchronous]
}
fn default_strategies() -> Vec<MemoryStrategy> {
    vec![MemoryStrategy::NoM]
}
fn default_rounds() -> usize {
    10
}
fn default_cap() -> usize {
    builder::DEFAULT_CAP
}
fn default_examples() -> usize {
    builder::DEFAULT_EXAMPLE_COUNT
}
fn default_segment_len() -> usize {
    builder::DEFAULT_SEGMENT_LEN
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_parallel() -> usize {
    4
}
fn default_deadline() -> u64 {
    120_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Corpus manifest; relative paths resolve against the config file.
    pub corpus: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Backends taking part in this run; empty means every non-member backend.
    #[serde(default)]
    pub backend: Vec<String>,
    #[serde(default)]
    pub backends: Vec<BackendConfig>,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<RoundKind>,
    /// One-concept cells (single-step and synchronous rounds).
    #[serde(default)]
    pub concepts: Vec<Concept>,
    /// Concept pools for asynchronous rounds.
    #[serde(default)]
    pub pairs: Vec<Vec<Concept>>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<MemoryStrategy>,
    /// Rounds per cell (trials per cell for single-step runs).
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default = "default_examples")]
    pub examples: usize,
    #[serde(default = "default_segment_len")]
    pub segment_len: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_deadline")]
    pub deadline_ms: u64,
    #[serde(default)]
    pub memory: MemoryParams,
    #[serde(default)]
    pub templates: PromptTemplates,
}

/// Command-line values that replace file values when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub backend: Option<Vec<String>>,
    pub kinds: Option<Vec<RoundKind>>,
    /// Cells as typed on the command line: `metal`, or `furry+metal` for a pool.
    pub concepts: Option<Vec<String>>,
    pub strategies: Option<Vec<MemoryStrategy>>,
    pub rounds: Option<usize>,
    pub cap: Option<usize>,
    pub examples: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Replaces `${NAME}` with the value of environment variable `NAME`.
pub fn interpolate_env(text: &str) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find('}') else {
            return Err(ConfigError::Parse("unterminated '${' in config".into()));
        };
        let name = &after[..end];
        let value = std::env::var(name).map_err(|_| ConfigError::MissingEnv(name.to_string()))?;
        out.push_str(&value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let text = interpolate_env(text)?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Loads a config file; a relative corpus path is made relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut config = RunConfig::parse(&text)?;
        if config.corpus.is_relative() {
            if let Some(dir) = path.parent() {
                config.corpus = dir.join(&config.corpus);
            }
        }
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.backend {
            self.backend = v.clone();
        }
        if let Some(v) = &o.kinds {
            self.kinds = v.clone();
        }
        if let Some(cells) = &o.concepts {
            self.concepts.clear();
            self.pairs.clear();
            for cell in cells {
                let parts: Vec<Concept> = cell.split('+').map(|s| s.trim().to_string()).collect();
                if parts.len() == 1 {
                    self.concepts.push(parts[0].clone());
                } else {
                    self.pairs.push(parts);
                }
            }
        }
        if let Some(v) = &o.strategies {
            self.strategies = v.clone();
        }
        if let Some(v) = o.rounds {
            self.rounds = v;
        }
        if let Some(v) = o.cap {
            self.cap = v;
        }
        if let Some(v) = o.examples {
            self.examples = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
    }

    pub fn deadline(&self) -> Duration {
        Duration::from_millis(self.deadline_ms)
    }

    /// Backend ids selected for this run.
    pub fn selected_backends(&self) -> Vec<String> {
        if !self.backend.is_empty() {
            return self.backend.clone();
        }
        let members: BTreeSet<&String> = self.backends.iter().flat_map(|b| &b.members).collect();
        self.backends
            .iter()
            .filter(|b| b.kind == BackendKind::Moe || !members.contains(&b.id))
            .map(|b| b.id.clone())
            .collect()
    }

    /// Checks every reference (backends, concepts, kinds) against the corpus.
    /// Nothing touches the network before this passes.
    pub fn validate(&self, corpus: &Corpus) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.cap == 0 {
            return invalid("cap must be positive".into());
        }
        if self.rounds == 0 {
            return invalid("rounds must be positive".into());
        }
        if self.kinds.is_empty() || self.strategies.is_empty() {
            return invalid("at least one kind and one strategy are required".into());
        }
        let mut ids = BTreeSet::new();
        for b in &self.backends {
            if !ids.insert(b.id.as_str()) {
                return invalid(format!("duplicate backend id '{}'", b.id));
            }
        }
        for b in &self.backends {
            match b.kind {
                BackendKind::Moe => {
                    if b.members.is_empty() {
                        return invalid(format!("moe backend '{}' has no members", b.id));
                    }
                    for m in &b.members {
                        match self.backends.iter().find(|x| &x.id == m) {
                            None => return invalid(format!("moe backend '{}': unknown member '{m}'", b.id)),
                            Some(x) if x.kind == BackendKind::Moe => {
                                return invalid(format!("moe backend '{}': member '{m}' is itself an ensemble", b.id))
                            }
                            Some(_) => {}
                        }
                    }
                }
                BackendKind::Remote if b.remote.is_none() => {
                    return invalid(format!("remote backend '{}' has no [remote] table", b.id))
                }
                BackendKind::Oracle => {
                    if let Some(o) = &b.oracle {
                        o.validate().map_err(|e| ConfigError::Invalid(format!("backend '{}': {e}", b.id)))?;
                    }
                }
                _ => {}
            }
        }
        let selected = self.selected_backends();
        if selected.is_empty() {
            return invalid("no backends selected".into());
        }
        for id in &selected {
            if !ids.contains(id.as_str()) {
                return invalid(format!("unknown backend id '{id}'"));
            }
        }
        let chain_kinds = self.kinds.iter().any(|k| *k != RoundKind::Asynchronous);
        if chain_kinds && self.concepts.is_empty() {
            return invalid("single-step and synchronous rounds need `concepts`".into());
        }
        if self.kinds.contains(&RoundKind::Asynchronous) && self.pairs.is_empty() {
            return invalid("asynchronous rounds need `pairs`".into());
        }
        for c in self.concepts.iter().chain(self.pairs.iter().flatten()) {
            if !corpus.vocabulary().contains(c) {
                return invalid(format!("unknown concept '{c}' for {} corpus", corpus.kind().as_str()));
            }
        }
        // Feasibility of every cell, without drawing any randomness that matters.
        for kind in &self.kinds {
            for cell in self.cells(*kind) {
                builder::make_round(corpus, *kind, &cell, self.cap, 0, self.examples, self.segment_len)
                    .map_err(|e| ConfigError::Invalid(format!("cell {}: {e}", cell.join("-"))))?;
            }
        }
        Ok(())
    }

    /// Concept cells for one round kind.
    pub fn cells(&self, kind: RoundKind) -> Vec<Vec<Concept>> {
        match kind {
            RoundKind::Asynchronous => self.pairs.clone(),
            _ => self.concepts.iter().map(|c| vec![c.clone()]).collect(),
        }
    }

    /// Hash of everything that can change results. The output directory and
    /// parallelism are excluded, so moving a run does not change its logs.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        canonical.max_parallel = 0;
        canonical.corpus = PathBuf::from(self.corpus.file_name().unwrap_or_default());
        let value = serde_json::to_value(&canonical).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Instantiates the selected backends. Remote clients only read their
    /// auth variable here; no request is sent.
    pub fn build_agents(&self) -> Result<BTreeMap<String, Agent>, ConfigError> {
        let mut clients: BTreeMap<String, Arc<dyn ModelClient>> = BTreeMap::new();
        let mut client = |id: &str| -> Result<Arc<dyn ModelClient>, ConfigError> {
            if let Some(c) = clients.get(id) {
                return Ok(c.clone());
            }
            let b = self
                .backends
                .iter()
                .find(|b| b.id == id)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown backend id '{id}'")))?;
            let c: Arc<dyn ModelClient> = match b.kind {
                BackendKind::Oracle => Arc::new(
                    OracleClient::new(id, b.oracle.unwrap_or_default())
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                ),
                BackendKind::Remote => Arc::new(
                    RemoteClient::new(id, b.remote.clone().unwrap_or_default())
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                ),
                BackendKind::Moe => unreachable!("ensembles are built from members"),
            };
            clients.insert(id.to_string(), c.clone());
            Ok(c)
        };
        let mut agents = BTreeMap::new();
        for id in self.selected_backends() {
            let b = self
                .backends
                .iter()
                .find(|b| b.id == id)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown backend id '{id}'")))?;
            let agent = if b.kind == BackendKind::Moe {
                let members = b.members.iter().map(|m| client(m)).collect::<Result<Vec<_>, _>>()?;
                Agent::Moe { id: id.clone(), members }
            } else {
                Agent::Single(client(&id)?)
            };
            agents.insert(id, agent);
        }
        Ok(agents)
    }
}
