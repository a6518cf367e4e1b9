//! Three-stage data refinement: resolution filter, model verification of each
//! label, and human review (exported queue, imported verdicts).
//!
//! Stages run in order and a sample dropped at one stage is never seen by the
//! next, so the kept set only shrinks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{Concept, ConceptKind, Corpus, CorpusError, Diagnostic, Sample, SampleId};
use crate::modelio::{self, CallKey, CompletionRequest, Hint, ModelClient};
use crate::prompt::{parse_yes_no, render_verify_prompt, PromptTemplates};
use crate::rng;

pub const DEFAULT_MIN_PIXELS: u64 = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Resolution,
    ModelVerify,
    HumanReview,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Keep,
    Drop,
    /// The stage could not run (no verifier reachable); the sample is kept
    /// but flagged.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementDecision {
    pub sample_id: SampleId,
    pub stage: Stage,
    pub verdict: Verdict,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Concept>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum RefineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub fn resolution_filter(sample: &Sample, min_pixels: u64) -> RefinementDecision {
    let (verdict, reason) = match sample.pixels() {
        None => (Verdict::Drop, "resolution-unknown".to_string()),
        Some(px) if px < min_pixels => (Verdict::Drop, format!("{px} px < {min_pixels}")),
        Some(px) => (Verdict::Keep, format!("{px} px")),
    };
    RefinementDecision {
        sample_id: sample.id.clone(),
        stage: Stage::Resolution,
        verdict,
        reason,
        label: None,
        verifier: None,
    }
}

/// Per-sample outcome of model verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    /// One decision per label, then the sample-level decision last.
    pub decisions: Vec<RefinementDecision>,
    pub kept_labels: BTreeSet<Concept>,
    pub verdict: Verdict,
}

enum Answer {
    Decided(bool, String),
    Undecided,
    Unreachable(String),
}

fn ask(
    client: &dyn ModelClient,
    request: &CompletionRequest,
    deadline: Duration,
) -> Answer {
    let mut req = request.clone();
    let mut last_error = None;
    // one retry when the answer is neither yes nor no
    for _ in 0..2 {
        match modelio::complete(client, &req, deadline) {
            Ok(text) => match parse_yes_no(&text) {
                Some(yes) => return Answer::Decided(yes, client.id().to_string()),
                None => last_error = None,
            },
            Err(e) => last_error = Some(e.to_string()),
        }
        req.key = req.key.retry();
    }
    match last_error {
        Some(e) => Answer::Unreachable(e),
        None => Answer::Undecided,
    }
}

/// Asks whether each label is visible, starting with `primary` and falling
/// back to `fallback` only when the primary cannot decide. Refuted labels
/// are removed; the sample is dropped when none remain. When neither
/// verifier can be reached for a label, that label is kept unverified and
/// the sample is marked skipped.
pub fn verify_labels(
    sample: &Sample,
    kind: ConceptKind,
    primary: &dyn ModelClient,
    fallback: Option<&dyn ModelClient>,
    templates: &PromptTemplates,
    deadline: Duration,
) -> VerifyOutcome {
    let mut decisions = Vec::new();
    let mut kept = BTreeSet::new();
    let mut skipped = false;
    let sample_key = rng::hash_str(sample.id.as_str());
    for (i, label) in sample.labels.iter().enumerate() {
        let request = CompletionRequest {
            parts: render_verify_prompt(templates, kind, label, &sample.image_ref),
            hint: Some(Hint::Verify { present: true }),
            key: CallKey::new(sample_key, i as u64, CallKey::VERIFY),
        };
        let mut answer = ask(primary, &request, deadline);
        if !matches!(answer, Answer::Decided(..)) {
            if let Some(fb) = fallback {
                let fb_answer = ask(fb, &request, deadline);
                answer = match (answer, fb_answer) {
                    (_, d @ Answer::Decided(..)) => d,
                    (Answer::Unreachable(a), Answer::Unreachable(b)) => Answer::Unreachable(format!("{a}; {b}")),
                    (_, other) => other,
                };
            }
        }
        let (verdict, reason, verifier) = match answer {
            Answer::Decided(true, who) => {
                kept.insert(label.clone());
                (Verdict::Keep, "affirmed".to_string(), Some(who))
            }
            Answer::Decided(false, who) => (Verdict::Drop, "refuted".to_string(), Some(who)),
            Answer::Undecided => {
                (Verdict::Drop, "no verifier reached a decision".to_string(), None)
            }
            Answer::Unreachable(e) => {
                skipped = true;
                kept.insert(label.clone());
                (Verdict::Skipped, format!("verifiers unreachable: {e}"), None)
            }
        };
        decisions.push(RefinementDecision {
            sample_id: sample.id.clone(),
            stage: Stage::ModelVerify,
            verdict,
            reason,
            label: Some(label.clone()),
            verifier,
        });
    }
    let verdict = if kept.is_empty() {
        Verdict::Drop
    } else if skipped {
        Verdict::Skipped
    } else {
        Verdict::Keep
    };
    let reason = match verdict {
        Verdict::Drop => "all labels refuted".to_string(),
        Verdict::Skipped => "verification skipped for some labels".to_string(),
        Verdict::Keep => format!("{} of {} labels affirmed", kept.len(), sample.labels.len()),
    };
    decisions.push(RefinementDecision {
        sample_id: sample.id.clone(),
        stage: Stage::ModelVerify,
        verdict,
        reason,
        label: None,
        verifier: None,
    });
    VerifyOutcome {
        decisions,
        kept_labels: kept,
        verdict,
    }
}

#[derive(Debug, Clone)]
pub struct RefineConfig {
    pub min_pixels: u64,
    pub templates: PromptTemplates,
    pub deadline: Duration,
    pub max_in_flight: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            min_pixels: DEFAULT_MIN_PIXELS,
            templates: PromptTemplates::default(),
            deadline: Duration::from_secs(60),
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    /// Surviving samples, with refuted labels removed.
    pub corpus: Corpus,
    pub decisions: Vec<RefinementDecision>,
    /// Ids kept after each stage that ran, in stage order.
    pub kept_after: Vec<(Stage, BTreeSet<SampleId>)>,
}

/// Runs the resolution filter and, when a primary verifier is given, model
/// verification.
pub fn refine_corpus(
    corpus: &Corpus,
    config: &RefineConfig,
    primary: Option<&dyn ModelClient>,
    fallback: Option<&dyn ModelClient>,
) -> Result<RefineOutcome, RefineError> {
    let mut decisions = Vec::new();
    let mut survivors: Vec<Sample> = Vec::new();
    for s in corpus.samples() {
        let d = resolution_filter(s, config.min_pixels);
        if d.verdict == Verdict::Keep {
            survivors.push(s.clone());
        }
        decisions.push(d);
    }
    let mut kept_after = vec![(Stage::Resolution, survivors.iter().map(|s| s.id.clone()).collect())];

    if let Some(primary) = primary {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.max_in_flight.max(1))
            .build()
            .expect("thread pool");
        let outcomes: Vec<VerifyOutcome> = pool.install(|| {
            use rayon::prelude::*;
            survivors
                .par_iter()
                .map(|s| verify_labels(s, corpus.kind(), primary, fallback, &config.templates, config.deadline))
                .collect()
        });
        let mut next = Vec::new();
        for (mut s, out) in survivors.into_iter().zip(outcomes) {
            decisions.extend(out.decisions);
            if out.verdict != Verdict::Drop {
                s.labels = out.kept_labels;
                next.push(s);
            }
        }
        survivors = next;
        kept_after.push((Stage::ModelVerify, survivors.iter().map(|s| s.id.clone()).collect()));
    }

    let (corpus, _) = Corpus::from_samples(
        corpus.vocabulary().clone(),
        survivors,
        corpus.source_meta().clone(),
    )?;
    Ok(RefineOutcome {
        corpus,
        decisions,
        kept_after,
    })
}

/// One line of a review queue or decision file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub sample_id: SampleId,
    pub image_ref: String,
    pub labels: BTreeSet<Concept>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ethic_flag: Option<String>,
    #[serde(default)]
    pub note: String,
}

impl ReviewItem {
    pub fn for_sample(sample: &Sample) -> Self {
        Self {
            sample_id: sample.id.clone(),
            image_ref: sample.image_ref.clone(),
            labels: sample.labels.clone(),
            verdict: Verdict::Keep,
            ethic_flag: None,
            note: String::new(),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RefineError {
    RefineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), RefineError> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).map_err(|e| io_err(path, e))?);
        text.push('\n');
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Writes the review queue. `flags` carries ethic reports by sample id, and is
/// copied verbatim into the queue.
pub fn export_review_queue(
    samples: &[Sample],
    flags: &BTreeMap<SampleId, (String, String)>,
    path: &Path,
) -> Result<Vec<ReviewItem>, RefineError> {
    let items: Vec<ReviewItem> = samples
        .iter()
        .map(|s| {
            let mut item = ReviewItem::for_sample(s);
            if let Some((flag, note)) = flags.get(&s.id) {
                item.ethic_flag = Some(flag.clone());
                item.note = note.clone();
            }
            item
        })
        .collect();
    write_lines(path, &items)?;
    Ok(items)
}

pub fn read_review_file(path: &Path) -> Result<(Vec<ReviewItem>, Vec<Diagnostic>), RefineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut items = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ReviewItem>(line) {
            Ok(item) => items.push(item),
            Err(e) => diagnostics.push(Diagnostic {
                line: i + 1,
                id: None,
                message: e.to_string(),
            }),
        }
    }
    Ok((items, diagnostics))
}

/// Appends one review item (used by the session server for ethic reports).
pub fn append_review_item(path: &Path, item: &ReviewItem) -> Result<(), RefineError> {
    use std::io::Write;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let mut line = serde_json::to_string(item).map_err(|e| io_err(path, e))?;
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone)]
pub struct ReviewImport {
    pub decisions: Vec<RefinementDecision>,
    pub diagnostics: Vec<Diagnostic>,
    pub corpus: Corpus,
}

/// Applies human verdicts: a `drop` removes the sample, anything else keeps
/// it. Decisions for unknown ids are rejected with a diagnostic.
pub fn import_review_decisions(corpus: &Corpus, path: &Path) -> Result<ReviewImport, RefineError> {
    let (items, mut diagnostics) = read_review_file(path)?;
    let mut decisions = Vec::new();
    let mut dropped = BTreeSet::new();
    for (i, item) in items.into_iter().enumerate() {
        if corpus.index_of(&item.sample_id).is_none() {
            diagnostics.push(Diagnostic {
                line: i + 1,
                id: Some(item.sample_id.0.clone()),
                message: "unknown sample id".into(),
            });
            continue;
        }
        if item.verdict == Verdict::Drop {
            dropped.insert(item.sample_id.clone());
        }
        let mut reason = String::from("human review");
        if let Some(flag) = &item.ethic_flag {
            reason = format!("{reason}; ethic flag: {flag}");
        }
        if !item.note.is_empty() {
            reason = format!("{reason}; note: {}", item.note);
        }
        decisions.push(RefinementDecision {
            sample_id: item.sample_id,
            stage: Stage::HumanReview,
            verdict: item.verdict,
            reason,
            label: None,
            verifier: None,
        });
    }
    let kept: Vec<Sample> = corpus
        .samples()
        .iter()
        .filter(|s| !dropped.contains(&s.id))
        .cloned()
        .collect();
    let (corpus, _) = Corpus::from_samples(corpus.vocabulary().clone(), kept, corpus.source_meta().clone())?;
    Ok(ReviewImport {
        decisions,
        diagnostics,
        corpus,
    })
}

pub fn write_decision_log(path: &Path, decisions: &[RefinementDecision]) -> Result<(), RefineError> {
    write_lines(path, decisions)
}
