//! Association protocols: single-step trials and synchronous / asynchronous
//! chains.
//!
//! A chain step shows the query and two candidates, asks for the option that
//! shares the scheduled concept, and on a correct answer asks the model to name
//! the shared concept. That (possibly wrong) deduction is what enters memory.
//! The round's score is the number of correct association steps before the
//! first wrong one, capped at the plan's step limit.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::builder::{
    self, candidate_step, make_round, BuildError, Exhausted, OptionSlot, RoundKind, RoundPlan,
    StepError,
};
use crate::corpus::{Concept, Corpus, SampleId};
use crate::memory::{MemoryBase, MemoryParams, MemoryStrategy};
use crate::modelio::{self, moe_vote, CallKey, CompletionRequest, Hint, ModelClient, ModelError, Vote};
use crate::prompt::{
    parse_choice, parse_concepts, render_association_prompt, render_deduction_prompt, Choice,
    PromptError, PromptTemplates,
};
use crate::rng::{self, Stream};

/// A single backend or a majority-vote ensemble.
#[derive(Clone)]
pub enum Agent {
    Single(Arc<dyn ModelClient>),
    Moe { id: String, members: Vec<Arc<dyn ModelClient>> },
}

impl Agent {
    pub fn id(&self) -> &str {
        match self {
            Agent::Single(c) => c.id(),
            Agent::Moe { id, .. } => id,
        }
    }
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Agent({})", self.id())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub strategy: MemoryStrategy,
    pub memory: MemoryParams,
    pub templates: PromptTemplates,
    pub deadline: Duration,
    /// Distinguishes rounds in oracle call keys.
    pub round_id: u64,
}

impl RunParams {
    pub fn new(strategy: MemoryStrategy) -> Self {
        Self {
            strategy,
            memory: MemoryParams::default(),
            templates: PromptTemplates::default(),
            deadline: Duration::from_secs(120),
            round_id: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub concept: Concept,
    pub query: SampleId,
    pub option1: SampleId,
    pub option2: SampleId,
    pub correct_option: OptionSlot,
    /// `None` when the answer could not be parsed even after the retry.
    pub chosen_option: Option<OptionSlot>,
    pub association_correct: bool,
    pub deduction_performed: bool,
    pub deduced: BTreeSet<Concept>,
    pub deduction_correct: bool,
    /// Memory context shown in this step's association prompt.
    pub prompt_memory: String,
    pub raw_association: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_deduction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<Vec<Vote>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_text: Option<String>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    WrongAnswer,
    CapReached,
    Exhausted,
    Transport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round_id: u64,
    pub backend: String,
    pub strategy: MemoryStrategy,
    pub plan: RoundPlan,
    pub steps: Vec<StepRecord>,
    pub final_step_count: usize,
    pub terminal: Terminal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exhausted: Option<Exhausted>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A finished round plus the memory state after seeding and after each step.
#[derive(Debug, Clone)]
pub struct RoundRun {
    pub result: RoundResult,
    pub memory: Vec<MemoryBase>,
}

/// Counts correct association steps before the first wrong one.
pub fn count_steps(steps: &[StepRecord]) -> usize {
    steps.iter().take_while(|s| s.association_correct).count()
}

struct Decision {
    choice: Choice,
    raw: String,
    votes: Option<Vec<Vote>>,
    majority: Vec<usize>,
}

fn decide(agent: &Agent, req: &CompletionRequest, deadline: Duration) -> Result<Decision, ModelError> {
    match agent {
        Agent::Single(c) => {
            let raw = modelio::complete(c.as_ref(), req, deadline)?;
            Ok(Decision {
                choice: parse_choice(&raw).choice,
                raw,
                votes: None,
                majority: vec![0],
            })
        }
        Agent::Moe { members, .. } => {
            let refs: Vec<&dyn ModelClient> = members.iter().map(|m| m.as_ref()).collect();
            let out = moe_vote(&refs, req, deadline)?;
            Ok(Decision {
                choice: out.decision.choice,
                raw: out.decision.raw,
                votes: Some(out.votes),
                majority: out.majority,
            })
        }
    }
}

/// Association decision with one stricter retry on an unparseable answer.
fn associate(
    agent: &Agent,
    req: CompletionRequest,
    params: &RunParams,
) -> Result<(Decision, Vec<String>), ModelError> {
    let first = decide(agent, &req, params.deadline)?;
    let mut raws = vec![first.raw.clone()];
    if first.choice != Choice::Unparseable {
        return Ok((first, raws));
    }
    let retry = CompletionRequest {
        parts: req.parts.with_output_suffix(&params.templates.association_retry),
        hint: req.hint.clone(),
        key: req.key.retry(),
    };
    let second = decide(agent, &retry, params.deadline)?;
    raws.push(second.raw.clone());
    Ok((second, raws))
}

/// Result of asking for the shared concept of a correctly chosen pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deduction {
    pub deduced: BTreeSet<Concept>,
    pub correct: bool,
    pub raw: String,
}

/// Deduction step. Correct when the scheduled concept is among the deduced
/// ones. For an ensemble only the members that voted with the majority are
/// asked, and their concepts are pooled.
#[allow(clippy::too_many_arguments)]
pub fn deduct_step(
    corpus: &Corpus,
    query: &SampleId,
    chosen_positive: &SampleId,
    concept: &str,
    agent: &Agent,
    majority: &[usize],
    templates: &PromptTemplates,
    key: CallKey,
    deadline: Duration,
) -> Result<Deduction, RunError> {
    let q = corpus.sample(query).map_err(BuildError::from)?;
    let p = corpus.sample(chosen_positive).map_err(BuildError::from)?;
    let vocab = corpus.vocabulary();
    let parts = render_deduction_prompt(templates, vocab, &q.image_ref, &p.image_ref)?;
    let shared: BTreeSet<Concept> = q.labels.intersection(&p.labels).cloned().collect();
    let req = CompletionRequest {
        parts,
        hint: Some(Hint::Deduction {
            shared,
            vocabulary: vocab.concepts.clone(),
        }),
        key,
    };
    let members: Vec<&Arc<dyn ModelClient>> = match agent {
        Agent::Single(c) => vec![c],
        Agent::Moe { members, .. } => majority.iter().filter_map(|&i| members.get(i)).collect(),
    };
    let mut deduced = BTreeSet::new();
    let mut raws = Vec::new();
    for m in members {
        // a member failing here only loses its evidence
        match modelio::complete(m.as_ref(), &req, deadline) {
            Ok(text) => {
                deduced.extend(parse_concepts(&text, vocab).concepts);
                raws.push(text);
            }
            Err(e) => raws.push(format!("<error: {e}>")),
        }
    }
    Ok(Deduction {
        correct: deduced.contains(concept),
        deduced,
        raw: raws.join("\n"),
    })
}

/// Applies a correct step's deduced evidence to memory.
pub fn remember(
    memory: &mut MemoryBase,
    deduced: &BTreeSet<Concept>,
    scheduled: &str,
    query_name: &str,
    positive_name: &str,
) {
    match memory.strategy {
        MemoryStrategy::NoM => {}
        MemoryStrategy::StructM | MemoryStrategy::Nlm => {
            let objects: BTreeMap<Concept, Vec<String>> = deduced
                .iter()
                .map(|c| (c.clone(), vec![query_name.to_string(), positive_name.to_string()]))
                .collect();
            memory
                .update_attention(deduced, &objects)
                .expect("attention strategy");
        }
        MemoryStrategy::ChainM => {
            let link = if deduced.contains(scheduled) {
                Some(scheduled.to_string())
            } else {
                deduced.iter().next().cloned()
            };
            if let Some(c) = link {
                memory
                    .append_chain(query_name, &c, positive_name)
                    .expect("chain strategy");
            }
        }
    }
}

fn seeded_memory(corpus: &Corpus, plan: &RoundPlan, params: &RunParams) -> Result<MemoryBase, RunError> {
    let mut memory = MemoryBase::new(params.strategy, params.memory);
    let examples = builder::sample_examples(corpus, plan)?;
    memory
        .seed_examples(&examples, corpus, Some(plan.concept_at(0)))
        .map_err(BuildError::from)?;
    Ok(memory)
}

/// Runs one chain round to termination.
pub fn run_chain(
    corpus: &Corpus,
    plan: &RoundPlan,
    agent: &Agent,
    params: &RunParams,
) -> Result<RoundRun, RunError> {
    let kind = corpus.kind();
    let mut memory = seeded_memory(corpus, plan, params)?;
    let mut snapshots = vec![memory.clone()];
    let mut rng = rng::stream(plan.seed, Stream::Steps);
    let mut query = plan.start.clone();
    let mut steps = Vec::new();
    let mut terminal = Terminal::CapReached;
    let mut exhausted = None;
    let mut error = None;

    for t in 0..plan.cap {
        let cand = match candidate_step(corpus, plan, t, &query, &mut rng) {
            Ok(c) => c,
            Err(StepError::Exhausted(why)) => {
                terminal = Terminal::Exhausted;
                exhausted = Some(why);
                break;
            }
            Err(StepError::Build(e)) => return Err(e.into()),
        };
        let image = |id: &SampleId| corpus.sample(id).map(|s| s.image_ref.clone());
        let parts = render_association_prompt(
            &params.templates,
            &memory,
            kind,
            &image(&cand.query).map_err(BuildError::from)?,
            &image(&cand.option1).map_err(BuildError::from)?,
            &image(&cand.option2).map_err(BuildError::from)?,
        )?;
        let prompt_memory = parts.memory_text.clone();
        let req = CompletionRequest {
            parts,
            hint: Some(Hint::Association { correct: cand.correct }),
            key: CallKey::new(params.round_id, t as u64, CallKey::ASSOCIATION),
        };
        let started = Instant::now();
        let (decision, raw_association) = match associate(agent, req, params) {
            Ok(d) => d,
            Err(e) => {
                terminal = Terminal::Transport;
                error = Some(e.to_string());
                break;
            }
        };
        let chosen = decision.choice.slot();
        let correct = chosen == Some(cand.correct);
        let mut record = StepRecord {
            t,
            concept: cand.concept.clone(),
            query: cand.query.clone(),
            option1: cand.option1.clone(),
            option2: cand.option2.clone(),
            correct_option: cand.correct,
            chosen_option: chosen,
            association_correct: correct,
            deduction_performed: false,
            deduced: BTreeSet::new(),
            deduction_correct: false,
            prompt_memory,
            raw_association,
            raw_deduction: None,
            votes: decision.votes,
            evidence_text: None,
            latency_ms: 0,
        };
        if !correct {
            record.latency_ms = started.elapsed().as_millis() as u64;
            steps.push(record);
            terminal = Terminal::WrongAnswer;
            break;
        }
        let positive = cand.positive().clone();
        let deduction = deduct_step(
            corpus,
            &cand.query,
            &positive,
            &cand.concept,
            agent,
            &decision.majority,
            &params.templates,
            CallKey::new(params.round_id, t as u64, CallKey::DEDUCTION),
            params.deadline,
        )?;
        record.latency_ms = started.elapsed().as_millis() as u64;
        record.deduction_performed = true;
        record.deduction_correct = deduction.correct;
        record.raw_deduction = Some(deduction.raw);
        let qname = &corpus.sample(&cand.query).map_err(BuildError::from)?.display_name;
        let pname = &corpus.sample(&positive).map_err(BuildError::from)?.display_name;
        remember(&mut memory, &deduction.deduced, &cand.concept, qname, pname);
        record.deduced = deduction.deduced;
        steps.push(record);
        snapshots.push(memory.clone());
        query = positive;
    }

    let final_step_count = count_steps(&steps);
    Ok(RoundRun {
        result: RoundResult {
            round_id: params.round_id,
            backend: agent.id().to_string(),
            strategy: params.strategy,
            plan: plan.clone(),
            steps,
            final_step_count,
            terminal,
            exhausted,
            error,
        },
        memory: snapshots,
    })
}

/// Outcome of a batch of single-step trials.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleStepRun {
    pub concept: Concept,
    pub backend: String,
    pub strategy: MemoryStrategy,
    pub records: Vec<StepRecord>,
    pub transport_failures: usize,
    pub exhausted: usize,
}

/// Single-step protocol: each trial seeds memory with `example_count`
/// ground-truth pairs for `concept`, then asks one association question (and
/// one deduction question when the answer is correct).
#[allow(clippy::too_many_arguments)]
pub fn run_single_step(
    corpus: &Corpus,
    concept: &str,
    agent: &Agent,
    params: &RunParams,
    n_trials: usize,
    seed: u64,
    example_count: usize,
) -> Result<SingleStepRun, RunError> {
    let mut out = SingleStepRun {
        concept: concept.to_string(),
        backend: agent.id().to_string(),
        strategy: params.strategy,
        records: Vec::with_capacity(n_trials),
        transport_failures: 0,
        exhausted: 0,
    };
    for trial in 0..n_trials {
        let trial_seed = rng::derive(seed, &[trial as u64]);
        let plan = make_round(
            corpus,
            RoundKind::SingleStep,
            &[concept.to_string()],
            1,
            trial_seed,
            example_count,
            builder::DEFAULT_SEGMENT_LEN,
        )?;
        let trial_params = RunParams {
            round_id: rng::derive(params.round_id, &[trial as u64]),
            ..params.clone()
        };
        let run = run_chain(corpus, &plan, agent, &trial_params)?;
        match run.result.terminal {
            Terminal::Transport => out.transport_failures += 1,
            Terminal::Exhausted => out.exhausted += 1,
            _ => out.records.extend(run.result.steps),
        }
    }
    Ok(out)
}

/// Runs `plans` on up to `max_parallel` worker threads. Results keep plan
/// order. Plans not yet started when `cancel` is raised are skipped.
pub fn run_rounds(
    corpus: &Corpus,
    plans: &[(RoundPlan, RunParams)],
    agent: &Agent,
    max_parallel: usize,
    cancel: Option<&AtomicBool>,
) -> Vec<Option<Result<RoundRun, RunError>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_parallel.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        use rayon::prelude::*;
        plans
            .par_iter()
            .map(|(plan, params)| {
                if cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                    return None;
                }
                Some(run_chain(corpus, plan, agent, params))
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::synthetic_corpus;
    use crate::modelio::{OracleClient, OracleConfig, ScriptedClient};
    use crate::corpus::ConceptKind;

    fn oracle(p_assoc: f64, p_deduct: f64, seed: u64) -> Agent {
        Agent::Single(Arc::new(
            OracleClient::new("oracle", OracleConfig { p_assoc, p_deduct, seed, ..Default::default() }).unwrap(),
        ))
    }

    fn corpus() -> Corpus {
        synthetic_corpus(ConceptKind::Attribute, 200, 3, 5)
    }

    #[test]
    fn perfect_oracle_reaches_cap() {
        let c = corpus();
        let plan = make_round(&c, RoundKind::Synchronous, &["metal".into()], 500, 9, 3, 2).unwrap();
        let run = run_chain(&c, &plan, &oracle(1.0, 1.0, 1), &RunParams::new(MemoryStrategy::StructM)).unwrap();
        assert_eq!(run.result.terminal, Terminal::CapReached);
        assert_eq!(run.result.final_step_count, 500);
        assert!(run.result.steps.iter().all(|s| s.deduction_correct));
    }

    #[test]
    fn hopeless_oracle_scores_zero() {
        let c = corpus();
        let plan = make_round(&c, RoundKind::Synchronous, &["metal".into()], 500, 9, 3, 2).unwrap();
        let run = run_chain(&c, &plan, &oracle(0.0, 1.0, 1), &RunParams::new(MemoryStrategy::NoM)).unwrap();
        assert_eq!(run.result.terminal, Terminal::WrongAnswer);
        assert_eq!(run.result.final_step_count, 0);
        assert_eq!(run.result.steps.len(), 1);
        assert!(!run.result.steps[0].deduction_performed);
    }

    // S(t) = 1 + S(t+1) while the pick at t is right, 0 at the first miss or past the cap
    fn recursive_count(steps: &[StepRecord], t: usize, cap: usize) -> usize {
        match steps.get(t) {
            Some(s) if t < cap && s.chosen_option == Some(s.correct_option) => 1 + recursive_count(steps, t + 1, cap),
            _ => 0,
        }
    }

    #[test]
    fn step_count_matches_recursive_definition() {
        let c = corpus();
        for seed in 0..200 {
            let p = (seed % 10) as f64 / 10.0;
            let plan = make_round(&c, RoundKind::Synchronous, &["metal".into()], 40, seed, 0, 2).unwrap();
            let r = run_chain(&c, &plan, &oracle(p, 1.0, seed), &RunParams::new(MemoryStrategy::NoM)).unwrap().result;
            assert_eq!(r.final_step_count, recursive_count(&r.steps, 0, 40), "seed {seed}");
        }
    }

    #[test]
    fn wrong_deduction_pollutes_memory() {
        let c = corpus();
        let plan = make_round(&c, RoundKind::Synchronous, &["metal".into()], 5, 9, 0, 2).unwrap();
        let run = run_chain(&c, &plan, &oracle(1.0, 0.0, 1), &RunParams::new(MemoryStrategy::StructM)).unwrap();
        assert_eq!(run.result.final_step_count, 5);
        let last = run.memory.last().unwrap();
        assert!(last.entry("metal").is_none());
        assert!(!last.entries.is_empty());
        assert!(run.result.steps.iter().all(|s| !s.deduction_correct));
    }

    #[test]
    fn empty_deduction_decays_everything() {
        let c = corpus();
        let plan = make_round(&c, RoundKind::Synchronous, &["metal".into()], 1, 9, 3, 2).unwrap();
        let mute = ScriptedClient::new("mute", |r| match &r.hint {
            Some(Hint::Association { correct }) => Ok(correct.token().to_string()),
            _ => Ok("nothing in common".into()),
        });
        let run = run_chain(&c, &plan, &Agent::Single(Arc::new(mute)), &RunParams::new(MemoryStrategy::Nlm)).unwrap();
        let before = &run.memory[0];
        let after = &run.memory[1];
        assert!(run.result.steps[0].deduced.is_empty());
        for e in &after.entries {
            let b = before.entry(&e.concept).unwrap();
            assert_eq!(b.weight.units() - e.weight.units(), 200_000_000);
        }
    }

    #[test]
    fn unparseable_twice_is_a_failed_step() {
        let c = corpus();
        let plan = make_round(&c, RoundKind::Synchronous, &["metal".into()], 10, 9, 0, 2).unwrap();
        let client = Arc::new(ScriptedClient::constant("shrug", "not sure"));
        let run = run_chain(&c, &plan, &Agent::Single(client.clone()), &RunParams::new(MemoryStrategy::NoM)).unwrap();
        assert_eq!(run.result.terminal, Terminal::WrongAnswer);
        assert_eq!(run.result.steps[0].raw_association.len(), 2);
        assert_eq!(run.result.steps[0].chosen_option, None);
        assert_eq!(client.calls(), 2);
    }

    #[test]
    fn transport_failure_ends_round() {
        let c = corpus();
        let plan = make_round(&c, RoundKind::Synchronous, &["metal".into()], 10, 9, 0, 2).unwrap();
        let down = ScriptedClient::new("down", |_| Err(ModelError::Transport { message: "refused".into(), retryable: false }));
        let run = run_chain(&c, &plan, &Agent::Single(Arc::new(down)), &RunParams::new(MemoryStrategy::NoM)).unwrap();
        assert_eq!(run.result.terminal, Terminal::Transport);
        assert!(run.result.error.is_some());
        assert!(run.result.steps.is_empty());
    }

    #[test]
    fn chain_memory_follows_the_chain() {
        let c = corpus();
        let plan = make_round(&c, RoundKind::Synchronous, &["metal".into()], 4, 9, 0, 2).unwrap();
        let run = run_chain(&c, &plan, &oracle(1.0, 1.0, 1), &RunParams::new(MemoryStrategy::ChainM)).unwrap();
        let mem = run.memory.last().unwrap();
        assert_eq!(mem.chain.len(), 4);
        for w in mem.chain.windows(2) {
            assert_eq!(w[0].to, w[1].from);
        }
    }

    #[test]
    fn single_step_perfect_oracle() {
        let c = corpus();
        let out = run_single_step(&c, "metal", &oracle(1.0, 1.0, 3), &RunParams::new(MemoryStrategy::StructM), 100, 4, 3).unwrap();
        assert_eq!(out.records.len(), 100);
        assert!(out.records.iter().all(|r| r.association_correct && r.deduction_correct));
        assert!(out.records.iter().all(|r| r.prompt_memory.starts_with("Given the memory: ")));
    }

    #[test]
    fn moe_agent_runs_chain() {
        let c = corpus();
        let plan = make_round(&c, RoundKind::Synchronous, &["metal".into()], 20, 9, 0, 2).unwrap();
        let members: Vec<Arc<dyn ModelClient>> = vec![
            Arc::new(OracleClient::new("a", OracleConfig { seed: 1, ..Default::default() }).unwrap()),
            Arc::new(OracleClient::new("b", OracleConfig { p_assoc: 0.0, seed: 2, ..Default::default() }).unwrap()),
            Arc::new(OracleClient::new("c", OracleConfig { seed: 3, ..Default::default() }).unwrap()),
        ];
        let agent = Agent::Moe { id: "moe".into(), members };
        let run = run_chain(&c, &plan, &agent, &RunParams::new(MemoryStrategy::NoM)).unwrap();
        assert_eq!(run.result.final_step_count, 20);
        assert_eq!(run.result.steps[0].votes.as_ref().unwrap().len(), 3);
    }
}
