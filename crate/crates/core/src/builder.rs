//! Annotation-free association construction.
//!
//! Two samples form an association pair when their label sets intersect and a
//! non-association pair when they are disjoint. From that single rule we derive
//! positive/negative sets, the corpus-wide shared-concept set, deduction tuples,
//! and the step-by-step candidate stream of a chain round.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Concept, Corpus, CorpusError, SampleId};
use crate::rng::{self, RoundRng, Stream};

pub const DEFAULT_CAP: usize = 500;
pub const DEFAULT_SEGMENT_LEN: usize = 2;
pub const DEFAULT_EXAMPLE_COUNT: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("not an association pair: {0} and {1} share no concept")]
    NotAssociationPair(SampleId, SampleId),
    #[error("invalid round: {0}")]
    InvalidRound(String),
    #[error("chain infeasible: {0}")]
    ChainInfeasible(String),
}

/// 1 when the label sets intersect, else 0.
pub fn pair_label(a: &BTreeSet<Concept>, b: &BTreeSet<Concept>) -> u8 {
    u8::from(!a.is_disjoint(b))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationSets {
    pub anchor: SampleId,
    pub positives: Vec<SampleId>,
    pub negatives: Vec<SampleId>,
    /// Set when the eligible positive pool held fewer than K samples.
    pub short_positives: bool,
    pub short_negatives: bool,
}

/// Samples `k` positives and `l` negatives for `anchor`, uniformly and without
/// replacement from the eligible pools (corpus order, then partial
/// Fisher-Yates; positives are drawn before negatives from one stream).
pub fn build_sets(
    corpus: &Corpus,
    anchor: &SampleId,
    k: usize,
    l: usize,
    seed: u64,
) -> Result<AssociationSets, BuildError> {
    let anchor_labels = &corpus.sample(anchor)?.labels;
    let mut pos_pool = Vec::new();
    let mut neg_pool = Vec::new();
    for s in corpus.samples() {
        if &s.id == anchor {
            continue;
        }
        if pair_label(anchor_labels, &s.labels) == 1 {
            pos_pool.push(s.id.clone());
        } else {
            neg_pool.push(s.id.clone());
        }
    }
    let mut rng = rng::stream(seed, Stream::Sets);
    let positives = rng::sample_without_replacement(&mut rng, &pos_pool, k);
    let negatives = rng::sample_without_replacement(&mut rng, &neg_pool, l);
    Ok(AssociationSets {
        anchor: anchor.clone(),
        short_positives: pos_pool.len() < k,
        short_negatives: neg_pool.len() < l,
        positives,
        negatives,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedConceptSet {
    pub concepts: BTreeSet<Concept>,
}

impl SharedConceptSet {
    pub fn contains(&self, concept: &str) -> bool {
        self.concepts.contains(concept)
    }
}

/// Union over all sample pairs of their shared labels.
///
/// A concept lies in some pairwise intersection iff at least two samples carry
/// it, which gives a linear-time evaluation.
pub fn shared_concepts(corpus: &Corpus) -> SharedConceptSet {
    let concepts = corpus
        .vocabulary()
        .concepts
        .iter()
        .filter(|c| corpus.concept_positions(c).is_ok_and(|p| p.len() >= 2))
        .cloned()
        .collect();
    SharedConceptSet { concepts }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeductionTuple {
    pub anchor: SampleId,
    pub positive: SampleId,
    pub shared: BTreeSet<Concept>,
}

pub fn deduction_tuple(
    corpus: &Corpus,
    anchor: &SampleId,
    positive: &SampleId,
) -> Result<DeductionTuple, BuildError> {
    let a = &corpus.sample(anchor)?.labels;
    let p = &corpus.sample(positive)?.labels;
    let shared: BTreeSet<Concept> = a.intersection(p).cloned().collect();
    if shared.is_empty() {
        return Err(BuildError::NotAssociationPair(
            anchor.clone(),
            positive.clone(),
        ));
    }
    Ok(DeductionTuple {
        anchor: anchor.clone(),
        positive: positive.clone(),
        shared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundKind {
    SingleStep,
    Synchronous,
    Asynchronous,
}

impl std::str::FromStr for RoundKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "single_step" | "single" => Ok(RoundKind::SingleStep),
            "synchronous" | "sync" => Ok(RoundKind::Synchronous),
            "asynchronous" | "async" => Ok(RoundKind::Asynchronous),
            other => Err(format!("unknown round kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub kind: RoundKind,
    /// The configured concept pool (one concept, or the m asynchronous ones).
    pub concepts: Vec<Concept>,
    pub concept_schedule: Vec<Concept>,
    pub cap: usize,
    pub seed: u64,
    pub start: SampleId,
    pub example_count: usize,
    pub segment_len: usize,
}

impl RoundPlan {
    pub fn concept_at(&self, t: usize) -> &Concept {
        &self.concept_schedule[t]
    }

    /// Label used in reports: the single concept, or `a-b` for pools.
    pub fn cell_label(&self) -> String {
        self.concepts.join("-")
    }
}

/// Concept schedule of length `cap`: constant for one concept, otherwise
/// segments of `segment_len` steps cycling through `concepts` in order.
pub fn schedule(concepts: &[Concept], cap: usize, segment_len: usize) -> Vec<Concept> {
    let seg = segment_len.max(1);
    (0..cap)
        .map(|t| concepts[(t / seg) % concepts.len()].clone())
        .collect()
}

/// Validates the configuration and fixes the schedule and starting sample.
pub fn make_round(
    corpus: &Corpus,
    kind: RoundKind,
    concepts: &[Concept],
    cap: usize,
    seed: u64,
    example_count: usize,
    segment_len: usize,
) -> Result<RoundPlan, BuildError> {
    if cap == 0 {
        return Err(BuildError::InvalidRound("cap must be positive".into()));
    }
    match kind {
        RoundKind::SingleStep | RoundKind::Synchronous if concepts.len() != 1 => {
            return Err(BuildError::InvalidRound(format!(
                "{kind:?} rounds take exactly one concept, got {}",
                concepts.len()
            )));
        }
        RoundKind::Asynchronous if concepts.len() < 2 => {
            return Err(BuildError::InvalidRound(
                "asynchronous rounds take at least two concepts".into(),
            ));
        }
        _ => {}
    }
    let distinct: BTreeSet<&Concept> = concepts.iter().collect();
    if distinct.len() != concepts.len() {
        return Err(BuildError::InvalidRound("duplicate concepts".into()));
    }
    let shared = shared_concepts(corpus);
    for c in concepts {
        let n = corpus.concept_positions(c)?.len();
        if n < 2 {
            return Err(BuildError::ChainInfeasible(format!(
                "concept '{c}' has {n} sample(s), need at least 2"
            )));
        }
        debug_assert!(shared.contains(c));
    }
    let concept_schedule = schedule(concepts, cap, segment_len);
    if kind == RoundKind::Asynchronous {
        for (a, b) in concept_schedule.iter().zip(concept_schedule.iter().skip(1)) {
            if a != b && !corpus.samples().iter().any(|s| s.labels.contains(a) && s.labels.contains(b)) {
                return Err(BuildError::ChainInfeasible(format!(
                    "no sample carries both '{a}' and '{b}' to bridge the schedule"
                )));
            }
        }
    }
    let starts = corpus.concept_positions(&concept_schedule[0])?;
    let mut start_rng = rng::stream(seed, Stream::Start);
    let start = corpus.samples()[*rng::choose(&mut start_rng, starts).expect("checked >= 2")]
        .id
        .clone();
    Ok(RoundPlan {
        kind,
        concepts: concepts.to_vec(),
        concept_schedule,
        cap,
        seed,
        start,
        example_count,
        segment_len,
    })
}

/// Ground-truth example pairs shown before a round (memory seeding for models,
/// the preview phase for humans). Example `i` uses concept `i mod m`.
pub fn sample_examples(corpus: &Corpus, plan: &RoundPlan) -> Result<Vec<DeductionTuple>, BuildError> {
    let mut rng = rng::stream(plan.seed, Stream::Examples);
    let mut out = Vec::with_capacity(plan.example_count);
    for i in 0..plan.example_count {
        let concept = &plan.concepts[i % plan.concepts.len()];
        let pool = corpus.concept_positions(concept)?;
        let a = *rng::choose(&mut rng, pool)
            .ok_or_else(|| BuildError::ChainInfeasible(format!("no samples for '{concept}'")))?;
        let rest: Vec<usize> = pool.iter().copied().filter(|&p| p != a).collect();
        let p = *rng::choose(&mut rng, &rest)
            .ok_or_else(|| BuildError::ChainInfeasible(format!("'{concept}' needs two samples")))?;
        let samples = corpus.samples();
        out.push(deduction_tuple(corpus, &samples[a].id, &samples[p].id)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionSlot {
    Option1,
    Option2,
}

impl OptionSlot {
    pub fn other(self) -> OptionSlot {
        match self {
            OptionSlot::Option1 => OptionSlot::Option2,
            OptionSlot::Option2 => OptionSlot::Option1,
        }
    }

    /// The answer token the prompt asks for.
    pub fn token(self) -> &'static str {
        match self {
            OptionSlot::Option1 => "Image1",
            OptionSlot::Option2 => "Image2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCandidates {
    pub step_index: usize,
    pub concept: Concept,
    pub query: SampleId,
    pub option1: SampleId,
    pub option2: SampleId,
    pub correct: OptionSlot,
}

impl StepCandidates {
    pub fn positive(&self) -> &SampleId {
        self.option(self.correct)
    }

    pub fn negative(&self) -> &SampleId {
        self.option(self.correct.other())
    }

    pub fn option(&self, slot: OptionSlot) -> &SampleId {
        match slot {
            OptionSlot::Option1 => &self.option1,
            OptionSlot::Option2 => &self.option2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum Exhausted {
    #[error("no eligible positive candidate")]
    Positive,
    #[error("no eligible negative candidate")]
    Negative,
}

#[derive(Debug, thiserror::Error)]
pub enum StepError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("pool exhausted: {0}")]
    Exhausted(Exhausted),
}

impl From<CorpusError> for StepError {
    fn from(e: CorpusError) -> Self {
        StepError::Build(e.into())
    }
}

/// Draws step `t`'s candidates: one positive carrying the scheduled concept
/// (and, across a schedule switch, the next concept too, so that it can serve
/// as the following query), one negative sharing nothing with the query, and
/// a random presentation order. Draw order: positive, negative, order.
pub fn candidate_step(
    corpus: &Corpus,
    plan: &RoundPlan,
    t: usize,
    query: &SampleId,
    rng: &mut RoundRng,
) -> Result<StepCandidates, StepError> {
    let concept = plan.concept_schedule.get(t).ok_or_else(|| {
        BuildError::InvalidRound(format!("step {t} beyond cap {}", plan.cap))
    })?;
    let next = plan
        .concept_schedule
        .get(t + 1)
        .filter(|n| *n != concept);
    let query_idx = corpus
        .index_of(query)
        .ok_or_else(|| CorpusError::UnknownSample(query.0.clone()))?;
    let samples = corpus.samples();
    let query_labels = &samples[query_idx].labels;

    let positives: Vec<usize> = corpus
        .concept_positions(concept)?
        .iter()
        .copied()
        .filter(|&i| i != query_idx)
        .filter(|&i| next.is_none_or(|n| samples[i].labels.contains(n)))
        .collect();
    let negatives: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].labels.is_disjoint(query_labels))
        .collect();

    let pos = *rng::choose(rng, &positives).ok_or(StepError::Exhausted(Exhausted::Positive))?;
    let neg = *rng::choose(rng, &negatives).ok_or(StepError::Exhausted(Exhausted::Negative))?;
    let correct = if rng.random_range(0..2u32) == 0 {
        OptionSlot::Option1
    } else {
        OptionSlot::Option2
    };
    let (option1, option2) = match correct {
        OptionSlot::Option1 => (&samples[pos].id, &samples[neg].id),
        OptionSlot::Option2 => (&samples[neg].id, &samples[pos].id),
    };
    Ok(StepCandidates {
        step_index: t,
        concept: concept.clone(),
        query: query.clone(),
        option1: option1.clone(),
        option2: option2.clone(),
        correct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{corpus_of, ids};

    fn set(v: &[&str]) -> BTreeSet<Concept> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn pair_label_examples() {
        assert_eq!(pair_label(&set(&["metal", "painted"]), &set(&["painted"])), 1);
        assert_eq!(pair_label(&set(&["metal"]), &set(&["furry"])), 0);
        assert_eq!(pair_label(&set(&[]), &set(&["metal"])), 0);
    }

    #[test]
    fn build_sets_short_pool() {
        let c = corpus_of(&[
            ("a", &["metal"]),
            ("b", &["metal"]),
            ("c", &["metal", "furry"]),
            ("d", &["furry"]),
            ("e", &["ripe"]),
        ]);
        let s = build_sets(&c, &"a".into(), 3, 1, 0).unwrap();
        let mut pos = s.positives.clone();
        pos.sort();
        assert_eq!(pos, ids(&["b", "c"]));
        assert!(s.short_positives);
        assert!(!s.short_negatives);
        let empty = build_sets(&c, &"a".into(), 0, 0, 0).unwrap();
        assert!(empty.positives.is_empty() && empty.negatives.is_empty());
        assert!(build_sets(&c, &"zz".into(), 1, 1, 0).is_err());
    }

    #[test]
    fn shared_concepts_examples() {
        let c = corpus_of(&[("a", &["metal"]), ("b", &["metal"]), ("c", &["furry"])]);
        assert_eq!(shared_concepts(&c).concepts, set(&["metal"]));
        let d = corpus_of(&[("a", &["metal"]), ("b", &["ripe"]), ("c", &["furry"])]);
        assert!(shared_concepts(&d).concepts.is_empty());
    }

    #[test]
    fn deduction_tuple_examples() {
        let c = corpus_of(&[
            ("a", &["metal", "painted"]),
            ("b", &["painted", "rusty"]),
            ("c", &["sit", "open"]),
            ("d", &["sit", "open"]),
            ("e", &["furry"]),
        ]);
        assert_eq!(deduction_tuple(&c, &"a".into(), &"b".into()).unwrap().shared, set(&["painted"]));
        let t = deduction_tuple(&c, &"c".into(), &"d".into()).unwrap();
        assert_eq!(t.shared.len(), 2);
        assert!(matches!(
            deduction_tuple(&c, &"a".into(), &"e".into()),
            Err(BuildError::NotAssociationPair(..))
        ));
    }

    #[test]
    fn synchronous_schedule_is_constant() {
        let c = corpus_of(&[("a", &["metal"]), ("b", &["metal"]), ("c", &["furry"])]);
        let plan = make_round(&c, RoundKind::Synchronous, &["metal".into()], 500, 1, 3, 2).unwrap();
        assert_eq!(plan.concept_schedule.len(), 500);
        assert!(plan.concept_schedule.iter().all(|x| x == "metal"));
        assert!(c.sample(&plan.start).unwrap().labels.contains("metal"));
    }

    #[test]
    fn asynchronous_schedule_segments() {
        let c = corpus_of(&[
            ("a", &["metal"]),
            ("b", &["metal", "furry"]),
            ("c", &["furry"]),
            ("d", &["ripe"]),
        ]);
        let plan = make_round(
            &c,
            RoundKind::Asynchronous,
            &["metal".into(), "furry".into()],
            6,
            1,
            0,
            2,
        )
        .unwrap();
        assert_eq!(
            plan.concept_schedule,
            vec!["metal", "metal", "furry", "furry", "metal", "metal"]
        );
    }

    #[test]
    fn make_round_rejects_bad_configs() {
        let c = corpus_of(&[
            ("a", &["metal"]),
            ("b", &["metal"]),
            ("c", &["furry"]),
            ("d", &["ripe"]),
        ]);
        // furry has a single sample, so it is not in the shared-concept set.
        assert!(matches!(
            make_round(&c, RoundKind::Asynchronous, &["metal".into(), "furry".into()], 6, 1, 0, 2),
            Err(BuildError::ChainInfeasible(_))
        ));
        assert!(matches!(
            make_round(&c, RoundKind::Synchronous, &["metal".into(), "ripe".into()], 6, 1, 0, 2),
            Err(BuildError::InvalidRound(_))
        ));
        assert!(matches!(
            make_round(&c, RoundKind::Synchronous, &["wooden".into()], 6, 1, 0, 2),
            Err(BuildError::Corpus(CorpusError::UnknownConcept(_)))
        ));
    }

    #[test]
    fn singleton_positive_pool() {
        let c = corpus_of(&[("a", &["metal"]), ("b", &["metal"]), ("c", &["furry"]), ("d", &["ripe"])]);
        let plan = make_round(&c, RoundKind::Synchronous, &["metal".into()], 10, 3, 0, 2).unwrap();
        let mut rng = rng::stream(3, Stream::Steps);
        for _ in 0..50 {
            let s = candidate_step(&c, &plan, 0, &"a".into(), &mut rng).unwrap();
            assert_eq!(s.positive(), &SampleId::from("b"));
        }
    }

    #[test]
    fn covering_query_exhausts_negatives() {
        let c = corpus_of(&[("a", &["metal", "furry"]), ("b", &["metal"]), ("c", &["furry"])]);
        let plan = make_round(&c, RoundKind::Synchronous, &["metal".into()], 10, 3, 0, 2).unwrap();
        let mut rng = rng::stream(3, Stream::Steps);
        assert!(matches!(
            candidate_step(&c, &plan, 0, &"a".into(), &mut rng),
            Err(StepError::Exhausted(Exhausted::Negative))
        ));
    }

    #[test]
    fn sample_examples_are_ground_truth() {
        let c = corpus_of(&[("a", &["metal"]), ("b", &["metal"]), ("c", &["metal", "furry"]), ("d", &["ripe"])]);
        let plan = make_round(&c, RoundKind::Synchronous, &["metal".into()], 10, 3, 3, 2).unwrap();
        let ex = sample_examples(&c, &plan).unwrap();
        assert_eq!(ex.len(), 3);
        for e in ex {
            assert_ne!(e.anchor, e.positive);
            assert!(e.shared.contains("metal"));
        }
    }
}
