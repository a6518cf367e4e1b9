//! Memory bases carried between association steps.
//!
//! `StructM` and `NLM` keep per-concept entries with an attention weight that
//! is reinforced by the repetition weight when the concept shows up in a step's
//! evidence and decays by the forgetting decrement otherwise. Entries whose
//! weight drops to zero or below are forgotten. `ChainM` keeps the
//! object -> concept -> object trail instead, and `NoM` keeps nothing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::builder::DeductionTuple;
use crate::corpus::{Concept, ConceptKind, Corpus, CorpusError};

pub const DEFAULT_REPETITION_WEIGHT: f64 = 1.0;
pub const DEFAULT_FORGETTING_DECREMENT: f64 = 0.2;
pub const DEFAULT_MAX_OBJECTS: usize = 12;
pub const DEFAULT_CHAIN_TAIL: usize = 40;

const WEIGHT_SCALE: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MemoryStrategy {
    NoM,
    StructM,
    #[serde(rename = "NLM")]
    Nlm,
    ChainM,
}

impl MemoryStrategy {
    pub const ALL: [MemoryStrategy; 4] = [
        MemoryStrategy::NoM,
        MemoryStrategy::StructM,
        MemoryStrategy::Nlm,
        MemoryStrategy::ChainM,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MemoryStrategy::NoM => "NoM",
            MemoryStrategy::StructM => "StructM",
            MemoryStrategy::Nlm => "NLM",
            MemoryStrategy::ChainM => "ChainM",
        }
    }

    pub fn has_attention(self) -> bool {
        matches!(self, MemoryStrategy::StructM | MemoryStrategy::Nlm)
    }
}

impl fmt::Display for MemoryStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MemoryStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nom" | "none" => Ok(MemoryStrategy::NoM),
            "structm" | "struct" => Ok(MemoryStrategy::StructM),
            "nlm" => Ok(MemoryStrategy::Nlm),
            "chainm" | "chain" => Ok(MemoryStrategy::ChainM),
            other => Err(format!("unknown memory strategy '{other}'")),
        }
    }
}

/// Attention weight in fixed point (1e-9 resolution), so that repeated
/// decrements reach exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Weight(i64);

impl Weight {
    pub fn from_f64(w: f64) -> Weight {
        Weight((w * WEIGHT_SCALE).round() as i64)
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / WEIGHT_SCALE
    }

    pub fn units(self) -> i64 {
        self.0
    }

    pub fn is_spent(self) -> bool {
        self.0 <= 0
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        f64::deserialize(d).map(Weight::from_f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryParams {
    pub repetition_weight: f64,
    pub forgetting_decrement: f64,
    pub max_objects: usize,
    pub chain_tail: usize,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self {
            repetition_weight: DEFAULT_REPETITION_WEIGHT,
            forgetting_decrement: DEFAULT_FORGETTING_DECREMENT,
            max_objects: DEFAULT_MAX_OBJECTS,
            chain_tail: DEFAULT_CHAIN_TAIL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub concept: Concept,
    pub objects: Vec<String>,
    pub weight: Weight,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainLink {
    pub from: String,
    pub concept: Concept,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MemoryError {
    #[error("strategy {0} has no attention")]
    NoAttention(MemoryStrategy),
    #[error("strategy {0} does not keep a chain")]
    NotChain(MemoryStrategy),
    #[error("empty chain token")]
    EmptyToken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryBase {
    pub strategy: MemoryStrategy,
    pub entries: Vec<MemoryEntry>,
    pub chain: Vec<ChainLink>,
    pub params: MemoryParams,
}

impl MemoryBase {
    pub fn new(strategy: MemoryStrategy, params: MemoryParams) -> Self {
        Self {
            strategy,
            entries: Vec::new(),
            chain: Vec::new(),
            params,
        }
    }

    pub fn entry(&self, concept: &str) -> Option<&MemoryEntry> {
        self.entries.iter().find(|e| e.concept == concept)
    }

    /// One attention step: reinforce entries named in `evidence`, decay the
    /// rest, insert new evidence concepts at the repetition weight, append the
    /// evidence objects and forget entries whose weight is no longer positive.
    pub fn update_attention(
        &mut self,
        evidence: &BTreeSet<Concept>,
        new_objects: &BTreeMap<Concept, Vec<String>>,
    ) -> Result<(), MemoryError> {
        if !self.strategy.has_attention() {
            return Err(MemoryError::NoAttention(self.strategy));
        }
        let reinforce = Weight::from_f64(self.params.repetition_weight);
        let decay = Weight::from_f64(self.params.forgetting_decrement);
        for e in &mut self.entries {
            if evidence.contains(&e.concept) {
                e.weight.0 += reinforce.0;
            } else {
                e.weight.0 -= decay.0;
            }
        }
        for c in evidence {
            if self.entry(c).is_none() {
                self.entries.push(MemoryEntry {
                    concept: c.clone(),
                    objects: Vec::new(),
                    weight: reinforce,
                });
            }
        }
        let cap = self.params.max_objects;
        for e in &mut self.entries {
            if !evidence.contains(&e.concept) {
                continue;
            }
            for obj in new_objects.get(&e.concept).into_iter().flatten() {
                if !obj.is_empty() && !e.objects.contains(obj) {
                    e.objects.push(obj.clone());
                }
            }
            if cap > 0 && e.objects.len() > cap {
                let excess = e.objects.len() - cap;
                e.objects.drain(..excess);
            }
        }
        self.entries.retain(|e| !e.weight.is_spent());
        Ok(())
    }

    pub fn append_chain(&mut self, from: &str, concept: &str, to: &str) -> Result<(), MemoryError> {
        if self.strategy != MemoryStrategy::ChainM {
            return Err(MemoryError::NotChain(self.strategy));
        }
        if from.is_empty() || concept.is_empty() || to.is_empty() {
            return Err(MemoryError::EmptyToken);
        }
        self.chain.push(ChainLink {
            from: from.to_string(),
            concept: concept.to_string(),
            to: to.to_string(),
        });
        Ok(())
    }

    /// `a->c->b->c->d`, joining links whose endpoints meet; disconnected runs
    /// are separated by `; `. Only the last `chain_tail` links are shown.
    pub fn chain_text(&self) -> String {
        let tail = self.params.chain_tail;
        let start = if tail > 0 { self.chain.len().saturating_sub(tail) } else { 0 };
        let mut out = String::new();
        let mut last: Option<&str> = None;
        for link in &self.chain[start..] {
            if last != Some(link.from.as_str()) {
                if last.is_some() {
                    out.push_str("; ");
                }
                out.push_str(&link.from);
            }
            out.push_str("->");
            out.push_str(&link.concept);
            out.push_str("->");
            out.push_str(&link.to);
            last = Some(&link.to);
        }
        out
    }

    /// Entries by descending weight; equal weights keep insertion order.
    pub fn ranked_entries(&self) -> Vec<&MemoryEntry> {
        let mut v: Vec<&MemoryEntry> = self.entries.iter().collect();
        v.sort_by_key(|e| std::cmp::Reverse(e.weight));
        v
    }

    /// Memory context for the association prompt (instruction plus body).
    /// Empty when the strategy keeps nothing or nothing has been learnt yet.
    pub fn render(&self, kind: ConceptKind) -> String {
        match self.strategy {
            MemoryStrategy::NoM => String::new(),
            MemoryStrategy::StructM => {
                if self.entries.is_empty() {
                    return String::new();
                }
                let body: Vec<String> = self
                    .ranked_entries()
                    .into_iter()
                    .map(|e| format!("{}: {}", py_str(&e.concept), py_list(&e.objects)))
                    .collect();
                format!("Given the memory: {{{}}}", body.join(", "))
            }
            MemoryStrategy::Nlm => {
                if self.entries.is_empty() {
                    return String::new();
                }
                let mut out = nl_instruction(kind);
                for e in self.ranked_entries() {
                    out.push('\n');
                    out.push_str(&format!("{} have {} {}", py_list(&e.objects), e.concept, kind));
                }
                out
            }
            MemoryStrategy::ChainM => {
                if self.chain.is_empty() {
                    return String::new();
                }
                format!("{}\n{}", nl_instruction(kind), self.chain_text())
            }
        }
    }

    /// Loads ground-truth example pairs into memory before a round starts.
    /// `focus` picks the concept used for chain links; otherwise the first
    /// shared concept is used.
    pub fn seed_examples(
        &mut self,
        examples: &[DeductionTuple],
        corpus: &Corpus,
        focus: Option<&str>,
    ) -> Result<(), CorpusError> {
        for ex in examples {
            let a = corpus.sample(&ex.anchor)?.display_name.clone();
            let p = corpus.sample(&ex.positive)?.display_name.clone();
            match self.strategy {
                MemoryStrategy::NoM => {}
                MemoryStrategy::StructM | MemoryStrategy::Nlm => {
                    let objects = ex
                        .shared
                        .iter()
                        .map(|c| (c.clone(), vec![a.clone(), p.clone()]))
                        .collect();
                    self.update_attention(&ex.shared, &objects)
                        .expect("attention strategy");
                }
                MemoryStrategy::ChainM => {
                    let concept = focus
                        .filter(|f| ex.shared.contains(*f))
                        .map(str::to_string)
                        .or_else(|| ex.shared.iter().next().cloned());
                    if let Some(c) = concept {
                        self.append_chain(&a, &c, &p).expect("chain strategy");
                    }
                }
            }
        }
        Ok(())
    }
}

fn nl_instruction(kind: ConceptKind) -> String {
    format!("Before this question, you have learnt that related pictures may have the following {kind}:")
}

/// Python-style single-quoted string literal.
pub(crate) fn py_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for ch in s.chars() {
        match ch {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

pub(crate) fn py_list(items: &[String]) -> String {
    let parts: Vec<String> = items.iter().map(|s| py_str(s)).collect();
    format!("[{}]", parts.join(", "))
}
