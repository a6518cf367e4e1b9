//! Synthetic corpora for tests, demos and smoke runs.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::corpus::{ConceptKind, ConceptVocabulary, Corpus, Sample, SampleId};
use crate::rng::{self, Stream};

pub const ATTRIBUTES: [&str; 8] = [
    "metal", "ripe", "fresh", "natural", "cooked", "painted", "rusty", "furry",
];
pub const AFFORDANCES: [&str; 8] = [
    "break", "carry", "clean", "cut", "open", "push", "sit", "imprint",
];
pub const ACTIONS: [&str; 8] = [
    "run", "hit", "drive", "dress", "cooking", "build", "shake", "cut",
];

const NAMES: [&str; 16] = [
    "broccoli", "pizza", "sandwich", "orange", "kettle", "chair", "bicycle", "cat",
    "teapot", "apple", "bench", "knife", "door", "bottle", "dog", "wrench",
];

/// The eight concepts used for each kind in the reference experiments.
pub fn default_vocabulary(kind: ConceptKind) -> ConceptVocabulary {
    let list: &[&str] = match kind {
        ConceptKind::Attribute => &ATTRIBUTES,
        ConceptKind::Affordance => &AFFORDANCES,
        ConceptKind::Action => &ACTIONS,
    };
    ConceptVocabulary::new(kind, list.iter().map(|s| s.to_string()).collect())
        .expect("static vocabulary is valid")
}

/// Random corpus of `n` samples with one to `max_labels` labels each and
/// resolutions between 150 and 600 pixels per side.
pub fn synthetic_corpus(kind: ConceptKind, n: usize, max_labels: usize, seed: u64) -> Corpus {
    let vocab = default_vocabulary(kind);
    let mut rng = rng::stream(seed, Stream::Sets);
    let samples = (0..n)
        .map(|i| {
            let k = rng.random_range(1..=max_labels.max(1));
            let labels: BTreeSet<String> = rng::sample_without_replacement(&mut rng, &vocab.concepts, k)
                .into_iter()
                .collect();
            Sample {
                id: SampleId(format!("s{i:04}")),
                image_ref: format!("images/s{i:04}.jpg"),
                display_name: NAMES[rng.random_range(0..NAMES.len())].to_string(),
                labels,
                width: Some(rng.random_range(150..=600)),
                height: Some(rng.random_range(150..=600)),
            }
        })
        .collect();
    let mut meta = BTreeMap::new();
    meta.insert("generator".to_string(), serde_json::json!("synthetic"));
    meta.insert("seed".to_string(), serde_json::json!(seed));
    Corpus::from_samples(vocab, samples, meta)
        .expect("synthetic samples are valid")
        .0
}

/// Small hand-written corpus: `(id, labels)` pairs over the attribute vocabulary
/// extended with any extra labels used.
pub fn corpus_of(items: &[(&str, &[&str])]) -> Corpus {
    let mut concepts: Vec<String> = ATTRIBUTES.iter().map(|s| s.to_string()).collect();
    for (_, labels) in items {
        for l in *labels {
            if !concepts.iter().any(|c| c == l) {
                concepts.push(l.to_string());
            }
        }
    }
    let vocab = ConceptVocabulary::new(ConceptKind::Attribute, concepts).expect("valid");
    let samples = items
        .iter()
        .map(|(id, labels)| Sample {
            id: SampleId(id.to_string()),
            image_ref: format!("{id}.jpg"),
            display_name: format!("obj-{id}"),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            width: Some(300),
            height: Some(300),
        })
        .collect();
    Corpus::from_samples(vocab, samples, BTreeMap::new()).expect("valid").0
}

pub fn ids(v: &[&str]) -> Vec<SampleId> {
    v.iter().map(|s| SampleId::from(*s)).collect()
}
