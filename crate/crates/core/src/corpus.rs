//! Labeled image corpus: manifest ingestion, validation and concept indexing.
//!
//! A manifest is line-delimited JSON. The first non-blank line is the header
//! `{"kind": "attribute", "concepts": [...]}`; every following line is a sample
//! record `{"id", "image", "name", "labels": [...], "width"?, "height"?}`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub type Concept = String;

/// Opaque, corpus-unique sample identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(pub String);

impl SampleId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SampleId {
    fn from(s: &str) -> Self {
        SampleId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptKind {
    Attribute,
    Affordance,
    Action,
}

impl ConceptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConceptKind::Attribute => "attribute",
            ConceptKind::Affordance => "affordance",
            ConceptKind::Action => "action",
        }
    }

    pub const ALL: [ConceptKind; 3] = [
        ConceptKind::Attribute,
        ConceptKind::Affordance,
        ConceptKind::Action,
    ];
}

impl fmt::Display for ConceptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ConceptKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "attribute" => Ok(ConceptKind::Attribute),
            "affordance" => Ok(ConceptKind::Affordance),
            "action" => Ok(ConceptKind::Action),
            other => Err(format!("unknown concept kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptVocabulary {
    pub kind: ConceptKind,
    pub concepts: Vec<Concept>,
}

impl ConceptVocabulary {
    pub fn new(kind: ConceptKind, concepts: Vec<Concept>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for c in &concepts {
            if c.trim().is_empty() {
                return Err(CorpusError::InvalidVocabulary("empty concept".into()));
            }
            if !seen.insert(c.as_str()) {
                return Err(CorpusError::InvalidVocabulary(format!(
                    "duplicate concept '{c}'"
                )));
            }
        }
        Ok(Self { kind, concepts })
    }

    pub fn contains(&self, concept: &str) -> bool {
        self.concepts.iter().any(|c| c == concept)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: SampleId,
    pub image_ref: String,
    pub display_name: String,
    pub labels: BTreeSet<Concept>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

impl Sample {
    /// Pixel count, or `None` when either dimension is missing.
    pub fn pixels(&self) -> Option<u64> {
        Some(u64::from(self.width?) * u64::from(self.height?))
    }

    pub fn resolution_unknown(&self) -> bool {
        self.pixels().is_none()
    }
}

/// A problem with one manifest record that caused it to be dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "line {}: record '{}': {}", self.line, id, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

/// Machine-readable outcome of a manifest load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub source: String,
    pub accepted: usize,
    pub rejected: usize,
    pub resolution_unknown: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("manifest has no header record")]
    MissingHeader,
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("unknown concept '{0}'")]
    UnknownConcept(String),
    #[error("unknown sample '{0}'")]
    UnknownSample(String),
}

#[derive(Debug, Deserialize)]
struct HeaderRecord {
    kind: ConceptKind,
    concepts: Vec<Concept>,
    #[serde(default)]
    meta: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRecord {
    id: String,
    image: String,
    name: String,
    labels: Vec<Concept>,
    #[serde(default)]
    width: Option<u32>,
    #[serde(default)]
    height: Option<u32>,
}

/// Validated, immutable corpus with a concept index.
#[derive(Debug, Clone)]
pub struct Corpus {
    samples: Vec<Sample>,
    vocabulary: ConceptVocabulary,
    source_meta: BTreeMap<String, serde_json::Value>,
    by_id: HashMap<SampleId, usize>,
    by_concept: BTreeMap<Concept, Vec<usize>>,
}

impl Corpus {
    /// Builds a corpus from already-parsed samples, dropping invalid ones.
    ///
    /// Dropped samples are reported as diagnostics with `line = position + 1`.
    pub fn from_samples(
        vocabulary: ConceptVocabulary,
        samples: Vec<Sample>,
        source_meta: BTreeMap<String, serde_json::Value>,
    ) -> Result<(Corpus, Vec<Diagnostic>), CorpusError> {
        let mut diagnostics = Vec::new();
        let mut kept = Vec::with_capacity(samples.len());
        let mut by_id = HashMap::new();
        for (pos, sample) in samples.into_iter().enumerate() {
            match check_sample(&vocabulary, &by_id, &sample) {
                Ok(()) => {
                    by_id.insert(sample.id.clone(), kept.len());
                    kept.push(sample);
                }
                Err(message) => diagnostics.push(Diagnostic {
                    line: pos + 1,
                    id: Some(sample.id.0.clone()),
                    message,
                }),
            }
        }
        if kept.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut by_concept: BTreeMap<Concept, Vec<usize>> = vocabulary
            .concepts
            .iter()
            .map(|c| (c.clone(), Vec::new()))
            .collect();
        for (idx, sample) in kept.iter().enumerate() {
            for label in &sample.labels {
                by_concept.get_mut(label).expect("validated label").push(idx);
            }
        }
        Ok((
            Corpus {
                samples: kept,
                vocabulary,
                source_meta,
                by_id,
                by_concept,
            },
            diagnostics,
        ))
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn vocabulary(&self) -> &ConceptVocabulary {
        &self.vocabulary
    }

    pub fn kind(&self) -> ConceptKind {
        self.vocabulary.kind
    }

    pub fn source_meta(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.source_meta
    }

    pub fn index_of(&self, id: &SampleId) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn sample(&self, id: &SampleId) -> Result<&Sample, CorpusError> {
        self.index_of(id)
            .map(|i| &self.samples[i])
            .ok_or_else(|| CorpusError::UnknownSample(id.0.clone()))
    }

    /// Corpus positions of the samples labeled with `concept`, ascending.
    pub fn concept_positions(&self, concept: &str) -> Result<&[usize], CorpusError> {
        self.by_concept
            .get(concept)
            .map(Vec::as_slice)
            .ok_or_else(|| CorpusError::UnknownConcept(concept.to_string()))
    }

    /// Ids of exactly the samples whose labels contain `concept`.
    pub fn concept_index(&self, concept: &str) -> Result<BTreeSet<SampleId>, CorpusError> {
        Ok(self
            .concept_positions(concept)?
            .iter()
            .map(|&i| self.samples[i].id.clone())
            .collect())
    }

    /// Returns a new corpus holding only the samples accepted by `keep`.
    pub fn retain<F>(&self, mut keep: F) -> Result<Corpus, CorpusError>
    where
        F: FnMut(&Sample) -> Option<Sample>,
    {
        let samples = self.samples.iter().filter_map(&mut keep).collect();
        Corpus::from_samples(self.vocabulary.clone(), samples, self.source_meta.clone())
            .map(|(c, _)| c)
    }
}

fn check_sample(
    vocabulary: &ConceptVocabulary,
    seen: &HashMap<SampleId, usize>,
    sample: &Sample,
) -> Result<(), String> {
    if sample.id.0.is_empty() {
        return Err("empty id".into());
    }
    if seen.contains_key(&sample.id) {
        return Err("duplicate id".into());
    }
    if sample.display_name.trim().is_empty() {
        return Err("missing display name".into());
    }
    if sample.labels.is_empty() {
        return Err("no labels".into());
    }
    let unknown: Vec<&str> = sample
        .labels
        .iter()
        .filter(|l| !vocabulary.contains(l))
        .map(String::as_str)
        .collect();
    if !unknown.is_empty() {
        return Err(format!("unknown labels: {}", unknown.join(", ")));
    }
    if sample.pixels() == Some(0) {
        return Err("zero-area resolution".into());
    }
    Ok(())
}

/// Parses a manifest from text. `source` is only used for the report.
pub fn parse_manifest(
    text: &str,
    source: &str,
) -> Result<(Corpus, ValidationReport), CorpusError> {
    let mut header: Option<HeaderRecord> = None;
    let mut samples = Vec::new();
    let mut lines = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        if header.is_none() {
            let h: HeaderRecord =
                serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
                    line,
                    message: format!("bad header: {e}"),
                })?;
            header = Some(h);
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
            line,
            message: e.to_string(),
        })?;
        lines.push(line);
        samples.push(Sample {
            id: SampleId(rec.id),
            image_ref: rec.image,
            display_name: rec.name,
            labels: rec.labels.into_iter().collect(),
            width: rec.width,
            height: rec.height,
        });
    }
    let header = header.ok_or(CorpusError::MissingHeader)?;
    let vocabulary = ConceptVocabulary::new(header.kind, header.concepts)?;
    let total = samples.len();
    let (corpus, mut diagnostics) = Corpus::from_samples(vocabulary, samples, header.meta)?;
    for d in &mut diagnostics {
        d.line = lines[d.line - 1];
    }
    let report = ValidationReport {
        source: source.to_string(),
        accepted: corpus.len(),
        rejected: total - corpus.len(),
        resolution_unknown: corpus
            .samples()
            .iter()
            .filter(|s| s.resolution_unknown())
            .map(|s| s.id.0.clone())
            .collect(),
        diagnostics,
    };
    Ok((corpus, report))
}

/// Loads and validates a manifest file. Diagnostics are logged at warn level
/// and returned in the report.
pub fn load_manifest(path: &Path) -> Result<(Corpus, ValidationReport), CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (corpus, report) = parse_manifest(&text, &path.display().to_string())?;
    for d in &report.diagnostics {
        log::warn!("{}: {d}", path.display());
    }
    Ok((corpus, report))
}

/// Serializes a corpus back into manifest text.
pub fn write_manifest(corpus: &Corpus) -> String {
    let mut out = serde_json::json!({
        "kind": corpus.kind(),
        "concepts": corpus.vocabulary().concepts,
    });
    if !corpus.source_meta.is_empty() {
        out["meta"] = serde_json::to_value(&corpus.source_meta).expect("meta is json");
    }
    let mut text = out.to_string();
    text.push('\n');
    for s in corpus.samples() {
        let mut rec = serde_json::json!({
            "id": s.id,
            "image": s.image_ref,
            "name": s.display_name,
            "labels": s.labels,
        });
        if let Some(w) = s.width {
            rec["width"] = w.into();
        }
        if let Some(h) = s.height {
            rec["height"] = h.into();
        }
        text.push_str(&rec.to_string());
        text.push('\n');
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = r#"{"kind":"attribute","concepts":["metal","furry","rusty"]}"#;

    fn manifest(records: &[&str]) -> String {
        let mut s = String::from(HEADER);
        for r in records {
            s.push('\n');
            s.push_str(r);
        }
        s
    }

    fn abc() -> Corpus {
        let text = manifest(&[
            r#"{"id":"a","image":"a.jpg","name":"pan","labels":["metal"],"width":300,"height":300}"#,
            r#"{"id":"b","image":"b.jpg","name":"robot dog","labels":["metal","furry"],"width":300,"height":300}"#,
            r#"{"id":"c","image":"c.jpg","name":"cat","labels":["furry"]}"#,
        ]);
        parse_manifest(&text, "inline").unwrap().0
    }

    #[test]
    fn three_valid_records() {
        let c = abc();
        assert_eq!(c.len(), 3);
        assert_eq!(c.vocabulary().concepts, vec!["metal", "furry", "rusty"]);
    }

    #[test]
    fn unknown_label_drops_record() {
        let text = manifest(&[
            r#"{"id":"a","image":"a.jpg","name":"pan","labels":["metal"]}"#,
            r#"{"id":"w","image":"w.jpg","name":"chair","labels":["wooden"]}"#,
        ]);
        let (c, report) = parse_manifest(&text, "inline").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(report.rejected, 1);
        assert_eq!(report.diagnostics[0].line, 3);
        assert!(report.diagnostics[0].message.contains("wooden"));
    }

    #[test]
    fn empty_manifest_is_an_error() {
        assert!(matches!(
            parse_manifest(HEADER, "inline"),
            Err(CorpusError::EmptyCorpus)
        ));
        assert!(matches!(
            parse_manifest("", "inline"),
            Err(CorpusError::MissingHeader)
        ));
    }

    #[test]
    fn malformed_record_reports_line() {
        let text = manifest(&[r#"{"id":"a","image":"a.jpg","name":"pan","labels":["metal"]}"#, "{oops"]);
        match parse_manifest(&text, "inline") {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_unlabeled_records_dropped() {
        let text = manifest(&[
            r#"{"id":"a","image":"a.jpg","name":"pan","labels":["metal"]}"#,
            r#"{"id":"a","image":"a2.jpg","name":"pot","labels":["metal"]}"#,
            r#"{"id":"e","image":"e.jpg","name":"thing","labels":[]}"#,
            r#"{"id":"z","image":"z.jpg","name":"zero","labels":["metal"],"width":0,"height":10}"#,
        ]);
        let (c, report) = parse_manifest(&text, "inline").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(report.diagnostics.len(), 3);
    }

    #[test]
    fn missing_resolution_is_flagged() {
        let (_, report) = parse_manifest(
            &manifest(&[r#"{"id":"c","image":"c.jpg","name":"cat","labels":["furry"]}"#]),
            "inline",
        )
        .unwrap();
        assert_eq!(report.resolution_unknown, vec!["c".to_string()]);
    }

    #[test]
    fn concept_index_examples() {
        let c = abc();
        let ids = |v: &[&str]| v.iter().map(|s| SampleId::from(*s)).collect::<BTreeSet<_>>();
        assert_eq!(c.concept_index("metal").unwrap(), ids(&["a", "b"]));
        assert_eq!(c.concept_index("furry").unwrap(), ids(&["b", "c"]));
        assert!(c.concept_index("rusty").unwrap().is_empty());
        assert!(matches!(
            c.concept_index("wooden"),
            Err(CorpusError::UnknownConcept(_))
        ));
    }

    #[test]
    fn manifest_round_trip_is_deterministic() {
        let c = abc();
        let text = write_manifest(&c);
        let (again, _) = parse_manifest(&text, "inline").unwrap();
        assert_eq!(again.samples(), c.samples());
        assert_eq!(write_manifest(&again), text);
    }
}
