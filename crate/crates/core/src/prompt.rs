//! Prompt assembly and response parsing.
//!
//! Every prompt has three parts: memory context, question content (question
//! instruction plus the question with `<image>` placeholders), and an output
//! instruction. Image references travel alongside, in placeholder order.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Concept, ConceptKind, ConceptVocabulary};
use crate::memory::{py_str, MemoryBase};

pub const IMAGE_PLACEHOLDER: &str = "<image>";

/// Template strings; `{kind}`, `{concept}` and `{options}` are substituted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub association_instruction: String,
    pub association_question: String,
    pub association_output: String,
    pub association_retry: String,
    pub deduction_instruction: String,
    pub deduction_question: String,
    pub deduction_output: String,
    pub verify_question: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            association_instruction: "Determine the relationship between the original image and the candidate images, and select the images with the same {kind} as the original image.".into(),
            association_question: "Original image:<image>. Candidate images: Image1:<image>, Image2:<image>.".into(),
            association_output: "Your response should be direct and exclusively only include one of the following items. Options: [Image1, Image2].".into(),
            association_retry: "Answer with exactly one token: Image1 or Image2.".into(),
            deduction_instruction: "Generate the common {kind} between the original image and selected images.".into(),
            deduction_question: "Original image:<image>. Selected image: <image>.".into(),
            deduction_output: "Your response should only include shared {kind} in the following options. Options:[{options}]".into(),
            verify_question: "Does the object in this image have the {kind} '{concept}'? Answer Yes or No.".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("prompt has {placeholders} image placeholders but {images} images")]
    PlaceholderMismatch { placeholders: usize, images: usize },
    #[error("empty concept vocabulary")]
    EmptyVocabulary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptParts {
    pub memory_text: String,
    pub question_instruction: String,
    pub question: String,
    pub output_instruction: String,
    pub images: Vec<String>,
}

impl PromptParts {
    pub fn new(
        memory_text: String,
        question_instruction: String,
        question: String,
        output_instruction: String,
        images: Vec<String>,
    ) -> Result<Self, PromptError> {
        let placeholders = question.matches(IMAGE_PLACEHOLDER).count();
        if placeholders != images.len() {
            return Err(PromptError::PlaceholderMismatch {
                placeholders,
                images: images.len(),
            });
        }
        Ok(Self {
            memory_text,
            question_instruction,
            question,
            output_instruction,
            images,
        })
    }

    /// The parts in their fixed order, skipping an empty memory context.
    pub fn segments(&self) -> Vec<&str> {
        [
            self.memory_text.as_str(),
            &self.question_instruction,
            &self.question,
            &self.output_instruction,
        ]
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect()
    }

    /// Full prompt text, one part per line.
    pub fn text(&self) -> String {
        self.segments().join("\n")
    }

    /// Appends a line to the output instruction (used for the stricter retry).
    pub fn with_output_suffix(&self, line: &str) -> PromptParts {
        let mut p = self.clone();
        p.output_instruction = format!("{} {line}", p.output_instruction);
        p
    }
}

fn fill(template: &str, kind: ConceptKind) -> String {
    template.replace("{kind}", kind.as_str())
}

pub fn render_association_prompt(
    templates: &PromptTemplates,
    memory: &MemoryBase,
    kind: ConceptKind,
    query: &str,
    option1: &str,
    option2: &str,
) -> Result<PromptParts, PromptError> {
    PromptParts::new(
        memory.render(kind),
        fill(&templates.association_instruction, kind),
        fill(&templates.association_question, kind),
        fill(&templates.association_output, kind),
        vec![query.to_string(), option1.to_string(), option2.to_string()],
    )
}

pub fn render_deduction_prompt(
    templates: &PromptTemplates,
    vocab: &ConceptVocabulary,
    query: &str,
    selected: &str,
) -> Result<PromptParts, PromptError> {
    if vocab.concepts.is_empty() {
        return Err(PromptError::EmptyVocabulary);
    }
    let options: Vec<String> = vocab.concepts.iter().map(|c| py_str(c)).collect();
    PromptParts::new(
        String::new(),
        fill(&templates.deduction_instruction, vocab.kind),
        fill(&templates.deduction_question, vocab.kind),
        fill(&templates.deduction_output, vocab.kind).replace("{options}", &options.join(", ")),
        vec![query.to_string(), selected.to_string()],
    )
}

pub fn render_verify_prompt(
    templates: &PromptTemplates,
    kind: ConceptKind,
    concept: &str,
    image: &str,
) -> PromptParts {
    PromptParts::new(
        String::new(),
        fill(&templates.verify_question, kind).replace("{concept}", concept),
        IMAGE_PLACEHOLDER.to_string(),
        String::new(),
        vec![image.to_string()],
    )
    .expect("one placeholder, one image")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Option1,
    Option2,
    Unparseable,
}

impl From<crate::builder::OptionSlot> for Choice {
    fn from(s: crate::builder::OptionSlot) -> Self {
        match s {
            crate::builder::OptionSlot::Option1 => Choice::Option1,
            crate::builder::OptionSlot::Option2 => Choice::Option2,
        }
    }
}

impl Choice {
    pub fn slot(self) -> Option<crate::builder::OptionSlot> {
        match self {
            Choice::Option1 => Some(crate::builder::OptionSlot::Option1),
            Choice::Option2 => Some(crate::builder::OptionSlot::Option2),
            Choice::Unparseable => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedChoice {
    pub choice: Choice,
    pub raw: String,
}

/// Finds `image1` / `image 2` style tokens, case-insensitively. Exactly one
/// distinct option named gives that option; none or both is unparseable.
pub fn parse_choice(text: &str) -> ParsedChoice {
    let lower = text.to_lowercase();
    let bytes = lower.as_bytes();
    let mut seen = BTreeSet::new();
    let mut from = 0;
    while let Some(pos) = lower[from..].find("image") {
        let start = from + pos;
        from = start + "image".len();
        if start > 0 && is_word_byte(bytes[start - 1]) {
            continue;
        }
        let mut i = from;
        while i < bytes.len() && (bytes[i] == b' ' || bytes[i] == b'_' || bytes[i] == b'-') {
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'1' || bytes[i] == b'2') {
            let after = i + 1;
            if after >= bytes.len() || !bytes[after].is_ascii_digit() {
                seen.insert(bytes[i]);
            }
        }
    }
    let choice = match (seen.contains(&b'1'), seen.contains(&b'2')) {
        (true, false) => Choice::Option1,
        (false, true) => Choice::Option2,
        _ => Choice::Unparseable,
    };
    ParsedChoice {
        choice,
        raw: text.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedConcepts {
    pub concepts: BTreeSet<Concept>,
    pub raw: String,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    if phrase.is_empty() {
        return false;
    }
    let bytes = haystack.as_bytes();
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(phrase) {
        let start = from + pos;
        let end = start + phrase.len();
        let left_ok = start == 0 || !is_word_byte(bytes[start - 1]);
        let right_ok = end == bytes.len() || !is_word_byte(bytes[end]);
        if left_ok && right_ok {
            return true;
        }
        from = start + 1;
        while !haystack.is_char_boundary(from) {
            from += 1;
        }
    }
    false
}

/// Vocabulary concepts that occur as whole words (or whole phrases).
pub fn parse_concepts(text: &str, vocab: &ConceptVocabulary) -> ParsedConcepts {
    let lower = text.to_lowercase();
    let concepts = vocab
        .concepts
        .iter()
        .filter(|c| contains_phrase(&lower, &c.to_lowercase()))
        .cloned()
        .collect();
    ParsedConcepts {
        concepts,
        raw: text.to_string(),
    }
}

/// Leading yes/no token, ignoring case, whitespace, quotes and markup.
pub fn parse_yes_no(text: &str) -> Option<bool> {
    let trimmed = text.trim_start_matches(|c: char| !c.is_alphanumeric());
    let word: String = trimmed
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    match word.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::default_vocabulary;
    use crate::memory::{MemoryParams, MemoryStrategy};

    #[test]
    fn nom_association_prompt() {
        let t = PromptTemplates::default();
        let m = MemoryBase::new(MemoryStrategy::NoM, MemoryParams::default());
        let p = render_association_prompt(&t, &m, ConceptKind::Attribute, "q.jpg", "a.jpg", "b.jpg").unwrap();
        assert_eq!(p.memory_text, "");
        assert_eq!(p.question_instruction, "Determine the relationship between the original image and the candidate images, and select the images with the same attribute as the original image.");
        assert_eq!(p.question, "Original image:<image>. Candidate images: Image1:<image>, Image2:<image>.");
        assert_eq!(p.output_instruction, "Your response should be direct and exclusively only include one of the following items. Options: [Image1, Image2].");
        assert_eq!(p.images, vec!["q.jpg", "a.jpg", "b.jpg"]);
    }

    #[test]
    fn placeholder_mismatch_is_rejected() {
        let err = PromptParts::new(String::new(), "i".into(), "<image> <image>".into(), "o".into(), vec!["x".into()]);
        assert_eq!(err, Err(PromptError::PlaceholderMismatch { placeholders: 2, images: 1 }));
    }

    #[test]
    fn deduction_prompt_options() {
        let t = PromptTemplates::default();
        let p = render_deduction_prompt(&t, &default_vocabulary(ConceptKind::Affordance), "q", "s").unwrap();
        assert!(p.output_instruction.contains("'break', 'carry', 'clean', 'cut', 'open', 'push', 'sit', 'imprint'"));
        assert_eq!(p.question_instruction, "Generate the common affordance between the original image and selected images.");
        assert!(p.memory_text.is_empty());
        let empty = ConceptVocabulary { kind: ConceptKind::Attribute, concepts: vec![] };
        assert_eq!(render_deduction_prompt(&t, &empty, "q", "s"), Err(PromptError::EmptyVocabulary));
    }

    #[test]
    fn choice_parsing() {
        assert_eq!(parse_choice("Image1").choice, Choice::Option1);
        assert_eq!(parse_choice("I choose image 2 because of the fur").choice, Choice::Option2);
        assert_eq!(parse_choice("Both Image1 and Image2").choice, Choice::Unparseable);
        assert_eq!(parse_choice("").choice, Choice::Unparseable);
        assert_eq!(parse_choice("image12").choice, Choice::Unparseable);
        assert_eq!(parse_choice("IMAGE1, definitely image1").choice, Choice::Option1);
    }

    #[test]
    fn concept_parsing() {
        let v = default_vocabulary(ConceptKind::Attribute);
        let got = parse_concepts("metal and Painted", &v).concepts;
        assert_eq!(got, ["metal", "painted"].iter().map(|s| s.to_string()).collect());
        assert!(parse_concepts("metallic", &v).concepts.is_empty());
        assert!(parse_concepts("", &v).concepts.is_empty());
        let aff = default_vocabulary(ConceptKind::Affordance);
        assert!(parse_concepts("a cutting-board", &aff).concepts.is_empty());
    }

    #[test]
    fn multi_word_concepts_match_as_phrases() {
        let v = ConceptVocabulary::new(ConceptKind::Action, vec!["ride bike".into(), "run".into()]).unwrap();
        assert_eq!(parse_concepts("They Ride Bike.", &v).concepts.len(), 1);
        assert!(parse_concepts("ride a bike", &v).concepts.is_empty());
    }

    #[test]
    fn yes_no_parsing() {
        assert_eq!(parse_yes_no("Yes."), Some(true));
        assert_eq!(parse_yes_no("  **no**, it is plastic"), Some(false));
        assert_eq!(parse_yes_no("Perhaps"), None);
        assert_eq!(parse_yes_no("Yesterday"), None);
    }
}
