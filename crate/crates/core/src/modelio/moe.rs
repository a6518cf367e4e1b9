use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{complete, CompletionRequest, ModelClient, ModelError};
use crate::prompt::{parse_choice, Choice, ParsedChoice};

/// One member's contribution to a vote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub client: String,
    pub choice: Choice,
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoeOutcome {
    pub decision: ParsedChoice,
    pub votes: Vec<Vote>,
    /// Positions of the members whose vote matches the decision.
    pub majority: Vec<usize>,
}

/// Per-step majority vote. Unparseable answers and failed calls abstain; a tie
/// (or a single-vote field) goes to the earliest-listed member with a parseable
/// answer. Fails only when every member fails.
pub fn moe_vote(
    clients: &[&dyn ModelClient],
    request: &CompletionRequest,
    deadline: Duration,
) -> Result<MoeOutcome, ModelError> {
    assert!(!clients.is_empty(), "moe_vote needs at least one client");
    let mut votes = Vec::with_capacity(clients.len());
    let mut last_err = None;
    for c in clients {
        match complete(*c, request, deadline) {
            Ok(text) => {
                let parsed = parse_choice(&text);
                votes.push(Vote {
                    client: c.id().to_string(),
                    choice: parsed.choice,
                    raw: text,
                    error: None,
                });
            }
            Err(e) => {
                votes.push(Vote {
                    client: c.id().to_string(),
                    choice: Choice::Unparseable,
                    raw: String::new(),
                    error: Some(e.to_string()),
                });
                last_err = Some(e);
            }
        }
    }
    if votes.iter().all(|v| v.error.is_some()) {
        return Err(last_err.expect("at least one client"));
    }
    let choice = tally(votes.iter().map(|v| v.choice));
    let majority = votes
        .iter()
        .enumerate()
        .filter(|(_, v)| choice != Choice::Unparseable && v.choice == choice)
        .map(|(i, _)| i)
        .collect();
    let raw = votes
        .iter()
        .map(|v| format!("{}: {}", v.client, v.raw))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(MoeOutcome {
        decision: ParsedChoice { choice, raw },
        votes,
        majority,
    })
}

pub(crate) fn tally(choices: impl Iterator<Item = Choice> + Clone) -> Choice {
    let ones = choices.clone().filter(|c| *c == Choice::Option1).count();
    let twos = choices.clone().filter(|c| *c == Choice::Option2).count();
    match ones.cmp(&twos) {
        std::cmp::Ordering::Greater => Choice::Option1,
        std::cmp::Ordering::Less => Choice::Option2,
        std::cmp::Ordering::Equal => choices
            .into_iter()
            .find(|c| *c != Choice::Unparseable)
            .unwrap_or(Choice::Unparseable),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelio::{CallKey, ScriptedClient};
    use crate::prompt::PromptParts;

    fn request() -> CompletionRequest {
        CompletionRequest {
            parts: PromptParts::new(String::new(), "q".into(), String::new(), "o".into(), vec![]).unwrap(),
            hint: None,
            key: CallKey::default(),
        }
    }

    fn run(answers: &[&str]) -> MoeOutcome {
        let clients: Vec<ScriptedClient> = answers
            .iter()
            .enumerate()
            .map(|(i, a)| ScriptedClient::constant(&format!("m{i}"), a))
            .collect();
        let refs: Vec<&dyn ModelClient> = clients.iter().map(|c| c as &dyn ModelClient).collect();
        moe_vote(&refs, &request(), Duration::from_secs(1)).unwrap()
    }

    #[test]
    fn majority_wins() {
        let out = run(&["Image1", "Image1", "Image2"]);
        assert_eq!(out.decision.choice, Choice::Option1);
        assert_eq!(out.majority, vec![0, 1]);
    }

    #[test]
    fn tie_goes_to_earliest_parseable() {
        assert_eq!(run(&["Image1", "Image2", "no idea"]).decision.choice, Choice::Option1);
        assert_eq!(run(&["no idea", "Image2", "Image1"]).decision.choice, Choice::Option2);
        assert_eq!(run(&["?", "??"]).decision.choice, Choice::Unparseable);
        assert!(run(&["?", "??"]).majority.is_empty());
    }

    #[test]
    fn errors_abstain_unless_all_fail() {
        let ok = ScriptedClient::constant("ok", "Image2");
        let bad = ScriptedClient::new("bad", |_| Err(ModelError::Timeout(Duration::from_secs(1))));
        let out = moe_vote(&[&bad, &ok], &request(), Duration::from_secs(1)).unwrap();
        assert_eq!(out.decision.choice, Choice::Option2);
        assert!(out.votes[0].error.is_some());
        assert!(moe_vote(&[&bad, &bad], &request(), Duration::from_secs(1)).is_err());
    }
}
