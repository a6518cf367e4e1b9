use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Capabilities, CompletionRequest, Hint, ModelClient, ModelError};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Probability of choosing the correct option.
    pub p_assoc: f64,
    /// Probability of naming exactly the true shared concepts.
    pub p_deduct: f64,
    /// Probability of an answer that names no option at all.
    pub p_abstain: f64,
    /// Probability of a simulated transport failure.
    pub p_transport_fail: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            p_assoc: 1.0,
            p_deduct: 1.0,
            p_abstain: 0.0,
            p_transport_fail: 0.0,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("p_assoc", self.p_assoc),
            ("p_deduct", self.p_deduct),
            ("p_abstain", self.p_abstain),
            ("p_transport_fail", self.p_transport_fail),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name}={p} is not a probability"));
            }
        }
        Ok(())
    }
}

/// Bernoulli test double for a model. Answers come only from the request's
/// hint; each call draws from its own stream keyed by `(seed, call key)`.
#[derive(Debug, Clone)]
pub struct OracleClient {
    id: String,
    config: OracleConfig,
}

impl OracleClient {
    pub fn new(id: &str, config: OracleConfig) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::Config)?;
        Ok(Self {
            id: id.to_string(),
            config,
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }
}

impl ModelClient for OracleClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            max_images: 16,
            supports_system_text: true,
        }
    }

    fn complete(&self, request: &CompletionRequest, _deadline: Duration) -> Result<String, ModelError> {
        let k = request.key;
        let seed = rng::derive(
            self.config.seed,
            &[k.round, k.step, u64::from(k.phase), u64::from(k.attempt)],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fail = rng.random::<f64>() < self.config.p_transport_fail;
        let abstain = rng.random::<f64>() < self.config.p_abstain;
        let hit = rng.random::<f64>();
        if fail {
            return Err(ModelError::Transport {
                message: "injected transport failure".into(),
                retryable: false,
            });
        }
        let Some(hint) = &request.hint else {
            return Ok("I cannot tell.".into());
        };
        if abstain {
            return Ok("I cannot tell.".into());
        }
        Ok(match hint {
            Hint::Association { correct } => {
                if hit < self.config.p_assoc {
                    correct.token().to_string()
                } else {
                    correct.other().token().to_string()
                }
            }
            Hint::Deduction { shared, vocabulary } => {
                if hit < self.config.p_deduct {
                    shared.iter().cloned().collect::<Vec<_>>().join(", ")
                } else {
                    let wrong: Vec<&String> =
                        vocabulary.iter().filter(|c| !shared.contains(*c)).collect();
                    rng::choose(&mut rng, &wrong)
                        .map(|c| c.to_string())
                        .unwrap_or_else(|| "none".to_string())
                }
            }
            Hint::Verify { present } => {
                if *present { "Yes" } else { "No" }.to_string()
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::OptionSlot;
    use crate::modelio::CallKey;
    use crate::prompt::PromptParts;

    fn req(hint: Hint, step: u64) -> CompletionRequest {
        CompletionRequest {
            parts: PromptParts::new(String::new(), "q".into(), String::new(), "o".into(), vec![]).unwrap(),
            hint: Some(hint),
            key: CallKey::new(0, step, CallKey::ASSOCIATION),
        }
    }

    #[test]
    fn perfect_oracle() {
        let o = OracleClient::new("o", OracleConfig::default()).unwrap();
        for step in 0..50 {
            let r = o
                .complete(&req(Hint::Association { correct: OptionSlot::Option2 }, step), Duration::ZERO)
                .unwrap();
            assert_eq!(r, "Image2");
        }
        let shared = ["metal".to_string(), "painted".to_string()].into_iter().collect();
        let r = o
            .complete(
                &req(Hint::Deduction { shared, vocabulary: vec!["metal".into(), "painted".into(), "ripe".into()] }, 0),
                Duration::ZERO,
            )
            .unwrap();
        assert_eq!(r, "metal, painted");
    }

    #[test]
    fn always_wrong_oracle() {
        let o = OracleClient::new("o", OracleConfig { p_assoc: 0.0, p_deduct: 0.0, ..Default::default() }).unwrap();
        let r = o
            .complete(&req(Hint::Association { correct: OptionSlot::Option1 }, 3), Duration::ZERO)
            .unwrap();
        assert_eq!(r, "Image2");
        let shared = ["metal".to_string()].into_iter().collect();
        let r = o
            .complete(&req(Hint::Deduction { shared, vocabulary: vec!["metal".into(), "ripe".into()] }, 0), Duration::ZERO)
            .unwrap();
        assert_eq!(r, "ripe");
    }

    #[test]
    fn answers_replay_for_fixed_seed() {
        let cfg = OracleConfig { p_assoc: 0.5, seed: 42, ..Default::default() };
        let a = OracleClient::new("a", cfg).unwrap();
        let b = OracleClient::new("b", cfg).unwrap();
        let stream = |o: &OracleClient| -> Vec<String> {
            (0..200)
                .map(|s| o.complete(&req(Hint::Association { correct: OptionSlot::Option1 }, s), Duration::ZERO).unwrap())
                .collect()
        };
        let sa = stream(&a);
        assert_eq!(sa, stream(&b));
        assert!(sa.iter().any(|x| x == "Image1") && sa.iter().any(|x| x == "Image2"));
    }

    #[test]
    fn invalid_probability_rejected() {
        assert!(OracleClient::new("o", OracleConfig { p_assoc: 1.5, ..Default::default() }).is_err());
    }

    #[test]
    fn injected_transport_failure() {
        let o = OracleClient::new("o", OracleConfig { p_transport_fail: 1.0, ..Default::default() }).unwrap();
        assert!(matches!(
            o.complete(&req(Hint::Verify { present: true }, 0), Duration::ZERO),
            Err(ModelError::Transport { .. })
        ));
    }
}
