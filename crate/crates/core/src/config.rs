//! Trial configuration: population, name pool, payoffs, interaction mode,
//! per-agent policies, and stopping rules, with validation that rejects
//! inconsistent setups before any simulation starts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{GatewayError, LlmParams, TransportSpec};
use crate::types::{Name, NamePool, PayoffRule};

/// How a pairwise encounter is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionMode {
    /// Both agents pick simultaneously; matching picks reward both, a
    /// mismatch punishes both, and both remember the outcome.
    SimultaneousCoordination,
    /// One agent utters a name from its lexicon, the other accepts or
    /// adopts it; lexicons, not payoff memories, carry the state.
    SpeakerHearer,
}

/// What an agent with an empty memory plays in its first interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FirstRound {
    #[default]
    Uniform,
    /// Draw proportionally to per-name weights; names absent from the map
    /// get weight zero.
    Weighted { weights: BTreeMap<String, f64> },
}

/// Decision rule an agent runs each time it must produce a name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// Speaker utters a uniform draw from its lexicon (inventing a name from
    /// the unused pool when the lexicon is empty); success collapses both
    /// lexicons to the uttered name, failure makes the hearer adopt it.
    Minimal,
    /// Same dynamics, but whenever the choice set holds the designated name
    /// plus at least one alternative, the designated name is picked with
    /// probability `bias` and the alternatives share the rest uniformly.
    BiasedMinimal { designated: Name, bias: f64 },
    /// Conditions on the last remembered interaction only: after a success,
    /// repeat the name with probability `p_keep` (otherwise a uniform draw
    /// over the other names); after a failure, switch to the partner's name
    /// with probability `p_switch` (otherwise stay on its own). An empty
    /// memory falls back to `first_round`.
    Surrogate {
        #[serde(default = "crate::agents::default_p_keep")]
        p_keep: f64,
        #[serde(default = "crate::agents::default_p_switch")]
        p_switch: f64,
        #[serde(default)]
        first_round: FirstRound,
    },
    /// Always plays `target`; never updates.
    Committed { target: Name },
    /// Asks a chat model each time, via the configured transport.
    Llm {
        params: LlmParams,
        transport: TransportSpec,
    },
}

impl PolicySpec {
    /// True for policies whose state is a lexicon rather than a payoff
    /// memory; these are the only ones the speaker–hearer mode supports.
    pub fn is_lexicon_based(&self) -> bool {
        matches!(self, PolicySpec::Minimal | PolicySpec::BiasedMinimal { .. })
    }

    pub fn kind_label(&self) -> &'static str {
        match self {
            PolicySpec::Minimal => "minimal",
            PolicySpec::BiasedMinimal { .. } => "biased_minimal",
            PolicySpec::Surrogate { .. } => "surrogate",
            PolicySpec::Committed { .. } => "committed",
            PolicySpec::Llm { .. } => "llm",
        }
    }
}

/// Population state before the first interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Initialization {
    /// Empty memories / empty lexicons.
    #[default]
    Empty,
    /// Full established consensus on `name`: lexicons hold exactly that
    /// name; memories hold a full window of successful records of it
    /// (rounds 1..=M, partner name equal to own).
    Consensus { name: Name },
}

/// Convenience for minority experiments: agents `0..count` are pinned to the
/// committed policy on `target`, overriding the default policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommittedSpec {
    pub count: usize,
    pub target: Name,
}

fn default_early_stop() -> Option<u32> {
    Some(5)
}

/// Complete description of one trial. Serialized into run manifests so a
/// result directory is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    /// Number of agents (N). Every population round is N random pairings.
    pub population: usize,
    /// Names available to the population (W).
    pub pool: NamePool,
    #[serde(default)]
    pub payoffs: PayoffRule,
    /// Records an agent retains (M).
    pub memory_capacity: usize,
    pub mode: InteractionMode,
    /// Default policy for every agent not covered by `committed` or
    /// `overrides`.
    pub policy: PolicySpec,
    /// Per-agent-index exceptions to the default policy.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<usize, PolicySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub committed: Option<CommittedSpec>,
    #[serde(default)]
    pub initialization: Initialization,
    /// Hard cap on population rounds.
    pub rounds: u32,
    /// Stop once this many consecutive rounds were fully successful with a
    /// single shared name; `null` disables early stopping.
    #[serde(default = "default_early_stop")]
    pub early_stop_rounds: Option<u32>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("population must be at least 2, got {0}")]
    PopulationTooSmall(usize),
    #[error("a trial needs at least two names in the pool, got {0}")]
    PoolTooSmall(usize),
    #[error("memory capacity must be at least 1")]
    ZeroMemory,
    #[error("rounds must be at least 1")]
    ZeroRounds,
    #[error("early_stop_rounds must be at least 1 when set")]
    ZeroEarlyStop,
    #[error("override targets agent {0}, but the population is {1}")]
    OverrideOutOfRange(usize, usize),
    #[error("override for agent {0} collides with the committed block 0..{1}")]
    OverrideShadowsCommitted(usize, usize),
    #[error("committed count {0} exceeds population {1}")]
    CommittedTooMany(usize, usize),
    #[error("name `{0}` is not in the pool")]
    NameNotInPool(String),
    #[error("bias must lie in [0, 1], got {0}")]
    BiasOutOfRange(f64),
    #[error("probability `{name}` must lie in [0, 1], got {value}")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },
    #[error("weighted first round needs at least one positive, finite weight")]
    DegenerateWeights,
    #[error("policy `{policy}` cannot run in {mode:?} mode")]
    PolicyModeMismatch {
        policy: &'static str,
        mode: InteractionMode,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.population < 2 {
            return Err(ConfigError::PopulationTooSmall(self.population));
        }
        if self.pool.size() < 2 {
            return Err(ConfigError::PoolTooSmall(self.pool.size()));
        }
        if self.memory_capacity == 0 {
            return Err(ConfigError::ZeroMemory);
        }
        if self.rounds == 0 {
            return Err(ConfigError::ZeroRounds);
        }
        if self.early_stop_rounds == Some(0) {
            return Err(ConfigError::ZeroEarlyStop);
        }
        let committed_count = self.committed.as_ref().map_or(0, |c| c.count);
        if let Some(committed) = &self.committed {
            if committed.count > self.population {
                return Err(ConfigError::CommittedTooMany(
                    committed.count,
                    self.population,
                ));
            }
            self.require_in_pool(&committed.target)?;
        }
        for (&agent, policy) in &self.overrides {
            if agent >= self.population {
                return Err(ConfigError::OverrideOutOfRange(agent, self.population));
            }
            if agent < committed_count {
                return Err(ConfigError::OverrideShadowsCommitted(agent, committed_count));
            }
            self.validate_policy(policy)?;
        }
        self.validate_policy(&self.policy)?;
        if committed_count > 0 {
            self.validate_policy(&PolicySpec::Committed {
                target: self.committed.as_ref().unwrap().target.clone(),
            })?;
        }
        if let Initialization::Consensus { name } = &self.initialization {
            self.require_in_pool(name)?;
        }
        Ok(())
    }

    fn require_in_pool(&self, name: &Name) -> Result<(), ConfigError> {
        if self.pool.contains(name) {
            Ok(())
        } else {
            Err(ConfigError::NameNotInPool(name.as_str().to_owned()))
        }
    }

    fn validate_policy(&self, policy: &PolicySpec) -> Result<(), ConfigError> {
        let lexicon_mode = self.mode == InteractionMode::SpeakerHearer;
        let allowed = match policy {
            // Committed agents carry a fixed name, which works both as a
            // lexicon and as a memory-mode answer.
            PolicySpec::Committed { .. } => true,
            other => other.is_lexicon_based() == lexicon_mode,
        };
        if !allowed {
            return Err(ConfigError::PolicyModeMismatch {
                policy: policy.kind_label(),
                mode: self.mode,
            });
        }
        match policy {
            PolicySpec::Minimal => {}
            PolicySpec::BiasedMinimal { designated, bias } => {
                self.require_in_pool(designated)?;
                if !(0.0..=1.0).contains(bias) {
                    return Err(ConfigError::BiasOutOfRange(*bias));
                }
            }
            PolicySpec::Surrogate {
                p_keep,
                p_switch,
                first_round,
            } => {
                for (label, value) in [("p_keep", *p_keep), ("p_switch", *p_switch)] {
                    if !(0.0..=1.0).contains(&value) {
                        return Err(ConfigError::ProbabilityOutOfRange {
                            name: label,
                            value,
                        });
                    }
                }
                if let FirstRound::Weighted { weights } = first_round {
                    let mut total = 0.0;
                    for (name, weight) in weights {
                        let name = Name::new(name)
                            .map_err(|_| ConfigError::NameNotInPool(name.clone()))?;
                        self.require_in_pool(&name)?;
                        if !weight.is_finite() || *weight < 0.0 {
                            return Err(ConfigError::DegenerateWeights);
                        }
                        total += weight;
                    }
                    if total <= 0.0 {
                        return Err(ConfigError::DegenerateWeights);
                    }
                }
            }
            PolicySpec::Committed { target } => self.require_in_pool(target)?,
            PolicySpec::Llm { params, transport } => {
                params.validate()?;
                transport.validate()?;
            }
        }
        Ok(())
    }

    /// Policy governing `agent`, after applying the committed block and
    /// per-agent overrides. Panics if `agent` is out of range, which
    /// `validate` precludes for configured overrides.
    pub fn effective_policy(&self, agent: usize) -> PolicySpec {
        assert!(agent < self.population, "agent {agent} out of range");
        if let Some(committed) = &self.committed {
            if agent < committed.count {
                return PolicySpec::Committed {
                    target: committed.target.clone(),
                };
            }
        }
        if let Some(policy) = self.overrides.get(&agent) {
            return policy.clone();
        }
        self.policy.clone()
    }

    /// Micro-interactions per population round (one per agent, pairs drawn
    /// at random each time).
    pub fn interactions_per_round(&self) -> u64 {
        self.population as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surrogate_base() -> TrialConfig {
        TrialConfig {
            population: 24,
            pool: NamePool::parse(&["A", "B", "C", "D", "E", "F", "G", "H", "I", "J"]).unwrap(),
            payoffs: PayoffRule::default(),
            memory_capacity: 5,
            mode: InteractionMode::SimultaneousCoordination,
            policy: PolicySpec::Surrogate {
                p_keep: crate::agents::default_p_keep(),
                p_switch: crate::agents::default_p_switch(),
                first_round: FirstRound::Uniform,
            },
            overrides: BTreeMap::new(),
            committed: None,
            initialization: Initialization::Empty,
            rounds: 200,
            early_stop_rounds: Some(5),
        }
    }

    fn minimal_base() -> TrialConfig {
        TrialConfig {
            mode: InteractionMode::SpeakerHearer,
            policy: PolicySpec::Minimal,
            ..surrogate_base()
        }
    }

    #[test]
    fn baseline_configs_validate() {
        surrogate_base().validate().unwrap();
        minimal_base().validate().unwrap();
    }

    #[test]
    fn json_round_trip_preserves_the_config() {
        let mut config = surrogate_base();
        config.committed = Some(CommittedSpec {
            count: 6,
            target: Name::new("A").unwrap(),
        });
        config.overrides.insert(
            7,
            PolicySpec::Llm {
                params: LlmParams::for_model("test-model"),
                transport: TransportSpec::Mock,
            },
        );
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: TrialConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn defaults_fill_in_when_fields_are_omitted() {
        let json = r#"{
            "population": 4,
            "pool": ["Q", "M"],
            "memory_capacity": 5,
            "mode": "simultaneous-coordination",
            "policy": {"kind": "surrogate"},
            "rounds": 50
        }"#;
        let config: TrialConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.early_stop_rounds, Some(5));
        assert_eq!(config.initialization, Initialization::Empty);
        match &config.policy {
            PolicySpec::Surrogate {
                p_keep,
                p_switch,
                first_round,
            } => {
                assert_eq!(*p_keep, 0.994);
                assert_eq!(*p_switch, 0.973);
                assert_eq!(*first_round, FirstRound::Uniform);
            }
            other => panic!("unexpected policy {other:?}"),
        }
        config.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let json = r#"{
            "population": 4,
            "pool": ["Q", "M"],
            "memory_capacity": 5,
            "mode": "simultaneous-coordination",
            "policy": {"kind": "surrogate"},
            "rounds": 50,
            "populaton_size": 10
        }"#;
        assert!(serde_json::from_str::<TrialConfig>(json).is_err());
    }

    #[test]
    fn mode_policy_mismatches_are_rejected() {
        let mut config = surrogate_base();
        config.policy = PolicySpec::Minimal;
        assert!(matches!(
            config.validate(),
            Err(ConfigError::PolicyModeMismatch { .. })
        ));
        let mut config = minimal_base();
        config.policy = PolicySpec::Surrogate {
            p_keep: 0.5,
            p_switch: 0.5,
            first_round: FirstRound::Uniform,
        };
        assert!(matches!(
            config.validate(),
            Err(ConfigError::PolicyModeMismatch { .. })
        ));
    }

    #[test]
    fn committed_agents_are_welcome_in_both_modes() {
        let mut config = surrogate_base();
        config.committed = Some(CommittedSpec {
            count: 3,
            target: Name::new("A").unwrap(),
        });
        config.validate().unwrap();
        let mut config = minimal_base();
        config.committed = Some(CommittedSpec {
            count: 24,
            target: Name::new("A").unwrap(),
        });
        config.validate().unwrap();
        config.committed.as_mut().unwrap().count = 25;
        assert!(matches!(
            config.validate(),
            Err(ConfigError::CommittedTooMany(25, 24))
        ));
    }

    #[test]
    fn effective_policy_resolves_committed_then_overrides() {
        let mut config = surrogate_base();
        config.committed = Some(CommittedSpec {
            count: 2,
            target: Name::new("A").unwrap(),
        });
        config.overrides.insert(
            5,
            PolicySpec::Committed {
                target: Name::new("B").unwrap(),
            },
        );
        config.validate().unwrap();
        assert_eq!(config.effective_policy(0).kind_label(), "committed");
        assert!(matches!(
            config.effective_policy(1),
            PolicySpec::Committed { ref target } if target.as_str() == "A"
        ));
        assert!(matches!(
            config.effective_policy(5),
            PolicySpec::Committed { ref target } if target.as_str() == "B"
        ));
        assert_eq!(config.effective_policy(3).kind_label(), "surrogate");
    }

    #[test]
    fn override_shadowing_a_committed_agent_is_rejected() {
        let mut config = surrogate_base();
        config.committed = Some(CommittedSpec {
            count: 4,
            target: Name::new("A").unwrap(),
        });
        config.overrides.insert(
            2,
            PolicySpec::Committed {
                target: Name::new("B").unwrap(),
            },
        );
        assert!(matches!(
            config.validate(),
            Err(ConfigError::OverrideShadowsCommitted(2, 4))
        ));
    }

    #[test]
    fn bad_probabilities_and_names_are_rejected() {
        let mut config = surrogate_base();
        config.policy = PolicySpec::Surrogate {
            p_keep: 1.2,
            p_switch: 0.5,
            first_round: FirstRound::Uniform,
        };
        assert!(matches!(
            config.validate(),
            Err(ConfigError::ProbabilityOutOfRange { name: "p_keep", .. })
        ));

        let mut config = minimal_base();
        config.policy = PolicySpec::BiasedMinimal {
            designated: Name::new("ZZ").unwrap(),
            bias: 0.3,
        };
        assert!(matches!(
            config.validate(),
            Err(ConfigError::NameNotInPool(ref n)) if n == "ZZ"
        ));

        let mut config = surrogate_base();
        let mut weights = BTreeMap::new();
        weights.insert("A".to_owned(), 0.0);
        config.policy = PolicySpec::Surrogate {
            p_keep: 0.9,
            p_switch: 0.9,
            first_round: FirstRound::Weighted { weights },
        };
        assert!(matches!(
            config.validate(),
            Err(ConfigError::DegenerateWeights)
        ));
    }
}
