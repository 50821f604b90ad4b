//! Agent decision rules: the lexicon-based speaker–hearer policies, the
//! memory-conditioned surrogate, committed agents, and the LLM-backed policy,
//! all behind one `PolicyInstance` the engine can drive uniformly.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::FirstRound;
use crate::events::LlmExchange;
use crate::llm::{GatewayError, LlmSession};
use crate::types::{MemoryWindow, Name, NamePool, PayoffRule};

/// Default probability of repeating a name after remembering a success.
pub const DEFAULT_P_KEEP: f64 = 0.994;
/// Default probability of adopting the partner's name after a failure.
pub const DEFAULT_P_SWITCH: f64 = 0.973;

pub fn default_p_keep() -> f64 {
    DEFAULT_P_KEEP
}

pub fn default_p_switch() -> f64 {
    DEFAULT_P_SWITCH
}

/// The set of names an agent is willing to utter. Ordered so that uniform
/// draws are reproducible under a fixed seed.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Lexicon {
    names: BTreeSet<Name>,
}

impl Lexicon {
    pub fn new() -> Self {
        Lexicon::default()
    }

    pub fn from_name(name: Name) -> Self {
        let mut names = BTreeSet::new();
        names.insert(name);
        Lexicon { names }
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.names.contains(name)
    }

    pub fn insert(&mut self, name: Name) -> bool {
        self.names.insert(name)
    }

    /// Success update: forget everything except `name`.
    pub fn collapse_to(&mut self, name: Name) {
        self.names.clear();
        self.names.insert(name);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Name> {
        self.names.iter()
    }
}

/// Outcome of one utterance by a speaker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub name: Name,
    /// True when the speaker's lexicon was empty and the name was drawn from
    /// the pool at large; the name has already been added to the lexicon.
    pub invented: bool,
}

/// Speaker rule of the lexicon game: utter a uniform draw from the lexicon,
/// or — when the lexicon is empty — invent a uniform draw from the full pool
/// and keep it. With a bias, the designated name is picked with probability
/// `bias` whenever the choice set also holds at least one alternative, and
/// the alternatives share the remaining mass uniformly.
pub fn speak<R: Rng + ?Sized>(
    lexicon: &mut Lexicon,
    pool: &NamePool,
    bias: Option<(&Name, f64)>,
    rng: &mut R,
) -> Utterance {
    let invented = lexicon.is_empty();
    let choices: Vec<Name> = if invented {
        pool.names().to_vec()
    } else {
        lexicon.iter().cloned().collect()
    };
    let name = biased_uniform(&choices, bias, rng);
    if invented {
        lexicon.insert(name.clone());
    }
    Utterance { name, invented }
}

fn biased_uniform<R: Rng + ?Sized>(
    choices: &[Name],
    bias: Option<(&Name, f64)>,
    rng: &mut R,
) -> Name {
    if let Some((designated, weight)) = bias {
        if choices.len() > 1 && choices.contains(designated) {
            if rng.gen::<f64>() < weight {
                return designated.clone();
            }
            let others: Vec<&Name> = choices.iter().filter(|n| *n != designated).collect();
            return (*others.choose(rng).expect("len > 1 leaves an alternative")).clone();
        }
    }
    choices.choose(rng).expect("choice sets are non-empty").clone()
}

/// Hearer update of the lexicon game. On success both sides collapse to the
/// uttered name; on failure the hearer adopts it alongside what it knew.
/// Success itself is `hearer.contains(uttered)`, which the engine checks
/// before the update.
pub fn absorb(speaker: &mut Lexicon, hearer: &mut Lexicon, uttered: &Name, success: bool) {
    if success {
        speaker.collapse_to(uttered.clone());
        hearer.collapse_to(uttered.clone());
    } else {
        hearer.insert(uttered.clone());
    }
}

/// Surrogate parameters with the first-round weights resolved against the
/// pool, ready for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateParams {
    pub p_keep: f64,
    pub p_switch: f64,
    first_round: FirstRoundSampler,
}

#[derive(Debug, Clone, PartialEq)]
enum FirstRoundSampler {
    Uniform,
    Weighted { names: Vec<Name>, cumulative: Vec<f64> },
}

impl SurrogateParams {
    /// `first_round` weights must already be validated (non-negative, finite,
    /// positive total, names from the pool); `TrialConfig::validate` does so.
    pub fn resolve(p_keep: f64, p_switch: f64, first_round: &FirstRound, pool: &NamePool) -> Self {
        let first_round = match first_round {
            FirstRound::Uniform => FirstRoundSampler::Uniform,
            FirstRound::Weighted { weights } => {
                let mut names = Vec::new();
                let mut cumulative = Vec::new();
                let mut total = 0.0;
                for name in pool.names() {
                    if let Some(weight) = weights.get(name.as_str()) {
                        if *weight > 0.0 {
                            total += *weight;
                            names.push(name.clone());
                            cumulative.push(total);
                        }
                    }
                }
                assert!(total > 0.0, "weighted first round must have positive mass");
                FirstRoundSampler::Weighted { names, cumulative }
            }
        };
        SurrogateParams {
            p_keep,
            p_switch,
            first_round,
        }
    }

    fn sample_first<R: Rng + ?Sized>(&self, pool: &NamePool, rng: &mut R) -> Name {
        match &self.first_round {
            FirstRoundSampler::Uniform => pool
                .names()
                .choose(rng)
                .expect("pools are non-empty")
                .clone(),
            FirstRoundSampler::Weighted { names, cumulative } => {
                let total = *cumulative.last().expect("positive mass");
                let draw = rng.gen::<f64>() * total;
                let idx = cumulative.partition_point(|c| *c <= draw).min(names.len() - 1);
                names[idx].clone()
            }
        }
    }
}

/// Memory-conditioned surrogate rule. Only the most recent record matters:
/// after a success, repeat that name with probability `p_keep`, otherwise a
/// uniform draw over the *other* names; after a failure, adopt the partner's
/// name with probability `p_switch`, otherwise stay on the own name. An
/// empty memory falls back to the first-round distribution.
pub fn choose_surrogate<R: Rng + ?Sized>(
    params: &SurrogateParams,
    memory: &MemoryWindow,
    pool: &NamePool,
    rng: &mut R,
) -> Name {
    let Some(last) = memory.last() else {
        return params.sample_first(pool, rng);
    };
    if last.success {
        if rng.gen::<f64>() < params.p_keep {
            last.own.clone()
        } else {
            let others: Vec<&Name> = pool.names().iter().filter(|n| **n != last.own).collect();
            (*others.choose(rng).expect("pool holds at least two names")).clone()
        }
    } else if rng.gen::<f64>() < params.p_switch {
        last.partner.clone()
    } else {
        last.own.clone()
    }
}

/// One resolved name choice, with the gateway bookkeeping the run log needs.
/// Scripted policies leave the LLM fields empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub name: Name,
    /// Option order shown in the final prompt attempt; lets a log reader
    /// rebuild that prompt byte for byte.
    pub presented: Option<Vec<Name>>,
    pub exchanges: Vec<LlmExchange>,
    pub retries: u32,
    pub fallback: bool,
}

impl Decision {
    pub fn plain(name: Name) -> Self {
        Decision {
            name,
            presented: None,
            exchanges: Vec::new(),
            retries: 0,
            fallback: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("policy `{0}` has no rule for this interaction mode")]
    ModeMismatch(&'static str),
}

/// A policy bound to one agent for the duration of a trial. LLM agents share
/// one session per distinct gateway configuration.
#[derive(Clone)]
pub enum PolicyInstance {
    Minimal { bias: Option<(Name, f64)> },
    Surrogate(SurrogateParams),
    Committed(Name),
    Llm(Arc<LlmSession>),
}

impl PolicyInstance {
    pub fn kind_label(&self) -> &'static str {
        match self {
            PolicyInstance::Minimal { bias: None } => "minimal",
            PolicyInstance::Minimal { bias: Some(_) } => "biased_minimal",
            PolicyInstance::Surrogate(_) => "surrogate",
            PolicyInstance::Committed(_) => "committed",
            PolicyInstance::Llm(_) => "llm",
        }
    }

    pub fn committed_target(&self) -> Option<&Name> {
        match self {
            PolicyInstance::Committed(target) => Some(target),
            _ => None,
        }
    }

    /// Produces a name in the simultaneous game, conditioning on the agent's
    /// memory.
    pub fn choose_memory<R: Rng + ?Sized>(
        &self,
        memory: &MemoryWindow,
        pool: &NamePool,
        payoffs: &PayoffRule,
        rng: &mut R,
    ) -> Result<Decision, PolicyError> {
        match self {
            PolicyInstance::Surrogate(params) => {
                Ok(Decision::plain(choose_surrogate(params, memory, pool, rng)))
            }
            PolicyInstance::Committed(target) => Ok(Decision::plain(target.clone())),
            PolicyInstance::Llm(session) => Ok(session.choose(memory, pool, payoffs, rng)?),
            PolicyInstance::Minimal { .. } => Err(PolicyError::ModeMismatch(self.kind_label())),
        }
    }

    /// Produces an utterance in the speaker–hearer game, updating the
    /// speaker's lexicon on invention.
    pub fn speak_lexicon<R: Rng + ?Sized>(
        &self,
        lexicon: &mut Lexicon,
        pool: &NamePool,
        rng: &mut R,
    ) -> Result<Utterance, PolicyError> {
        match self {
            PolicyInstance::Minimal { bias } => {
                let bias = bias.as_ref().map(|(name, b)| (name, *b));
                Ok(speak(lexicon, pool, bias, rng))
            }
            PolicyInstance::Committed(target) => Ok(Utterance {
                name: target.clone(),
                invented: false,
            }),
            _ => Err(PolicyError::ModeMismatch(self.kind_label())),
        }
    }
}
