//! The replayable event stream: one JSONL row per micro-interaction, with
//! enough detail (presented orders, verbatim LLM exchanges, post-interaction
//! scores) that a trial can be reconstructed and audited without re-running
//! the policies.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{DomainError, InteractionRecord, MemoryWindow, Name, PayoffRule};
use crate::SCHEMA_VERSION;

/// One LLM round trip: the SHA-256 of the serialized request and the verbatim
/// response text. Retried decisions produce several exchanges in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub request_sha256: String,
    pub response: String,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

fn is_false(v: &bool) -> bool {
    !*v
}

/// One micro-interaction. In simultaneous mode both participants produce a
/// name; in speaker-hearer mode only agent A (the speaker) does, and the
/// memory-related fields stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub schema_version: u32,
    /// Trial index within its ensemble.
    pub trial: u64,
    /// 1-based global interaction index, contiguous within the trial.
    pub interaction: u64,
    pub agent_a: u32,
    pub agent_b: u32,
    pub name_a: Name,
    /// `None` in speaker-hearer mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_b: Option<Name>,
    pub success: bool,
    pub payoff_a: i64,
    pub payoff_b: i64,
    /// Windowed scores after this interaction was absorbed (simultaneous mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_a: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_b: Option<i64>,
    /// The shuffled pool order each agent saw (simultaneous mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presented_a: Option<Vec<Name>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presented_b: Option<Vec<Name>>,
    /// Verbatim LLM exchanges behind each decision, including failed attempts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exchanges_a: Vec<LlmExchange>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exchanges_b: Vec<LlmExchange>,
    /// Re-queries needed before a parseable answer (or the full budget, when
    /// the decision fell back to a uniform draw).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub retries_a: u32,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub retries_b: u32,
    #[serde(default, skip_serializing_if = "is_false")]
    pub fallback_a: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub fallback_b: bool,
}

#[derive(Debug, Error)]
pub enum EventIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: schema version {found} (this build reads {expected})")]
    SchemaVersion {
        line: usize,
        found: u32,
        expected: u32,
    },
}

/// Writes events as JSON Lines, one event per line.
pub fn write_events_jsonl<W: Write>(writer: &mut W, events: &[RunEvent]) -> io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut *writer, event)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSONL event stream, rejecting blank-stripped garbage and any line
/// whose schema version differs from this build's.
pub fn read_events_jsonl<R: BufRead>(reader: R) -> Result<Vec<RunEvent>, EventIoError> {
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: RunEvent = serde_json::from_str(&line).map_err(|source| EventIoError::Parse {
            line: idx + 1,
            source,
        })?;
        if event.schema_version != SCHEMA_VERSION {
            return Err(EventIoError::SchemaVersion {
                line: idx + 1,
                found: event.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        events.push(event);
    }
    Ok(events)
}

/// Ways an event stream can fail to replay into consistent agent memories.
#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("interaction {found} where {expected} was expected: indices must be contiguous from 1")]
    NonContiguous { found: u64, expected: u64 },
    #[error("interaction {interaction}: agent {agent} out of range for population {population}")]
    AgentRange {
        interaction: u64,
        agent: u32,
        population: u32,
    },
    #[error("interaction {interaction}: both participants are agent {agent}")]
    SelfPair { interaction: u64, agent: u32 },
    #[error("interaction {interaction}: memory-mode fields are missing")]
    MissingMemoryFields { interaction: u64 },
    #[error(
        "interaction {interaction}: stored score {stored} for agent {agent} but replay gives {replayed}"
    )]
    ScoreMismatch {
        interaction: u64,
        agent: u32,
        stored: i64,
        replayed: i64,
    },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Replays a simultaneous-mode event stream over the given starting windows
/// (empty, or pre-filled by the trial's initialization), reproducing every
/// append and checking recorded scores. Returns nothing: the caller keeps the
/// reconstructed windows.
pub fn replay_memories(
    events: &[RunEvent],
    memories: &mut [MemoryWindow],
    rule: &PayoffRule,
) -> Result<(), ReplayError> {
    let population = memories.len() as u32;
    for (idx, event) in events.iter().enumerate() {
        let expected = idx as u64 + 1;
        if event.interaction != expected {
            return Err(ReplayError::NonContiguous {
                found: event.interaction,
                expected,
            });
        }
        for agent in [event.agent_a, event.agent_b] {
            if agent >= population {
                return Err(ReplayError::AgentRange {
                    interaction: event.interaction,
                    agent,
                    population,
                });
            }
        }
        if event.agent_a == event.agent_b {
            return Err(ReplayError::SelfPair {
                interaction: event.interaction,
                agent: event.agent_a,
            });
        }
        let name_b = event
            .name_b
            .clone()
            .ok_or(ReplayError::MissingMemoryFields {
                interaction: event.interaction,
            })?;
        let sides = [
            (event.agent_a, event.name_a.clone(), name_b.clone(), event.score_a),
            (event.agent_b, name_b, event.name_a.clone(), event.score_b),
        ];
        for (agent, own, partner, stored_score) in sides {
            let memory = &mut memories[agent as usize];
            let record = InteractionRecord::from_exchange(memory.next_round(), own, partner, rule);
            memory.push(record)?;
            if let Some(stored) = stored_score {
                let replayed = memory.windowed_score();
                if stored != replayed {
                    return Err(ReplayError::ScoreMismatch {
                        interaction: event.interaction,
                        agent,
                        stored,
                        replayed,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Fresh starting windows for [`replay_memories`], one per agent.
pub fn empty_windows(population: u32, capacity: usize) -> Vec<MemoryWindow> {
    let window = MemoryWindow::new(capacity).expect("validated capacity");
    vec![window; population as usize]
}

/// Bare event with every optional field empty; tests and fixtures fill in
/// what they need via struct update syntax.
#[doc(hidden)]
pub fn minimal_event(trial: u64, interaction: u64, a: u32, b: u32, name: Name) -> RunEvent {
    RunEvent {
        schema_version: SCHEMA_VERSION,
        trial,
        interaction,
        agent_a: a,
        agent_b: b,
        name_a: name,
        name_b: None,
        success: true,
        payoff_a: 0,
        payoff_b: 0,
        score_a: None,
        score_b: None,
        presented_a: None,
        presented_b: None,
        exchanges_a: Vec::new(),
        exchanges_b: Vec::new(),
        retries_a: 0,
        retries_b: 0,
        fallback_a: false,
        fallback_b: false,
    }
}
