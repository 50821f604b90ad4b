//! Core value types of the naming game: names, the candidate pool, the payoff
//! rule, per-interaction records, and the bounded memory window agents reason
//! over. Everything here is a plain value — trial state is rebuilt from these
//! types during replay, so none of them cache derived quantities.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Violations of the core type invariants.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("name must be a non-empty token of [A-Za-z0-9_-] (got {0:?})")]
    InvalidName(String),
    #[error("duplicate name {0:?} in pool")]
    DuplicateName(String),
    #[error("name pool must contain at least one name")]
    EmptyPool,
    #[error("name {0:?} is not in the pool")]
    OutOfPool(String),
    #[error("payoff rule must satisfy reward > 0 > penalty (got reward {reward}, penalty {penalty})")]
    InvalidPayoffs { reward: i64, penalty: i64 },
    #[error("record for round {next} does not follow round {last}: per-agent rounds are strictly increasing")]
    NonMonotoneRound { last: u64, next: u64 },
    #[error("memory capacity must be at least 1")]
    ZeroCapacity,
}

/// A convention candidate. Names compare by exact text equality and are
/// restricted to prompt-safe tokens (no whitespace, quotes, or brackets),
/// so they can be embedded verbatim in rendered prompts and parsed back.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Name(String);

impl Name {
    pub fn new(text: impl Into<String>) -> Result<Self, DomainError> {
        let text = text.into();
        let ok = !text.is_empty()
            && text
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if ok {
            Ok(Name(text))
        } else {
            Err(DomainError::InvalidName(text))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Name {
    type Error = DomainError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Name::new(s)
    }
}

impl From<Name> for String {
    fn from(n: Name) -> String {
        n.0
    }
}

/// The ordered set of candidate names available in a trial. The stored order
/// is the canonical one fixed at configuration time; the order an agent
/// actually sees is a fresh shuffle per decision (`presentation_order`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Name>", into = "Vec<Name>")]
pub struct NamePool {
    names: Vec<Name>,
}

impl NamePool {
    /// Builds a pool from distinct names. Singleton pools are representable
    /// (degenerate shuffles are well-defined); trial validation separately
    /// requires at least two candidates.
    pub fn new(names: Vec<Name>) -> Result<Self, DomainError> {
        if names.is_empty() {
            return Err(DomainError::EmptyPool);
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(DomainError::DuplicateName(n.as_str().to_owned()));
            }
        }
        Ok(NamePool { names })
    }

    /// Convenience constructor from string tokens.
    pub fn parse<S: AsRef<str>>(tokens: &[S]) -> Result<Self, DomainError> {
        let names = tokens
            .iter()
            .map(|t| Name::new(t.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        NamePool::new(names)
    }

    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[Name] {
        &self.names
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.names.contains(name)
    }

    pub fn index_of(&self, name: &Name) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl TryFrom<Vec<Name>> for NamePool {
    type Error = DomainError;
    fn try_from(names: Vec<Name>) -> Result<Self, Self::Error> {
        NamePool::new(names)
    }
}

impl From<NamePool> for Vec<Name> {
    fn from(p: NamePool) -> Vec<Name> {
        p.names
    }
}

/// Symmetric coordination payoffs: both partners earn `reward` on a match and
/// `penalty` on a mismatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPayoffs", into = "RawPayoffs")]
pub struct PayoffRule {
    reward: i64,
    penalty: i64,
}

#[derive(Serialize, Deserialize)]
struct RawPayoffs {
    reward: i64,
    penalty: i64,
}

impl PayoffRule {
    pub fn new(reward: i64, penalty: i64) -> Result<Self, DomainError> {
        if reward > 0 && penalty < 0 {
            Ok(PayoffRule { reward, penalty })
        } else {
            Err(DomainError::InvalidPayoffs { reward, penalty })
        }
    }

    pub fn reward(&self) -> i64 {
        self.reward
    }

    pub fn penalty(&self) -> i64 {
        self.penalty
    }
}

/// The +100 / −50 coordination stakes used throughout the experiments.
impl Default for PayoffRule {
    fn default() -> Self {
        PayoffRule {
            reward: 100,
            penalty: -50,
        }
    }
}

impl TryFrom<RawPayoffs> for PayoffRule {
    type Error = DomainError;
    fn try_from(r: RawPayoffs) -> Result<Self, Self::Error> {
        PayoffRule::new(r.reward, r.penalty)
    }
}

impl From<PayoffRule> for RawPayoffs {
    fn from(p: PayoffRule) -> RawPayoffs {
        RawPayoffs {
            reward: p.reward,
            penalty: p.penalty,
        }
    }
}

/// Scores one simultaneous exchange: success iff both produced names are
/// identical. Both names must belong to the pool.
pub fn apply_payoff(
    pool: &NamePool,
    own: &Name,
    partner: &Name,
    rule: &PayoffRule,
) -> Result<(bool, i64), DomainError> {
    for name in [own, partner] {
        if !pool.contains(name) {
            return Err(DomainError::OutOfPool(name.as_str().to_owned()));
        }
    }
    let success = own == partner;
    let payoff = if success { rule.reward() } else { rule.penalty() };
    Ok((success, payoff))
}

/// One interaction as remembered by one of its two participants. `round` is
/// that agent's own interaction counter (1-based), not the global index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub round: u64,
    pub own: Name,
    pub partner: Name,
    pub success: bool,
    pub payoff: i64,
}

impl InteractionRecord {
    /// Builds a record from the two produced names; success and payoff follow
    /// from the rule, so the success/equality invariant holds by construction.
    pub fn from_exchange(round: u64, own: Name, partner: Name, rule: &PayoffRule) -> Self {
        let success = own == partner;
        let payoff = if success { rule.reward() } else { rule.penalty() };
        InteractionRecord {
            round,
            own,
            partner,
            success,
            payoff,
        }
    }
}

/// Bounded FIFO memory of the most recent interactions. Appending at capacity
/// evicts the oldest record; the windowed score is always recomputed from the
/// stored records so replays cannot drift.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryWindow {
    capacity: usize,
    records: VecDeque<InteractionRecord>,
}

impl MemoryWindow {
    pub fn new(capacity: usize) -> Result<Self, DomainError> {
        if capacity == 0 {
            return Err(DomainError::ZeroCapacity);
        }
        Ok(MemoryWindow {
            capacity,
            records: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &InteractionRecord> {
        self.records.iter()
    }

    pub fn last(&self) -> Option<&InteractionRecord> {
        self.records.back()
    }

    /// Appends a record, evicting the oldest once at capacity. Rounds must be
    /// strictly increasing — a stale or duplicate round is a replay bug.
    pub fn push(&mut self, record: InteractionRecord) -> Result<(), DomainError> {
        if let Some(last) = self.records.back() {
            if record.round <= last.round {
                return Err(DomainError::NonMonotoneRound {
                    last: last.round,
                    next: record.round,
                });
            }
        }
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
        Ok(())
    }

    /// Sum of payoffs currently in the window (the score an agent is shown).
    pub fn windowed_score(&self) -> i64 {
        self.records.iter().map(|r| r.payoff).sum()
    }

    /// The agent's next 1-based round number: one past the newest record,
    /// which stays correct after eviction because rounds are per-agent
    /// counters, not window offsets.
    pub fn next_round(&self) -> u64 {
        self.records.back().map_or(1, |r| r.round + 1)
    }
}

/// A uniformly shuffled copy of the pool — the option order shown to an agent
/// for one decision. Drawn fresh every time so position carries no signal.
pub fn presentation_order<R: Rng + ?Sized>(pool: &NamePool, rng: &mut R) -> Vec<Name> {
    let mut order: Vec<Name> = pool.names().to_vec();
    order.shuffle(rng);
    order
}
