//! Prompt-comprehension suite: replays an agent's recorded interactions,
//! shows the model the same game prompt it saw at the time, and asks
//! mechanical questions about the rules, the remembered history, and the
//! running tallies. Answers are scored against ground truth computed from
//! the log, so accuracy measures whether the model actually reads the
//! prompt rather than how well it plays.

use std::collections::{BTreeMap, BTreeSet};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{build_prompt, CompletionRequest, GatewayError, LlmParams, PromptBundle, Transport};
use crate::engine::RunLog;
use crate::types::{InteractionRecord, MemoryWindow, Name, NamePool, PayoffRule};

/// The three question families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionGroup {
    Rules,
    Time,
    State,
}

impl QuestionGroup {
    pub fn label(self) -> &'static str {
        match self {
            QuestionGroup::Rules => "rules",
            QuestionGroup::Time => "time",
            QuestionGroup::State => "state",
        }
    }
}

/// The eight question types, three per family except the two state tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuestionCategory {
    /// Lowest and highest single-round payoff.
    #[serde(rename = "min_max")]
    MinMax,
    /// The full set of allowed actions.
    #[serde(rename = "actions")]
    Actions,
    /// Payoff for a concrete pair of plays.
    #[serde(rename = "payoff")]
    Payoff,
    /// The current round number.
    #[serde(rename = "round")]
    Round,
    /// The agent's own action in a specific remembered round.
    #[serde(rename = "action_i")]
    ActionAt,
    /// The payoff collected in a specific remembered round.
    #[serde(rename = "points_i")]
    PointsAt,
    /// How often the agent chose a given action within memory.
    #[serde(rename = "#actions")]
    ActionCount,
    /// The windowed score shown in the prompt.
    #[serde(rename = "#points")]
    TotalPoints,
}

impl QuestionCategory {
    pub const ALL: [QuestionCategory; 8] = [
        QuestionCategory::MinMax,
        QuestionCategory::Actions,
        QuestionCategory::Payoff,
        QuestionCategory::Round,
        QuestionCategory::ActionAt,
        QuestionCategory::PointsAt,
        QuestionCategory::ActionCount,
        QuestionCategory::TotalPoints,
    ];

    pub fn group(self) -> QuestionGroup {
        match self {
            QuestionCategory::MinMax | QuestionCategory::Actions | QuestionCategory::Payoff => {
                QuestionGroup::Rules
            }
            QuestionCategory::Round | QuestionCategory::ActionAt | QuestionCategory::PointsAt => {
                QuestionGroup::Time
            }
            QuestionCategory::ActionCount | QuestionCategory::TotalPoints => QuestionGroup::State,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            QuestionCategory::MinMax => "min_max",
            QuestionCategory::Actions => "actions",
            QuestionCategory::Payoff => "payoff",
            QuestionCategory::Round => "round",
            QuestionCategory::ActionAt => "action_i",
            QuestionCategory::PointsAt => "points_i",
            QuestionCategory::ActionCount => "#actions",
            QuestionCategory::TotalPoints => "#points",
        }
    }

    /// History-dependent questions cannot be asked before the first record
    /// lands in memory.
    pub fn needs_history(self) -> bool {
        matches!(
            self,
            QuestionCategory::ActionAt
                | QuestionCategory::PointsAt
                | QuestionCategory::ActionCount
                | QuestionCategory::TotalPoints
        )
    }
}

/// Mechanically checkable answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    /// A single integer; the answer's first integer must match.
    Number { value: i64 },
    /// A set of integers; the answer must mention exactly these.
    Numbers { values: Vec<i64> },
    /// A single action; the answer must name it and no other pool action.
    Token { value: Name },
    /// A set of actions; the answer must name exactly these.
    Tokens { values: Vec<Name> },
}

impl GroundTruth {
    /// Canonical correct answer text (what an oracle responder says).
    pub fn render(&self) -> String {
        match self {
            GroundTruth::Number { value } => value.to_string(),
            GroundTruth::Numbers { values } => values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(", "),
            GroundTruth::Token { value } => value.to_string(),
            GroundTruth::Tokens { values } => values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(", "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComprehensionQuestion {
    pub category: QuestionCategory,
    pub text: String,
    pub truth: GroundTruth,
}

static INTEGER: Lazy<Regex> = Lazy::new(|| Regex::new(r"-?\d+").expect("static regex"));

fn integers(raw: &str) -> Vec<i64> {
    INTEGER
        .find_iter(raw)
        .filter_map(|m| m.as_str().parse().ok())
        .collect()
}

/// Pool names appearing as standalone alphanumeric tokens in the answer.
fn pool_tokens<'p>(raw: &str, pool: &'p NamePool) -> BTreeSet<&'p str> {
    let tokens: BTreeSet<&str> = raw
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .collect();
    pool.names()
        .iter()
        .map(Name::as_str)
        .filter(|name| tokens.contains(name))
        .collect()
}

/// Scores a free-text answer against the ground truth. Numeric answers are
/// read off the leading integer (single) or the full set of integers
/// mentioned (pairs); action answers must name the expected action(s) and
/// no other pool action, so hedging across options never scores.
pub fn score_answer(truth: &GroundTruth, pool: &NamePool, raw: &str) -> bool {
    match truth {
        GroundTruth::Number { value } => integers(raw).first() == Some(value),
        GroundTruth::Numbers { values } => {
            let got: BTreeSet<i64> = integers(raw).into_iter().collect();
            let want: BTreeSet<i64> = values.iter().copied().collect();
            got == want
        }
        GroundTruth::Token { value } => {
            let got = pool_tokens(raw, pool);
            got.len() == 1 && got.contains(value.as_str())
        }
        GroundTruth::Tokens { values } => {
            let got = pool_tokens(raw, pool);
            let want: BTreeSet<&str> = values.iter().map(Name::as_str).collect();
            got == want
        }
    }
}

/// All questions askable against this memory state, ground truths included.
/// With an empty memory only the four history-free questions are returned.
/// The payoff question alternates between a matching and a differing pair of
/// plays by round parity, so both rules get exercised over a replay.
pub fn questions_for(
    memory: &MemoryWindow,
    pool: &NamePool,
    payoffs: &PayoffRule,
) -> Vec<ComprehensionQuestion> {
    let round = memory.next_round();
    let mut questions = Vec::with_capacity(8);
    let lowest = payoffs.reward().min(payoffs.penalty());
    let highest = payoffs.reward().max(payoffs.penalty());
    questions.push(ComprehensionQuestion {
        category: QuestionCategory::MinMax,
        text: "What is the lowest payoff Player 1 can get in a single round, and what is the \
               highest?"
            .to_owned(),
        truth: GroundTruth::Numbers {
            values: vec![lowest, highest],
        },
    });
    questions.push(ComprehensionQuestion {
        category: QuestionCategory::Actions,
        text: "Which actions is Player 1 allowed to play?".to_owned(),
        truth: GroundTruth::Tokens {
            values: pool.names().to_vec(),
        },
    });
    let (play, reply, value) = if round % 2 == 1 {
        (&pool.names()[0], &pool.names()[0], payoffs.reward())
    } else {
        (&pool.names()[0], &pool.names()[1], payoffs.penalty())
    };
    questions.push(ComprehensionQuestion {
        category: QuestionCategory::Payoff,
        text: format!(
            "Which is Player 1's payoff in a single round if Player 1 plays {play} and Player 2 \
             plays {reply}?"
        ),
        truth: GroundTruth::Number { value },
    });
    questions.push(ComprehensionQuestion {
        category: QuestionCategory::Round,
        text: "Which is the current round of the game?".to_owned(),
        truth: GroundTruth::Number {
            value: round as i64,
        },
    });
    let (Some(oldest), Some(latest)) = (memory.iter().next(), memory.last()) else {
        return questions;
    };
    questions.push(ComprehensionQuestion {
        category: QuestionCategory::ActionAt,
        text: format!("Which action did Player 1 play in round {}?", oldest.round),
        truth: GroundTruth::Token {
            value: oldest.own.clone(),
        },
    });
    questions.push(ComprehensionQuestion {
        category: QuestionCategory::PointsAt,
        text: format!(
            "How many points did Player 1 collect in round {}?",
            oldest.round
        ),
        truth: GroundTruth::Number {
            value: oldest.payoff,
        },
    });
    let chosen = latest.own.clone();
    let count = memory.iter().filter(|r| r.own == chosen).count() as i64;
    questions.push(ComprehensionQuestion {
        category: QuestionCategory::ActionCount,
        text: format!("How many times did Player 1 choose {chosen}?"),
        truth: GroundTruth::Number { value: count },
    });
    questions.push(ComprehensionQuestion {
        category: QuestionCategory::TotalPoints,
        text: "What is Player 1's current total payoff?".to_owned(),
        truth: GroundTruth::Number {
            value: memory.windowed_score(),
        },
    });
    questions
}

/// One question scheduled against a replayed interaction: the request pairs
/// the byte-exact game prompt the agent saw (same memory, same presented
/// order) with the question as the user turn.
#[derive(Debug, Clone)]
pub struct PlannedQuestion {
    /// Global interaction id in the log.
    pub interaction: u64,
    /// The agent's own 1-based interaction counter.
    pub agent_interaction: u32,
    pub question: ComprehensionQuestion,
    pub request: CompletionRequest,
}

/// Replays one agent through the log and schedules every applicable question
/// at every interaction the agent took part in. The memory is rebuilt with
/// the given capacity, so the replay can use the same window the agent had
/// or probe a different one.
pub fn plan_comprehension(
    log: &RunLog,
    agent: u32,
    memory_capacity: usize,
    params: &LlmParams,
) -> Result<Vec<PlannedQuestion>, GatewayError> {
    params.validate()?;
    if (agent as usize) >= log.config.population {
        return Err(GatewayError::AgentOutOfRange {
            agent,
            population: log.config.population,
        });
    }
    let pool = &log.config.pool;
    let payoffs = &log.config.payoffs;
    let mut memory = MemoryWindow::new(memory_capacity)?;
    let mut plan = Vec::new();
    let mut agent_interaction = 0u32;
    for event in &log.events {
        let (own, partner, presented) = if event.agent_a == agent {
            (
                Some(&event.name_a),
                event.name_b.as_ref(),
                event.presented_a.as_ref(),
            )
        } else if event.agent_b == agent {
            (
                event.name_b.as_ref(),
                Some(&event.name_a),
                event.presented_b.as_ref(),
            )
        } else {
            continue;
        };
        let (Some(own), Some(partner)) = (own, partner) else {
            return Err(GatewayError::UnsupportedLog);
        };
        agent_interaction += 1;
        let canonical;
        let presented: &[Name] = match presented {
            Some(order) => order,
            None => {
                canonical = pool.names().to_vec();
                &canonical
            }
        };
        let game = build_prompt(payoffs, presented, &memory, params.stated_rounds);
        for question in questions_for(&memory, pool, payoffs) {
            let bundle = PromptBundle {
                system: game.system.clone(),
                user: question.text.clone(),
            };
            let request = CompletionRequest::new(params, &bundle);
            plan.push(PlannedQuestion {
                interaction: event.interaction,
                agent_interaction,
                question,
                request,
            });
        }
        memory.push(InteractionRecord::from_exchange(
            memory.next_round(),
            own.clone(),
            partner.clone(),
            payoffs,
        ))?;
    }
    Ok(plan)
}

/// Correct answers for a plan, in query order; scripting these into a
/// transport yields a perfect responder.
pub fn oracle_script(plan: &[PlannedQuestion]) -> Vec<String> {
    plan.iter().map(|p| p.question.truth.render()).collect()
}

/// Deterministically wrong answers for a plan, in query order: numbers are
/// shifted, sets are truncated, and actions are swapped for another pool
/// action.
pub fn scrambled_script(plan: &[PlannedQuestion], pool: &NamePool) -> Vec<String> {
    plan.iter()
        .map(|p| match &p.question.truth {
            GroundTruth::Number { value } => (value + 1).to_string(),
            GroundTruth::Numbers { values } => values[0].to_string(),
            GroundTruth::Token { value } => pool
                .names()
                .iter()
                .find(|name| *name != value)
                .expect("pools hold at least two names")
                .to_string(),
            GroundTruth::Tokens { values } => values[0].to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub asked: u64,
    pub correct: u64,
}

impl CategoryAccuracy {
    pub fn accuracy(&self) -> f64 {
        if self.asked == 0 {
            return f64::NAN;
        }
        self.correct as f64 / self.asked as f64
    }
}

/// Per-category scores for one agent's replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComprehensionReport {
    pub agent: u32,
    /// Interactions the agent was replayed through.
    pub interactions: u32,
    /// Keyed by category label; only categories that were asked appear.
    pub per_category: BTreeMap<String, CategoryAccuracy>,
}

impl ComprehensionReport {
    pub fn accuracy(&self, category: QuestionCategory) -> Option<f64> {
        self.per_category
            .get(category.label())
            .map(CategoryAccuracy::accuracy)
    }

    /// Pooled accuracy over every question in a family.
    pub fn group_accuracy(&self, group: QuestionGroup) -> f64 {
        let mut total = CategoryAccuracy::default();
        for category in QuestionCategory::ALL {
            if category.group() == group {
                if let Some(scores) = self.per_category.get(category.label()) {
                    total.asked += scores.asked;
                    total.correct += scores.correct;
                }
            }
        }
        total.accuracy()
    }

    pub fn overall(&self) -> f64 {
        let mut total = CategoryAccuracy::default();
        for scores in self.per_category.values() {
            total.asked += scores.asked;
            total.correct += scores.correct;
        }
        total.accuracy()
    }
}

/// Plans, queries the transport one question at a time, and scores. The
/// transport sees exactly what a live model would: the original game prompt
/// as the system turn and the question as the user turn.
pub fn run_comprehension_suite(
    log: &RunLog,
    agent: u32,
    memory_capacity: usize,
    params: &LlmParams,
    transport: &dyn Transport,
) -> Result<ComprehensionReport, GatewayError> {
    let plan = plan_comprehension(log, agent, memory_capacity, params)?;
    let pool = &log.config.pool;
    let interactions = plan.last().map_or(0, |p| p.agent_interaction);
    let mut per_category: BTreeMap<String, CategoryAccuracy> = BTreeMap::new();
    for planned in &plan {
        let raw = transport.complete(&planned.request)?;
        let entry = per_category
            .entry(planned.question.category.label().to_owned())
            .or_default();
        entry.asked += 1;
        if score_answer(&planned.question.truth, pool, &raw) {
            entry.correct += 1;
        }
    }
    Ok(ComprehensionReport {
        agent,
        interactions,
        per_category,
    })
}
