//! Trial engine: draws random pairs, resolves interactions in either mode,
//! keeps per-agent state, logs every micro-interaction, applies the early
//! stopping rule, and derives round metrics and flip detection from the log.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{absorb, Lexicon, PolicyError, PolicyInstance, SurrogateParams};
use crate::config::{ConfigError, Initialization, InteractionMode, PolicySpec, TrialConfig};
use crate::events::{LlmExchange, RunEvent};
use crate::llm::{build_transport, GatewayError, LlmSession, Transport};
use crate::seeds::{self, tag};
use crate::types::{InteractionRecord, MemoryWindow, Name};
use crate::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// How a trial ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialStatus {
    /// The early-stop rule fired: enough consecutive perfect rounds on one
    /// shared name.
    Converged { round: u32, name: Name },
    /// The full round budget ran without triggering the early stop.
    Completed,
    /// A gateway failure stopped the trial; events before `interaction` are
    /// intact and replayable.
    Aborted { interaction: u64, error: String },
}

impl TrialStatus {
    pub fn converged_name(&self) -> Option<&Name> {
        match self {
            TrialStatus::Converged { name, .. } => Some(name),
            _ => None,
        }
    }
}

/// Aggregates over one population round (one batch of N micro-interactions).
/// `name_counts` holds every name produced this round — two per interaction
/// in simultaneous mode, one in speaker-hearer mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u32,
    pub interactions: u32,
    pub successes: u32,
    pub success_rate: f64,
    pub name_counts: BTreeMap<String, u32>,
    /// Name produced strictly more often than any other this round, if one
    /// exists; ties leave it empty.
    pub modal_name: Option<Name>,
    /// Occurrences of the most frequent name (even when tied).
    pub modal_count: u32,
    pub distinct_names: u32,
}

impl RoundMetrics {
    /// Names produced this round (2N in simultaneous mode, N in
    /// speaker-hearer mode, fewer in a truncated final round).
    pub fn productions(&self) -> u32 {
        self.name_counts.values().sum()
    }

    /// Share of this round's productions that were `name`.
    pub fn production_probability(&self, name: &Name) -> f64 {
        let total = self.productions();
        if total == 0 {
            return 0.0;
        }
        *self.name_counts.get(name.as_str()).unwrap_or(&0) as f64 / total as f64
    }
}

/// Round-by-round metrics derived purely from the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricSeries {
    pub rounds: Vec<RoundMetrics>,
}

impl MetricSeries {
    pub fn from_events(events: &[RunEvent], interactions_per_round: u64) -> Self {
        assert!(interactions_per_round > 0);
        let mut rounds = Vec::new();
        for chunk in events.chunks(interactions_per_round as usize) {
            let interactions = chunk.len() as u32;
            let successes = chunk.iter().filter(|e| e.success).count() as u32;
            let mut name_counts: BTreeMap<String, u32> = BTreeMap::new();
            for event in chunk {
                *name_counts.entry(event.name_a.to_string()).or_insert(0) += 1;
                if let Some(name_b) = &event.name_b {
                    *name_counts.entry(name_b.to_string()).or_insert(0) += 1;
                }
            }
            let (modal_name, modal_count) = strict_mode(&name_counts);
            rounds.push(RoundMetrics {
                round: rounds.len() as u32 + 1,
                interactions,
                successes,
                success_rate: successes as f64 / interactions as f64,
                modal_name,
                modal_count,
                distinct_names: name_counts.len() as u32,
                name_counts,
            });
        }
        MetricSeries { rounds }
    }

    /// Per-round share of productions going to `name` (for stability and
    /// flip trajectories).
    pub fn production_series(&self, name: &Name) -> Vec<f64> {
        self.rounds
            .iter()
            .map(|round| round.production_probability(name))
            .collect()
    }
}

fn strict_mode(name_counts: &BTreeMap<String, u32>) -> (Option<Name>, u32) {
    let mut best: Option<(&str, u32)> = None;
    let mut tied = false;
    for (name, &count) in name_counts {
        match best {
            None => best = Some((name, count)),
            Some((_, top)) if count > top => {
                best = Some((name, count));
                tied = false;
            }
            Some((_, top)) if count == top => tied = true,
            _ => {}
        }
    }
    match best {
        Some((name, count)) if !tied => (
            Some(Name::new(name).expect("counted names are valid")),
            count,
        ),
        Some((_, count)) => (None, count),
        None => (None, 0),
    }
}

/// When a population counts as having flipped to a target name: the trailing
/// `window` micro-interactions must reach the success threshold while the
/// target is the strictly most frequent name produced in that window, no
/// later than `horizon_rounds` population rounds in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipCriterion {
    pub success_threshold: f64,
    pub window: u64,
    pub horizon_rounds: u32,
}

impl FlipCriterion {
    /// The default reading: at least 95% success over the last 3N
    /// micro-interactions, within 30 population rounds.
    pub fn for_population(population: usize) -> Self {
        FlipCriterion {
            success_threshold: 0.95,
            window: 3 * population as u64,
            horizon_rounds: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipDetection {
    /// First interaction whose trailing window satisfies the criterion.
    pub interaction: u64,
    /// Population round that interaction falls in (1-based).
    pub round: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlipError {
    #[error("event log holds {events} interactions but the flip window needs {window}")]
    InsufficientData { events: usize, window: u64 },
}

/// Scans the event log for the first interaction at which the flip criterion
/// holds for `target`. `Ok(None)` means the log is long enough but no window
/// within the horizon qualifies.
pub fn detect_flip(
    events: &[RunEvent],
    criterion: &FlipCriterion,
    target: &Name,
    interactions_per_round: u64,
) -> Result<Option<FlipDetection>, FlipError> {
    let window = criterion.window as usize;
    if window == 0 || events.len() < window {
        return Err(FlipError::InsufficientData {
            events: events.len(),
            window: criterion.window,
        });
    }
    let needed = criterion.success_threshold * criterion.window as f64 - 1e-9;
    let mut successes = 0usize;
    let mut counts: BTreeMap<&Name, u64> = BTreeMap::new();
    for (idx, event) in events.iter().enumerate() {
        if event.success {
            successes += 1;
        }
        *counts.entry(&event.name_a).or_insert(0) += 1;
        if let Some(name_b) = &event.name_b {
            *counts.entry(name_b).or_insert(0) += 1;
        }
        if idx >= window {
            let old = &events[idx - window];
            if old.success {
                successes -= 1;
            }
            decrement(&mut counts, &old.name_a);
            if let Some(name_b) = &old.name_b {
                decrement(&mut counts, name_b);
            }
        }
        if idx + 1 >= window && successes as f64 >= needed && strictly_modal(&counts, target) {
            let interaction = event.interaction;
            let round = interaction.div_ceil(interactions_per_round) as u32;
            if round > criterion.horizon_rounds {
                return Ok(None);
            }
            return Ok(Some(FlipDetection { interaction, round }));
        }
    }
    Ok(None)
}

fn decrement(counts: &mut BTreeMap<&Name, u64>, name: &Name) {
    if let Some(count) = counts.get_mut(name) {
        *count -= 1;
        if *count == 0 {
            counts.remove(name);
        }
    }
}

fn strictly_modal(counts: &BTreeMap<&Name, u64>, target: &Name) -> bool {
    let Some(&target_count) = counts.get(target) else {
        return false;
    };
    counts
        .iter()
        .all(|(name, &count)| *name == target || count < target_count)
}

/// Complete, self-describing record of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub schema_version: u32,
    pub trial: u64,
    pub master_seed: u64,
    pub config: TrialConfig,
    pub status: TrialStatus,
    /// Rounds with at least one logged interaction.
    pub rounds_run: u32,
    pub events: Vec<RunEvent>,
    pub metrics: MetricSeries,
}

impl RunLog {
    /// SHA-256 over the canonical JSON form; two logs with the same hash are
    /// byte-identical records.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("run logs serialize");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        format!("{:x}", hasher.finalize())
    }

    /// All LLM exchanges in engine execution order. Feeding these to a
    /// replay transport re-runs the trial against the recorded responses,
    /// with every request hash re-verified.
    pub fn transcript(&self) -> Vec<LlmExchange> {
        let mut transcript = Vec::new();
        for event in &self.events {
            transcript.extend(event.exchanges_a.iter().cloned());
            transcript.extend(event.exchanges_b.iter().cloned());
        }
        transcript
    }
}

enum AgentStates {
    Memories(Vec<MemoryWindow>),
    Lexicons(Vec<Lexicon>),
}

/// Per-agent state at the end of a trial, for callers that want more than
/// the event log (tests, experiment summaries).
pub struct PopulationState {
    policies: Vec<PolicyInstance>,
    states: AgentStates,
}

impl PopulationState {
    pub fn memories(&self) -> Option<&[MemoryWindow]> {
        match &self.states {
            AgentStates::Memories(memories) => Some(memories),
            AgentStates::Lexicons(_) => None,
        }
    }

    pub fn lexicons(&self) -> Option<&[Lexicon]> {
        match &self.states {
            AgentStates::Lexicons(lexicons) => Some(lexicons),
            AgentStates::Memories(_) => None,
        }
    }

    pub fn policy_labels(&self) -> Vec<&'static str> {
        self.policies.iter().map(|p| p.kind_label()).collect()
    }
}

/// Uniform draw of an ordered pair of distinct agents.
pub fn select_pair<R: Rng + ?Sized>(population: usize, rng: &mut R) -> (usize, usize) {
    debug_assert!(population >= 2);
    let a = rng.gen_range(0..population);
    let mut b = rng.gen_range(0..population - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// Runs one trial to completion (or abort) and returns its log.
pub fn run_trial(config: &TrialConfig, master_seed: u64, trial: u64) -> Result<RunLog, EngineError> {
    run_trial_detailed(config, master_seed, trial, None).map(|(log, _)| log)
}

/// Like [`run_trial`], but every LLM agent uses the given transport instead
/// of the configured one. This is how a recorded transcript is replayed.
pub fn run_trial_with_transport(
    config: &TrialConfig,
    master_seed: u64,
    trial: u64,
    transport: Arc<dyn Transport>,
) -> Result<RunLog, EngineError> {
    run_trial_detailed(config, master_seed, trial, Some(transport)).map(|(log, _)| log)
}

/// Runs independent trials `0..trials` in parallel under one master seed.
/// Each trial derives its own seed streams, so results do not depend on
/// scheduling.
pub fn run_ensemble(
    config: &TrialConfig,
    master_seed: u64,
    trials: u64,
) -> Result<Vec<RunLog>, EngineError> {
    (0..trials)
        .into_par_iter()
        .map(|trial| run_trial(config, master_seed, trial))
        .collect()
}

/// Full trial runner; also hands back the final per-agent state.
pub fn run_trial_detailed(
    config: &TrialConfig,
    master_seed: u64,
    trial: u64,
    transport_override: Option<Arc<dyn Transport>>,
) -> Result<(RunLog, PopulationState), EngineError> {
    config.validate()?;
    let population = config.population;
    let trial_seed = seeds::derive(master_seed, &[tag::TRIAL, trial]);
    let policies = compile_policies(config, trial, trial_seed, &transport_override)?;
    let mut states = initial_states(config, &policies);
    let mut pair_rng = seeds::stream(master_seed, &[tag::TRIAL, trial, tag::PAIR]);
    let mut agent_rngs: Vec<ChaCha8Rng> = (0..population)
        .map(|agent| seeds::stream(master_seed, &[tag::TRIAL, trial, tag::AGENT, agent as u64]))
        .collect();

    let mut events: Vec<RunEvent> = Vec::new();
    let mut status = TrialStatus::Completed;
    let mut streak = 0u32;
    let mut streak_name: Option<Name> = None;

    'rounds: for round in 1..=config.rounds {
        let mut round_perfect = true;
        let mut round_name: Option<Name> = None;
        for _ in 0..population {
            let (a, b) = select_pair(population, &mut pair_rng);
            let interaction = events.len() as u64 + 1;
            let outcome = step(
                config,
                &policies,
                &mut states,
                &mut agent_rngs,
                trial,
                interaction,
                a,
                b,
            );
            let event = match outcome {
                Ok(event) => event,
                Err(error) => {
                    status = TrialStatus::Aborted {
                        interaction,
                        error: error.to_string(),
                    };
                    break 'rounds;
                }
            };
            if !event.success {
                round_perfect = false;
            }
            let mut names = vec![&event.name_a];
            if let Some(name_b) = &event.name_b {
                names.push(name_b);
            }
            for name in names {
                match &round_name {
                    None => round_name = Some(name.clone()),
                    Some(seen) if seen != name => round_perfect = false,
                    Some(_) => {}
                }
            }
            events.push(event);
        }
        if round_perfect {
            if let Some(name) = round_name {
                if streak_name.as_ref() == Some(&name) {
                    streak += 1;
                } else {
                    streak_name = Some(name);
                    streak = 1;
                }
            } else {
                // A "round" with zero interactions cannot occur; keep the
                // streak untouched if it somehow did.
            }
        } else {
            streak = 0;
            streak_name = None;
        }
        if let Some(required) = config.early_stop_rounds {
            if streak >= required {
                status = TrialStatus::Converged {
                    round,
                    name: streak_name.clone().expect("streak tracks a name"),
                };
                break;
            }
        }
    }

    let metrics = MetricSeries::from_events(&events, config.interactions_per_round());
    let log = RunLog {
        schema_version: SCHEMA_VERSION,
        trial,
        master_seed,
        config: config.clone(),
        status,
        rounds_run: metrics.rounds.len() as u32,
        events,
        metrics,
    };
    Ok((log, PopulationState { policies, states }))
}

fn compile_policies(
    config: &TrialConfig,
    trial: u64,
    trial_seed: u64,
    transport_override: &Option<Arc<dyn Transport>>,
) -> Result<Vec<PolicyInstance>, EngineError> {
    let mut sessions: BTreeMap<String, Arc<LlmSession>> = BTreeMap::new();
    let mut policies = Vec::with_capacity(config.population);
    for agent in 0..config.population {
        let instance = match config.effective_policy(agent) {
            PolicySpec::Minimal => PolicyInstance::Minimal { bias: None },
            PolicySpec::BiasedMinimal { designated, bias } => PolicyInstance::Minimal {
                bias: Some((designated, bias)),
            },
            PolicySpec::Surrogate {
                p_keep,
                p_switch,
                first_round,
            } => PolicyInstance::Surrogate(SurrogateParams::resolve(
                p_keep,
                p_switch,
                &first_round,
                &config.pool,
            )),
            PolicySpec::Committed { target } => PolicyInstance::Committed(target),
            PolicySpec::Llm { params, transport } => {
                let key = serde_json::to_string(&(&params, &transport))
                    .expect("gateway specs serialize");
                let session = match sessions.get(&key) {
                    Some(session) => Arc::clone(session),
                    None => {
                        let transport = match transport_override {
                            Some(transport) => Arc::clone(transport),
                            None => build_transport(&transport, trial, trial_seed)?,
                        };
                        let session = Arc::new(LlmSession::new(params, transport));
                        sessions.insert(key, Arc::clone(&session));
                        session
                    }
                };
                PolicyInstance::Llm(session)
            }
        };
        policies.push(instance);
    }
    Ok(policies)
}

fn initial_states(config: &TrialConfig, policies: &[PolicyInstance]) -> AgentStates {
    match config.mode {
        InteractionMode::SpeakerHearer => {
            let lexicons = policies
                .iter()
                .map(|policy| {
                    if let Some(target) = policy.committed_target() {
                        Lexicon::from_name(target.clone())
                    } else {
                        match &config.initialization {
                            Initialization::Empty => Lexicon::new(),
                            Initialization::Consensus { name } => Lexicon::from_name(name.clone()),
                        }
                    }
                })
                .collect();
            AgentStates::Lexicons(lexicons)
        }
        InteractionMode::SimultaneousCoordination => {
            let mut window =
                MemoryWindow::new(config.memory_capacity).expect("validated capacity");
            if let Initialization::Consensus { name } = &config.initialization {
                // A full window of successes on the name: the agent has
                // solely observed that convention for M interactions.
                for round in 1..=config.memory_capacity as u64 {
                    window
                        .push(InteractionRecord::from_exchange(
                            round,
                            name.clone(),
                            name.clone(),
                            &config.payoffs,
                        ))
                        .expect("rounds 1..=M increase strictly");
                }
            }
            AgentStates::Memories(vec![window; config.population])
        }
    }
}

/// Two distinct mutable references into one slice.
fn pair_mut<T>(slice: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    assert!(i != j);
    if i < j {
        let (left, right) = slice.split_at_mut(j);
        (&mut left[i], &mut right[0])
    } else {
        let (left, right) = slice.split_at_mut(i);
        (&mut right[0], &mut left[j])
    }
}

#[allow(clippy::too_many_arguments)]
fn step(
    config: &TrialConfig,
    policies: &[PolicyInstance],
    states: &mut AgentStates,
    agent_rngs: &mut [ChaCha8Rng],
    trial: u64,
    interaction: u64,
    a: usize,
    b: usize,
) -> Result<RunEvent, PolicyError> {
    match states {
        AgentStates::Memories(memories) => step_simultaneous(
            config, policies, memories, agent_rngs, trial, interaction, a, b,
        ),
        AgentStates::Lexicons(lexicons) => step_speaker_hearer(
            config, policies, lexicons, agent_rngs, trial, interaction, a, b,
        ),
    }
}

#[allow(clippy::too_many_arguments)]
fn step_simultaneous(
    config: &TrialConfig,
    policies: &[PolicyInstance],
    memories: &mut [MemoryWindow],
    agent_rngs: &mut [ChaCha8Rng],
    trial: u64,
    interaction: u64,
    a: usize,
    b: usize,
) -> Result<RunEvent, PolicyError> {
    let decision_a =
        policies[a].choose_memory(&memories[a], &config.pool, &config.payoffs, &mut agent_rngs[a])?;
    let decision_b =
        policies[b].choose_memory(&memories[b], &config.pool, &config.payoffs, &mut agent_rngs[b])?;
    let success = decision_a.name == decision_b.name;
    let payoff = if success {
        config.payoffs.reward()
    } else {
        config.payoffs.penalty()
    };
    let (memory_a, memory_b) = pair_mut(memories, a, b);
    memory_a
        .push(InteractionRecord::from_exchange(
            memory_a.next_round(),
            decision_a.name.clone(),
            decision_b.name.clone(),
            &config.payoffs,
        ))
        .expect("per-agent rounds strictly increase");
    memory_b
        .push(InteractionRecord::from_exchange(
            memory_b.next_round(),
            decision_b.name.clone(),
            decision_a.name.clone(),
            &config.payoffs,
        ))
        .expect("per-agent rounds strictly increase");
    Ok(RunEvent {
        schema_version: SCHEMA_VERSION,
        trial,
        interaction,
        agent_a: a as u32,
        agent_b: b as u32,
        name_a: decision_a.name,
        name_b: Some(decision_b.name),
        success,
        payoff_a: payoff,
        payoff_b: payoff,
        score_a: Some(memory_a.windowed_score()),
        score_b: Some(memory_b.windowed_score()),
        presented_a: decision_a.presented,
        presented_b: decision_b.presented,
        exchanges_a: decision_a.exchanges,
        exchanges_b: decision_b.exchanges,
        retries_a: decision_a.retries,
        retries_b: decision_b.retries,
        fallback_a: decision_a.fallback,
        fallback_b: decision_b.fallback,
    })
}

#[allow(clippy::too_many_arguments)]
fn step_speaker_hearer(
    config: &TrialConfig,
    policies: &[PolicyInstance],
    lexicons: &mut [Lexicon],
    agent_rngs: &mut [ChaCha8Rng],
    trial: u64,
    interaction: u64,
    speaker: usize,
    hearer: usize,
) -> Result<RunEvent, PolicyError> {
    let utterance = {
        let lexicon = &mut lexicons[speaker];
        policies[speaker].speak_lexicon(lexicon, &config.pool, &mut agent_rngs[speaker])?
    };
    let success = match policies[hearer].committed_target() {
        Some(target) => utterance.name == *target,
        None => lexicons[hearer].contains(&utterance.name),
    };
    if policies[hearer].committed_target().is_some() {
        // Committed hearers never adopt; the speaker still collapses on a
        // success, which for a committed speaker is a no-op.
        if success {
            lexicons[speaker].collapse_to(utterance.name.clone());
        }
    } else {
        let (speaker_lexicon, hearer_lexicon) = pair_mut(lexicons, speaker, hearer);
        absorb(speaker_lexicon, hearer_lexicon, &utterance.name, success);
    }
    let payoff = if success {
        config.payoffs.reward()
    } else {
        config.payoffs.penalty()
    };
    Ok(RunEvent {
        schema_version: SCHEMA_VERSION,
        trial,
        interaction,
        agent_a: speaker as u32,
        agent_b: hearer as u32,
        name_a: utterance.name,
        name_b: None,
        success,
        payoff_a: payoff,
        payoff_b: payoff,
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
    })
}
