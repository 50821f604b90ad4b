//! Scenario runners built on the engine: the first-round bias probe, the
//! consensus-distribution ensemble, the micro-dynamics table, the stability
//! check, and the committed-minority critical-mass sweep.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Lexicon, PolicyError, PolicyInstance, SurrogateParams};
use crate::config::{CommittedSpec, ConfigError, Initialization, PolicySpec, TrialConfig};
use crate::engine::{
    detect_flip, run_ensemble, run_trial, EngineError, FlipCriterion, FlipDetection, FlipError,
    RunLog,
};
use crate::llm::{build_transport, GatewayError, LlmSession, Transport};
use crate::seeds::{self, tag};
use crate::stats::{self, BootstrapConfig, StatsError, TestResult};
use crate::types::{DomainError, InteractionRecord, MemoryWindow, Name, NamePool, PayoffRule};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Flip(#[from] FlipError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("probe needs at least one draw")]
    NoDraws,
    #[error("micro-dynamics analysis needs a two-name pool, got {0} names")]
    PoolNotBinary(usize),
    #[error("micro-dynamics analysis needs memory capacity >= 2, got {0}")]
    MemoryTooShort(usize),
    #[error("stability analysis requires a consensus initialization")]
    NotConsensusInitialized,
    #[error(
        "sweep sizes must be non-empty, strictly increasing, and at most the population {population}"
    )]
    BadSweepRange { population: usize },
    #[error("majority and minority must be distinct pool names")]
    BadSweepNames,
}

/// Builds one policy instance outside a trial, for probes and forward
/// simulations. LLM policies get a transport built from their spec (trial
/// index 0) unless an override is supplied.
fn instantiate(
    policy: &PolicySpec,
    pool: &NamePool,
    seed: u64,
    transport_override: Option<Arc<dyn Transport>>,
) -> Result<PolicyInstance, ExperimentError> {
    Ok(match policy.clone() {
        PolicySpec::Minimal => PolicyInstance::Minimal { bias: None },
        PolicySpec::BiasedMinimal { designated, bias } => PolicyInstance::Minimal {
            bias: Some((designated, bias)),
        },
        PolicySpec::Surrogate {
            p_keep,
            p_switch,
            first_round,
        } => PolicyInstance::Surrogate(SurrogateParams::resolve(
            p_keep, p_switch, &first_round, pool,
        )),
        PolicySpec::Committed { target } => PolicyInstance::Committed(target),
        PolicySpec::Llm { params, transport } => {
            let transport = match transport_override {
                Some(transport) => transport,
                None => build_transport(&transport, 0, seed)?,
            };
            PolicyInstance::Llm(Arc::new(LlmSession::new(params, transport)))
        }
    })
}

/// Validates a bare policy by wrapping it in a two-agent throwaway config.
fn validate_policy(
    policy: &PolicySpec,
    pool: &NamePool,
    payoffs: &PayoffRule,
) -> Result<(), ExperimentError> {
    use crate::config::InteractionMode;
    let config = TrialConfig {
        population: 2,
        pool: pool.clone(),
        payoffs: *payoffs,
        memory_capacity: 1,
        mode: if policy.is_lexicon_based() {
            InteractionMode::SpeakerHearer
        } else {
            InteractionMode::SimultaneousCoordination
        },
        policy: policy.clone(),
        overrides: BTreeMap::new(),
        committed: None,
        initialization: Initialization::Empty,
        rounds: 1,
        early_stop_rounds: None,
    };
    config.validate()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// First-round bias probe.

/// Distribution of a policy's empty-memory decisions, with the matching
/// uniformity test: exact binomial for a two-name pool, chi-square
/// goodness-of-fit otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasProbeResult {
    pub draws: u64,
    /// Counts per pool name (zero entries included); sums to `draws`.
    pub counts: BTreeMap<String, u64>,
    pub test: TestResult,
}

impl BiasProbeResult {
    pub fn share(&self, name: &Name) -> f64 {
        *self.counts.get(name.as_str()).unwrap_or(&0) as f64 / self.draws as f64
    }
}

pub fn probe_first_round_bias(
    policy: &PolicySpec,
    pool: &NamePool,
    payoffs: &PayoffRule,
    draws: u64,
    master_seed: u64,
) -> Result<BiasProbeResult, ExperimentError> {
    probe_first_round_bias_with(policy, pool, payoffs, draws, master_seed, None)
}

/// Probe with an injected transport for LLM policies (replay or scripted).
pub fn probe_first_round_bias_with(
    policy: &PolicySpec,
    pool: &NamePool,
    payoffs: &PayoffRule,
    draws: u64,
    master_seed: u64,
    transport_override: Option<Arc<dyn Transport>>,
) -> Result<BiasProbeResult, ExperimentError> {
    if draws == 0 {
        return Err(ExperimentError::NoDraws);
    }
    validate_policy(policy, pool, payoffs)?;
    let probe_seed = seeds::derive(master_seed, &[tag::PROBE]);
    let instance = instantiate(policy, pool, probe_seed, transport_override)?;
    let empty_memory = MemoryWindow::new(1).expect("capacity 1 is valid");
    let mut counts = vec![0u64; pool.size()];
    for draw in 0..draws {
        let mut rng = seeds::stream(master_seed, &[tag::PROBE, draw]);
        let name = match &instance {
            PolicyInstance::Minimal { .. } => {
                let mut lexicon = Lexicon::new();
                instance.speak_lexicon(&mut lexicon, pool, &mut rng)?.name
            }
            _ => {
                instance
                    .choose_memory(&empty_memory, pool, payoffs, &mut rng)?
                    .name
            }
        };
        counts[pool.index_of(&name).expect("policies stay in the pool")] += 1;
    }
    let test = if pool.size() == 2 {
        stats::binom_exact_two_tailed(counts[0], draws, 0.5)?
    } else {
        stats::chi2_gof_uniform(&counts)?
    };
    let counts = pool
        .names()
        .iter()
        .zip(&counts)
        .map(|(name, &count)| (name.as_str().to_owned(), count))
        .collect();
    Ok(BiasProbeResult {
        draws,
        counts,
        test,
    })
}

// ---------------------------------------------------------------------------
// Consensus distribution.

/// Which name each run of an ensemble converged on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusDistribution {
    pub runs: u64,
    /// Winner counts per pool name (zero entries included).
    pub winners: BTreeMap<String, u64>,
    /// Runs that hit the horizon (or aborted) without a consensus.
    pub unconverged: u64,
}

impl ConsensusDistribution {
    pub fn from_logs(pool: &NamePool, logs: &[RunLog]) -> Self {
        let mut winners: BTreeMap<String, u64> = pool
            .names()
            .iter()
            .map(|name| (name.as_str().to_owned(), 0))
            .collect();
        let mut unconverged = 0;
        for log in logs {
            match log.status.converged_name() {
                Some(name) => *winners.entry(name.as_str().to_owned()).or_insert(0) += 1,
                None => unconverged += 1,
            }
        }
        ConsensusDistribution {
            runs: logs.len() as u64,
            winners,
            unconverged,
        }
    }

    pub fn converged(&self) -> u64 {
        self.runs - self.unconverged
    }

    /// Tests the winner counts against the no-collective-bias null: exact
    /// binomial for two names, chi-square goodness-of-fit otherwise.
    pub fn uniformity_test(&self) -> Result<TestResult, ExperimentError> {
        let counts: Vec<u64> = self.winners.values().copied().collect();
        let test = if counts.len() == 2 {
            stats::binom_exact_two_tailed(counts[0], self.converged(), 0.5)?
        } else {
            stats::chi2_gof_uniform(&counts)?
        };
        Ok(test)
    }
}

/// Runs `runs` seeded trials and tallies the consensus winners. Returns the
/// tally together with the logs it came from.
pub fn consensus_distribution(
    config: &TrialConfig,
    master_seed: u64,
    runs: u64,
) -> Result<(ConsensusDistribution, Vec<RunLog>), ExperimentError> {
    let logs = run_ensemble(config, master_seed, runs)?;
    Ok((ConsensusDistribution::from_logs(&config.pool, &logs), logs))
}

// ---------------------------------------------------------------------------
// Micro-dynamics table.

/// Interactions the table covers (memory depths 0, 1 and 2).
pub const MICRO_INTERACTIONS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrodynamicsSettings {
    /// Name whose production probability the table reports.
    pub designated: Name,
    /// Fresh agent pairs to forward-simulate.
    pub samples: u64,
    /// Memory capacity of the simulated agents.
    pub memory_capacity: usize,
    pub bootstrap: BootstrapConfig,
}

impl MicrodynamicsSettings {
    pub fn new(designated: Name, samples: u64) -> Self {
        MicrodynamicsSettings {
            designated,
            samples,
            memory_capacity: 5,
            bootstrap: BootstrapConfig::default(),
        }
    }
}

/// One memory configuration at one interaction number. A configuration is
/// the agent's full remembered history, labelled oldest-first as
/// `own|partner` plus `+`/`-` for the outcome, e.g. `Q|M- M|M+`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroConfigRow {
    pub interaction: u32,
    pub label: String,
    pub occurrences: u64,
    pub designated_count: u64,
    /// Empty for configurations never observed in the sample (unobserved is
    /// not the same as probability zero).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub production_probability: Option<f64>,
    /// Exact binomial p-value against an unbiased 0.5 production rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binom_p: Option<f64>,
    /// Bootstrap proportion of resamples more biased than observed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_p: Option<f64>,
}

/// Whole-interaction aggregate, weighting configurations by how often they
/// occurred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionAggregate {
    pub interaction: u32,
    pub total: u64,
    pub designated_count: u64,
    pub probability: f64,
    pub binom_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrodynamicsTable {
    pub designated: Name,
    pub samples: u64,
    pub rows: Vec<MicroConfigRow>,
    pub aggregates: Vec<InteractionAggregate>,
}

impl MicrodynamicsTable {
    pub fn row(&self, interaction: u32, label: &str) -> Option<&MicroConfigRow> {
        self.rows
            .iter()
            .find(|row| row.interaction == interaction && row.label == label)
    }
}

fn record_label(record: &InteractionRecord) -> String {
    format!(
        "{}|{}{}",
        record.own,
        record.partner,
        if record.success { '+' } else { '-' }
    )
}

fn memory_label(memory: &MemoryWindow) -> String {
    if memory.is_empty() {
        return "empty".to_owned();
    }
    memory
        .iter()
        .map(record_label)
        .collect::<Vec<_>>()
        .join(" ")
}

/// All configuration labels possible at each interaction, in a fixed order,
/// so unobserved configurations still get a row.
fn enumerate_labels(pool: &NamePool) -> Vec<(u32, String)> {
    let mut single = Vec::new();
    for own in pool.names() {
        for partner in pool.names() {
            single.push(record_label(&InteractionRecord::from_exchange(
                1,
                own.clone(),
                partner.clone(),
                &PayoffRule::default(),
            )));
        }
    }
    let mut labels = vec![(1, "empty".to_owned())];
    for label in &single {
        labels.push((2, label.clone()));
    }
    for first in &single {
        for second in &single {
            labels.push((3, format!("{first} {second}")));
        }
    }
    labels
}

pub fn build_microdynamics_table(
    policy: &PolicySpec,
    pool: &NamePool,
    payoffs: &PayoffRule,
    settings: &MicrodynamicsSettings,
    master_seed: u64,
) -> Result<MicrodynamicsTable, ExperimentError> {
    build_microdynamics_table_with(policy, pool, payoffs, settings, master_seed, None)
}

/// Forward-simulates fresh agent pairs through their first three
/// interactions and tabulates, per memory configuration, how often the
/// tracked agent produced the designated name.
pub fn build_microdynamics_table_with(
    policy: &PolicySpec,
    pool: &NamePool,
    payoffs: &PayoffRule,
    settings: &MicrodynamicsSettings,
    master_seed: u64,
    transport_override: Option<Arc<dyn Transport>>,
) -> Result<MicrodynamicsTable, ExperimentError> {
    if pool.size() != 2 {
        return Err(ExperimentError::PoolNotBinary(pool.size()));
    }
    if settings.memory_capacity < (MICRO_INTERACTIONS as usize) - 1 {
        return Err(ExperimentError::MemoryTooShort(settings.memory_capacity));
    }
    if settings.samples == 0 {
        return Err(ExperimentError::NoDraws);
    }
    if !pool.contains(&settings.designated) {
        return Err(ExperimentError::Config(ConfigError::NameNotInPool(
            settings.designated.as_str().to_owned(),
        )));
    }
    validate_policy(policy, pool, payoffs)?;
    let micro_seed = seeds::derive(master_seed, &[tag::MICRO]);
    let instance = instantiate(policy, pool, micro_seed, transport_override)?;

    let mut observations: BTreeMap<(u32, String), Vec<bool>> = BTreeMap::new();
    for sample in 0..settings.samples {
        let mut rng = seeds::stream(master_seed, &[tag::MICRO, sample]);
        let mut memory_a = MemoryWindow::new(settings.memory_capacity)?;
        let mut memory_b = MemoryWindow::new(settings.memory_capacity)?;
        for interaction in 1..=MICRO_INTERACTIONS {
            let label = memory_label(&memory_a);
            let name_a = instance
                .choose_memory(&memory_a, pool, payoffs, &mut rng)?
                .name;
            let name_b = instance
                .choose_memory(&memory_b, pool, payoffs, &mut rng)?
                .name;
            observations
                .entry((interaction, label))
                .or_default()
                .push(name_a == settings.designated);
            memory_a.push(InteractionRecord::from_exchange(
                memory_a.next_round(),
                name_a.clone(),
                name_b.clone(),
                payoffs,
            ))?;
            memory_b.push(InteractionRecord::from_exchange(
                memory_b.next_round(),
                name_b,
                name_a,
                payoffs,
            ))?;
        }
    }

    let mut rows = Vec::new();
    for (row_index, (interaction, label)) in enumerate_labels(pool).into_iter().enumerate() {
        let obs = observations
            .get(&(interaction, label.clone()))
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let occurrences = obs.len() as u64;
        let designated_count = obs.iter().filter(|&&hit| hit).count() as u64;
        let (production_probability, binom_p, bootstrap_p) = if occurrences == 0 {
            (None, None, None)
        } else {
            let probability = designated_count as f64 / occurrences as f64;
            let binom = stats::binom_exact_two_tailed(designated_count, occurrences, 0.5)?;
            let mut rng = seeds::stream(master_seed, &[tag::BOOTSTRAP, row_index as u64]);
            let bootstrap = stats::bootstrap_bias(obs, probability, &settings.bootstrap, &mut rng)?;
            (
                Some(probability),
                Some(binom.p_value),
                Some(bootstrap.p_value),
            )
        };
        rows.push(MicroConfigRow {
            interaction,
            label,
            occurrences,
            designated_count,
            production_probability,
            binom_p,
            bootstrap_p,
        });
    }

    let mut aggregates = Vec::new();
    for interaction in 1..=MICRO_INTERACTIONS {
        let relevant = rows.iter().filter(|row| row.interaction == interaction);
        let (mut total, mut designated_count) = (0, 0);
        for row in relevant {
            total += row.occurrences;
            designated_count += row.designated_count;
        }
        let binom = stats::binom_exact_two_tailed(designated_count, total, 0.5)?;
        aggregates.push(InteractionAggregate {
            interaction,
            total,
            designated_count,
            probability: designated_count as f64 / total as f64,
            binom_p: binom.p_value,
        });
    }

    Ok(MicrodynamicsTable {
        designated: settings.designated.clone(),
        samples: settings.samples,
        rows,
        aggregates,
    })
}

// ---------------------------------------------------------------------------
// Stability.

/// Production trajectory of the initial consensus name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub name: Name,
    /// Per-round share of productions going to the consensus name.
    pub production_probability: Vec<f64>,
    /// True when that share was exactly 1.0 in every round.
    pub always_stable: bool,
}

/// Runs one trial from an established consensus (the config must use the
/// consensus initialization) and reports whether the convention held.
pub fn run_stability(
    config: &TrialConfig,
    master_seed: u64,
    trial: u64,
) -> Result<(StabilityReport, RunLog), ExperimentError> {
    let Initialization::Consensus { name } = &config.initialization else {
        return Err(ExperimentError::NotConsensusInitialized);
    };
    let name = name.clone();
    let log = run_trial(config, master_seed, trial)?;
    let production_probability = log.metrics.production_series(&name);
    let always_stable = !production_probability.is_empty()
        && production_probability.iter().all(|&p| p == 1.0);
    Ok((
        StabilityReport {
            name,
            production_probability,
            always_stable,
        },
        log,
    ))
}

// ---------------------------------------------------------------------------
// Committed-minority critical-mass sweep.

/// How many of a size's seeded trials must flip for the size to count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlipRequirement {
    /// Every seed must flip (the strictest reading).
    #[default]
    All,
    /// At least this fraction of seeds must flip.
    Fraction { fraction: f64 },
}

impl FlipRequirement {
    pub fn satisfied(&self, flipped: u64, seeds: u64) -> bool {
        match self {
            FlipRequirement::All => flipped == seeds,
            FlipRequirement::Fraction { fraction } => {
                flipped as f64 >= fraction * seeds as f64 - 1e-9
            }
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    /// Committed-minority sizes to test, strictly increasing.
    pub c_values: Vec<usize>,
    /// Seeded trials per size.
    pub seeds: u64,
    #[serde(default)]
    pub requirement: FlipRequirement,
    /// Stop scanning at the first size that satisfies the requirement.
    #[serde(default = "default_true")]
    pub stop_at_first: bool,
    /// Flip criterion; defaults to 95% success over 3N interactions within
    /// 30 rounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<FlipCriterion>,
}

impl SweepSettings {
    pub fn new(c_values: Vec<usize>, seeds: u64) -> Self {
        SweepSettings {
            c_values,
            seeds,
            requirement: FlipRequirement::All,
            stop_at_first: true,
            criterion: None,
        }
    }
}

/// Flip outcomes for one committed-minority size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommittedOutcome {
    pub c: usize,
    /// Per-seed flip detection, in trial order.
    pub flips: Vec<Option<FlipDetection>>,
    pub flipped: u64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalMassResult {
    pub majority: Name,
    pub minority: Name,
    pub seeds: u64,
    pub requirement: FlipRequirement,
    pub criterion: FlipCriterion,
    /// Every size tested, in scan order.
    pub outcomes: Vec<CommittedOutcome>,
    /// Smallest tested size satisfying the requirement; empty when none in
    /// range did.
    pub critical_mass: Option<usize>,
    /// Sizes whose predecessor satisfied the requirement while they did not
    /// (fluctuation artifacts worth inspecting, not errors).
    pub monotonicity_violations: Vec<usize>,
}

/// Sweeps committed-minority sizes upward from an established consensus on
/// `majority`, with `c` agents committed to `minority`, and reports the
/// smallest size that flips the population within the horizon.
pub fn sweep_committed_minority(
    base: &TrialConfig,
    majority: &Name,
    minority: &Name,
    settings: &SweepSettings,
    master_seed: u64,
) -> Result<CriticalMassResult, ExperimentError> {
    if majority == minority
        || !base.pool.contains(majority)
        || !base.pool.contains(minority)
    {
        return Err(ExperimentError::BadSweepNames);
    }
    let increasing = settings
        .c_values
        .windows(2)
        .all(|pair| pair[0] < pair[1]);
    if settings.c_values.is_empty()
        || !increasing
        || settings.c_values.iter().any(|&c| c > base.population)
        || settings.seeds == 0
    {
        return Err(ExperimentError::BadSweepRange {
            population: base.population,
        });
    }
    let criterion = settings
        .criterion
        .unwrap_or_else(|| FlipCriterion::for_population(base.population));

    let mut outcomes = Vec::new();
    for &c in &settings.c_values {
        let mut config = base.clone();
        config.initialization = Initialization::Consensus {
            name: majority.clone(),
        };
        config.committed = Some(CommittedSpec {
            count: c,
            target: minority.clone(),
        });
        // Fixed horizon: the flip window must be observable for the full 30
        // rounds, so the emergence early-stop is disabled here.
        config.rounds = criterion.horizon_rounds;
        config.early_stop_rounds = None;
        let sweep_master = seeds::derive(master_seed, &[c as u64]);
        let logs = run_ensemble(&config, sweep_master, settings.seeds)?;
        let mut flips = Vec::with_capacity(logs.len());
        for log in &logs {
            flips.push(detect_flip(
                &log.events,
                &criterion,
                minority,
                config.interactions_per_round(),
            )?);
        }
        let flipped = flips.iter().flatten().count() as u64;
        let satisfied = settings.requirement.satisfied(flipped, settings.seeds);
        outcomes.push(CommittedOutcome {
            c,
            flips,
            flipped,
            satisfied,
        });
        if satisfied && settings.stop_at_first {
            break;
        }
    }

    let critical_mass = outcomes
        .iter()
        .find(|outcome| outcome.satisfied)
        .map(|outcome| outcome.c);
    let monotonicity_violations = outcomes
        .windows(2)
        .filter(|pair| pair[0].satisfied && !pair[1].satisfied)
        .map(|pair| pair[1].c)
        .collect();

    Ok(CriticalMassResult {
        majority: majority.clone(),
        minority: minority.clone(),
        seeds: settings.seeds,
        requirement: settings.requirement,
        criterion,
        outcomes,
        critical_mass,
        monotonicity_violations,
    })
}
