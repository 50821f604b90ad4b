//! Agent-based naming-game simulator: agents coordinate on a shared name
//! through repeated pairwise interactions, with optional committed minorities
//! trying to overturn an established convention.
//!
//! The crate splits into:
//! - [`types`]: names, pools, payoffs, and the sliding interaction memory;
//! - [`agents`]: decision policies (lexicon-based, memory-based, committed,
//!   and LLM-backed);
//! - [`engine`]: the round-robin interaction loop, metrics, convergence and
//!   flip detection, and the replayable event log;
//! - [`experiments`]: scenario runners (bias probes, consensus ensembles,
//!   micro-dynamics tables, stability checks, critical-mass sweeps);
//! - [`llm`]: prompt construction, response parsing, transports, and the
//!   prompt-comprehension suite;
//! - [`stats`]: exact binomial and chi-square tests plus bootstrap resampling;
//! - [`seeds`]: the deterministic seed-derivation tree behind every RNG.

pub mod agents;
pub mod config;
pub mod engine;
pub mod events;
pub mod experiments;
pub mod llm;
pub mod seeds;
pub mod stats;
pub mod types;

pub use agents::{Decision, PolicyInstance};
pub use config::{
    CommittedSpec, ConfigError, FirstRound, Initialization, InteractionMode, PolicySpec,
    TrialConfig,
};
pub use engine::{
    detect_flip, run_ensemble, run_trial, FlipCriterion, FlipDetection, MetricSeries, RoundMetrics,
    RunLog, TrialStatus,
};
pub use events::{read_events_jsonl, write_events_jsonl, LlmExchange, RunEvent};
pub use types::{InteractionRecord, MemoryWindow, Name, NamePool, PayoffRule};

/// Version stamped into every serialized artifact (configs, event logs,
/// results, manifests).
pub const SCHEMA_VERSION: u32 = 1;
