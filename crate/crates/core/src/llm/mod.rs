//! Gateway between agents and a chat model: prompt construction, response
//! parsing, transports, and the retry-then-fallback policy that keeps a trial
//! alive when a reply cannot be parsed.

pub mod comprehension;
mod parse;
mod prompt;
mod transport;

pub use comprehension::{
    oracle_script, plan_comprehension, questions_for, run_comprehension_suite, score_answer,
    scrambled_script, ComprehensionQuestion, ComprehensionReport, GroundTruth, PlannedQuestion,
    QuestionCategory, QuestionGroup,
};
pub use parse::{parse_response, render_answer, ParseError};
pub use prompt::{build_prompt, PromptBundle, USER_PROMPT};
pub use transport::{
    write_transcript, ChatMessage, CompletionRequest, FnTransport, HttpTransport, MockTransport,
    ReplayTransport, ScriptedTransport, Transport, TransportError,
};

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::Decision;
use crate::events::LlmExchange;
use crate::types::{MemoryWindow, NamePool, PayoffRule};
use crate::types::presentation_order;

/// Decoding and prompt parameters for LLM-backed decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmParams {
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_k")]
    pub top_k: u32,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Re-queries (each with a fresh option shuffle) before the uniform
    /// fallback kicks in.
    #[serde(default = "default_max_parse_retries")]
    pub max_parse_retries: u32,
    /// Game length stated in the prompt; purely narrative.
    #[serde(default = "default_stated_rounds")]
    pub stated_rounds: u32,
}

fn default_temperature() -> f64 {
    0.5
}
fn default_top_k() -> u32 {
    10
}
fn default_max_tokens() -> u32 {
    6
}
fn default_max_parse_retries() -> u32 {
    3
}
fn default_stated_rounds() -> u32 {
    100
}

impl LlmParams {
    /// Defaults for `model`: temperature 0.5, top-k 10, max tokens 6, three
    /// parse retries, a 100-round narrative.
    pub fn for_model(model: impl Into<String>) -> Self {
        LlmParams {
            model: model.into(),
            temperature: default_temperature(),
            top_k: default_top_k(),
            max_tokens: default_max_tokens(),
            max_parse_retries: default_max_parse_retries(),
            stated_rounds: default_stated_rounds(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.model.is_empty() {
            return Err(GatewayError::Params("model must not be empty".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GatewayError::Params(format!(
                "temperature must be a finite non-negative number, got {}",
                self.temperature
            )));
        }
        if self.top_k == 0 {
            return Err(GatewayError::Params("top_k must be at least 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::Params("max_tokens must be at least 1".into()));
        }
        if self.stated_rounds == 0 {
            return Err(GatewayError::Params("stated_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// How to reach a model: live HTTP, a recorded transcript, or the offline
/// mock. Serialized inside the trial config so a run is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransportSpec {
    /// OpenAI-style chat-completions endpoint; the key is read from the
    /// named environment variable at run time, never stored.
    Live {
        endpoint: String,
        #[serde(default = "default_api_key_env")]
        api_key_env: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        requests_per_minute: Option<u32>,
    },
    /// Recorded transcript; `{trial}` in the path expands to the trial index,
    /// so ensembles can replay per-trial transcripts.
    Replay { path: String },
    /// Uniform random answers parsed out of the prompt's option list.
    Mock,
}

fn default_api_key_env() -> String {
    "NAMEGAME_API_KEY".into()
}

impl TransportSpec {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self {
            TransportSpec::Live { endpoint, .. } if endpoint.is_empty() => Err(
                GatewayError::Params("live transport requires a non-empty endpoint".into()),
            ),
            TransportSpec::Replay { path } if path.is_empty() => Err(GatewayError::Params(
                "replay transport requires a transcript path".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Instantiates the transport a trial will use. Mock transports are seeded
/// from the trial so ensembles stay independent and reproducible.
pub fn build_transport(
    spec: &TransportSpec,
    trial_index: u64,
    trial_seed: u64,
) -> Result<Arc<dyn Transport>, GatewayError> {
    match spec {
        TransportSpec::Live {
            endpoint,
            api_key_env,
            requests_per_minute,
        } => Ok(Arc::new(HttpTransport::new(
            endpoint,
            api_key_env,
            *requests_per_minute,
        )?)),
        TransportSpec::Replay { path } => {
            let resolved = path.replace("{trial}", &trial_index.to_string());
            Ok(Arc::new(ReplayTransport::from_path(std::path::Path::new(
                &resolved,
            ))?))
        }
        TransportSpec::Mock => Ok(Arc::new(MockTransport::new(trial_seed))),
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("invalid llm parameters: {0}")]
    Params(String),
    #[error("comprehension replay needs both actions per interaction; this log only records speaker utterances")]
    UnsupportedLog,
    #[error("agent {agent} is outside the log's population of {population}")]
    AgentOutOfRange { agent: u32, population: usize },
    #[error(transparent)]
    Domain(#[from] crate::types::DomainError),
}

/// One agent's line to the model: parameters plus a transport. Shared by all
/// LLM agents of a trial.
pub struct LlmSession {
    pub params: LlmParams,
    pub transport: Arc<dyn Transport>,
}

impl LlmSession {
    pub fn new(params: LlmParams, transport: Arc<dyn Transport>) -> Self {
        LlmSession { params, transport }
    }

    /// One decision. Each attempt renders the prompt with a fresh shuffle of
    /// the pool, sends it, and tries to parse the reply. Parse failures are
    /// retried up to the configured budget, then the decision falls back to
    /// a uniform draw and is flagged; transport failures propagate so the
    /// trial can abort with its log intact.
    pub fn choose<R: Rng + ?Sized>(
        &self,
        memory: &MemoryWindow,
        pool: &NamePool,
        payoffs: &PayoffRule,
        rng: &mut R,
    ) -> Result<Decision, GatewayError> {
        let mut exchanges = Vec::new();
        let mut last_presented = None;
        let attempts = 1 + self.params.max_parse_retries;
        for attempt in 0..attempts {
            let presented = presentation_order(pool, rng);
            let bundle = build_prompt(payoffs, &presented, memory, self.params.stated_rounds);
            last_presented = Some(presented);
            let request = CompletionRequest::new(&self.params, &bundle);
            let response = self.transport.complete(&request)?;
            exchanges.push(LlmExchange {
                request_sha256: request.sha256_hex(),
                response: response.clone(),
            });
            if let Ok(name) = parse_response(&response, pool) {
                return Ok(Decision {
                    name,
                    presented: last_presented,
                    exchanges,
                    retries: attempt,
                    fallback: false,
                });
            }
        }
        let name = pool
            .names()
            .choose(rng)
            .expect("pools are non-empty")
            .clone();
        Ok(Decision {
            name,
            presented: last_presented,
            exchanges,
            retries: self.params.max_parse_retries,
            fallback: true,
        })
    }
}
