//! CLI error taxonomy and its mapping onto exit codes: 0 success, 2 bad
//! configuration or arguments, 3 transport failures, 4 aborted trials,
//! 1 everything else. Errors are emitted as one JSON object on stderr.

use namegame::engine::EngineError;
use namegame::experiments::ExperimentError;
use namegame::llm::GatewayError;
use namegame::stats::StatsError;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or command-line input.
    Config(String),
    /// The model endpoint, transcript, or credentials failed.
    Transport(String),
    /// Trials started but aborted; artifacts and manifest were still written.
    Aborted(String),
    /// Anything else: I/O, serialization, internal invariants.
    Failure(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Transport(_) => "transport",
            CliError::Aborted(_) => "aborted",
            CliError::Failure(_) => "failure",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Transport(_) => 3,
            CliError::Aborted(_) => 4,
            CliError::Failure(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Transport(m)
            | CliError::Aborted(m)
            | CliError::Failure(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Failure(err.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(err: StatsError) -> Self {
        CliError::Config(err.to_string())
    }
}

impl From<GatewayError> for CliError {
    fn from(err: GatewayError) -> Self {
        match err {
            GatewayError::Transport(e) => CliError::Transport(e.to_string()),
            GatewayError::Params(m) => CliError::Config(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(err: EngineError) -> Self {
        match err {
            EngineError::Config(e) => CliError::Config(e.to_string()),
            EngineError::Gateway(e) => e.into(),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(err: ExperimentError) -> Self {
        match err {
            ExperimentError::Config(e) => CliError::Config(e.to_string()),
            ExperimentError::Engine(e) => e.into(),
            ExperimentError::Gateway(e) => e.into(),
            ExperimentError::Stats(e) => CliError::Failure(e.to_string()),
            ExperimentError::Policy(e) => CliError::Config(e.to_string()),
            ExperimentError::Flip(e) => CliError::Failure(e.to_string()),
            ExperimentError::Domain(e) => CliError::Config(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
