//! Loading finished run directories back into logs, and shaping them into
//! figure-ready CSVs: success-rate curves, per-round name bins, consensus
//! histograms, production-probability trajectories, and critical-mass bars.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use namegame::engine::MetricSeries;
use namegame::experiments::ConsensusDistribution;
use namegame::{read_events_jsonl, Name, RunLog, TrialStatus};

use crate::error::CliError;
use crate::manifest::read_manifest;

/// Per-trial record in a simulate run's `result.json`; carries the status
/// the loader needs to rebuild faithful logs from the event streams.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: u64,
    pub status: TrialStatus,
    pub rounds_run: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_success_rate: Option<f64>,
    /// Content hash of the full in-memory run log.
    pub log_sha256: String,
    /// Artifact holding the trial's event stream.
    pub events: String,
}

/// A run directory read back: logs rebuilt from its event streams and
/// per-trial summaries.
pub struct LoadedRun {
    pub logs: Vec<RunLog>,
}

/// Rebuilds the run logs of a simulate-style run directory. Rejects
/// directories written under a different event schema, so figures never mix
/// incompatible logs.
pub fn load_run_dir(run_dir: &Path) -> Result<LoadedRun, CliError> {
    let manifest = read_manifest(run_dir).map_err(|e| {
        CliError::Config(format!(
            "{} is not a run directory (no readable manifest.json: {e})",
            run_dir.display()
        ))
    })?;
    if manifest.schema_version != namegame::SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "run {} was written with event schema {}, this build reads schema {}",
            run_dir.display(),
            manifest.schema_version,
            namegame::SCHEMA_VERSION
        )));
    }
    let config_value = manifest.config.clone().ok_or_else(|| {
        CliError::Config(format!(
            "manifest in {} has no config snapshot",
            run_dir.display()
        ))
    })?;
    let config: namegame::TrialConfig = serde_json::from_value(config_value)
        .map_err(|e| CliError::Config(format!("config snapshot does not parse: {e}")))?;

    let summaries_text = fs::read_to_string(run_dir.join("result.json")).map_err(|e| {
        CliError::Config(format!(
            "{} has no readable result.json ({e}); only simulate runs export log figures",
            run_dir.display()
        ))
    })?;
    let summaries: Vec<TrialSummary> = serde_json::from_str(&summaries_text)
        .map_err(|e| CliError::Config(format!("result.json does not parse: {e}")))?;

    let mut logs = Vec::with_capacity(summaries.len());
    for summary in summaries {
        let events_path = run_dir.join(&summary.events);
        let file = File::open(&events_path).map_err(|e| {
            CliError::Failure(format!("cannot open {}: {e}", events_path.display()))
        })?;
        let events = read_events_jsonl(BufReader::new(file)).map_err(|e| {
            CliError::Failure(format!("cannot read {}: {e}", events_path.display()))
        })?;
        let metrics = MetricSeries::from_events(&events, config.interactions_per_round());
        logs.push(RunLog {
            schema_version: manifest.schema_version,
            trial: summary.trial,
            master_seed: manifest.master_seed,
            config: config.clone(),
            status: summary.status,
            rounds_run: summary.rounds_run,
            events,
            metrics,
        });
    }
    if logs.is_empty() {
        return Err(CliError::Config(format!(
            "{} holds no trials to export",
            run_dir.display()
        )));
    }
    Ok(LoadedRun { logs })
}

pub(crate) fn csv_bytes(
    build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
) -> Result<Vec<u8>, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    build(&mut writer).map_err(|e| CliError::Failure(format!("csv write failed: {e}")))?;
    writer
        .into_inner()
        .map_err(|e| CliError::Failure(format!("csv flush failed: {e}")))
}

fn float(value: f64) -> String {
    format!("{value}")
}

/// Per-round success rate: one row per round with the cross-run mean and one
/// column per run (blank once a run has stopped).
pub fn success_rate_csv(logs: &[RunLog]) -> Result<Vec<u8>, CliError> {
    per_round_csv(logs, "success_rate", |round| round.success_rate)
}

/// Per-round production probability of one name, same layout as the
/// success-rate export.
pub fn production_csv(logs: &[RunLog], name: &Name) -> Result<Vec<u8>, CliError> {
    per_round_csv(logs, &format!("p_{name}"), |round| {
        round.production_probability(name)
    })
}

fn per_round_csv(
    logs: &[RunLog],
    measure: &str,
    value: impl Fn(&namegame::RoundMetrics) -> f64,
) -> Result<Vec<u8>, CliError> {
    let max_rounds = logs.iter().map(|l| l.metrics.rounds.len()).max().unwrap_or(0);
    csv_bytes(|writer| {
        let mut header = vec!["round".to_owned(), format!("mean_{measure}")];
        header.extend(logs.iter().map(|l| format!("run_{}", l.trial)));
        writer.write_record(&header)?;
        for index in 0..max_rounds {
            let mut row = vec![(index + 1).to_string()];
            let values: Vec<Option<f64>> = logs
                .iter()
                .map(|l| l.metrics.rounds.get(index).map(&value))
                .collect();
            let live: Vec<f64> = values.iter().flatten().copied().collect();
            row.push(float(live.iter().sum::<f64>() / live.len() as f64));
            row.extend(values.iter().map(|v| v.map(float).unwrap_or_default()));
            writer.write_record(&row)?;
        }
        Ok(())
    })
}

/// Production counts per name for every round of one run. A round bins the
/// trailing N interactions, so each row sums to the productions per round
/// (2N in simultaneous mode, N in speaker–hearer mode).
pub fn name_bins_csv(log: &RunLog) -> Result<Vec<u8>, CliError> {
    let pool = &log.config.pool;
    csv_bytes(|writer| {
        let mut header = vec!["bin".to_owned()];
        header.extend(pool.names().iter().map(|n| n.as_str().to_owned()));
        writer.write_record(&header)?;
        for round in &log.metrics.rounds {
            let mut row = vec![round.round.to_string()];
            row.extend(pool.names().iter().map(|n| {
                round
                    .name_counts
                    .get(n.as_str())
                    .copied()
                    .unwrap_or(0)
                    .to_string()
            }));
            writer.write_record(&row)?;
        }
        Ok(())
    })
}

/// Winning-name histogram over an ensemble; a final `(none)` row counts the
/// runs that never converged, so the wins column always sums to the runs.
pub fn consensus_csv(distribution: &ConsensusDistribution) -> Result<Vec<u8>, CliError> {
    csv_bytes(|writer| {
        writer.write_record(["name", "wins"])?;
        for (name, wins) in &distribution.winners {
            writer.write_record([name.as_str(), &wins.to_string()])?;
        }
        if distribution.unconverged > 0 {
            writer.write_record(["(none)", &distribution.unconverged.to_string()])?;
        }
        Ok(())
    })
}

/// Flip outcomes per committed-minority size, straight from a sweep result.
pub fn critical_mass_csv(
    result: &namegame::experiments::CriticalMassResult,
) -> Result<Vec<u8>, CliError> {
    csv_bytes(|writer| {
        writer.write_record(["c", "flipped", "seeds", "fraction", "satisfied"])?;
        for outcome in &result.outcomes {
            writer.write_record([
                outcome.c.to_string(),
                outcome.flipped.to_string(),
                result.seeds.to_string(),
                float(outcome.flipped as f64 / result.seeds as f64),
                outcome.satisfied.to_string(),
            ])?;
        }
        Ok(())
    })
}
