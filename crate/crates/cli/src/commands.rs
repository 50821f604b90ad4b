//! Subcommand implementations. Each one loads its inputs, runs the
//! corresponding experiment from the core library inside a fresh run
//! directory, writes `result.json` / `metrics.csv` / event streams as
//! appropriate, and finishes the manifest even when trials abort.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use namegame::experiments::{
    build_microdynamics_table, probe_first_round_bias, run_stability, sweep_committed_minority,
    ConsensusDistribution, CriticalMassResult, FlipRequirement, MicrodynamicsSettings,
    MicrodynamicsTable, StabilityReport, SweepSettings,
};
use namegame::llm::{
    build_transport, oracle_script, plan_comprehension, run_comprehension_suite, scrambled_script,
    ComprehensionReport, LlmParams, MockTransport, QuestionCategory, QuestionGroup,
    ScriptedTransport, Transport, TransportSpec,
};
use namegame::stats::{self, BootstrapConfig};
use namegame::{
    run_ensemble, seeds, write_events_jsonl, FlipCriterion, Name, PolicySpec, RunLog, TrialConfig,
    TrialStatus,
};

use crate::error::CliError;
use crate::figures::{self, TrialSummary};
use crate::manifest::RunDir;
use crate::{FigureKind, ResponderArg, StatsCommand, TransportArg};

/// Global options shared by every subcommand.
pub struct Ctx {
    pub out_root: PathBuf,
    pub config_path: Option<PathBuf>,
    pub master_seed: u64,
    pub runs: Option<u64>,
    pub transport: Option<TransportArg>,
}

/// How a run-directory body ended: the manifest status to record, plus the
/// error to surface after the manifest is safely on disk.
struct RunOutcome {
    status: &'static str,
    error: Option<CliError>,
}

impl RunOutcome {
    fn ok() -> Self {
        RunOutcome {
            status: "ok",
            error: None,
        }
    }

    fn aborted(error: CliError) -> Self {
        RunOutcome {
            status: "aborted",
            error: Some(error),
        }
    }
}

/// Runs `body` inside a new run directory and always finishes the manifest:
/// with the body's status on success, with `failed: <reason>` otherwise.
fn with_run_dir(
    ctx: &Ctx,
    experiment: &str,
    config: Option<serde_json::Value>,
    body: impl FnOnce(&mut RunDir) -> Result<RunOutcome, CliError>,
) -> Result<(), CliError> {
    let mut dir = RunDir::create(&ctx.out_root, experiment, ctx.master_seed, config)?;
    match body(&mut dir) {
        Ok(outcome) => {
            let path = dir.finish(outcome.status)?;
            println!("run dir: {}", path.display());
            match outcome.error {
                None => Ok(()),
                Some(error) => Err(error),
            }
        }
        Err(error) => {
            let _ = dir.finish(&format!("failed: {}", error.message()));
            Err(error)
        }
    }
}

fn load_config(ctx: &Ctx) -> Result<TrialConfig, CliError> {
    let path = ctx.config_path.as_deref().ok_or_else(|| {
        CliError::Config("this subcommand needs --config <trial config JSON>".into())
    })?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut config: TrialConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {} does not parse: {e}", path.display())))?;
    apply_transport_override(&mut config, ctx.transport)?;
    config
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

fn transport_label(spec: &TransportSpec) -> &'static str {
    match spec {
        TransportSpec::Live { .. } => "live",
        TransportSpec::Replay { .. } => "replay",
        TransportSpec::Mock => "mock",
    }
}

/// `--transport mock` swaps any LLM transport out for the offline mock;
/// `live` and `replay` only assert the config already carries the matching
/// connection details, since the flag cannot supply them.
fn override_spec(spec: &mut TransportSpec, wanted: TransportArg) -> Result<(), CliError> {
    match wanted {
        TransportArg::Mock => *spec = TransportSpec::Mock,
        TransportArg::Live if !matches!(spec, TransportSpec::Live { .. }) => {
            return Err(CliError::Config(format!(
                "--transport live needs endpoint details, but the config specifies a {} transport",
                transport_label(spec)
            )));
        }
        TransportArg::Replay if !matches!(spec, TransportSpec::Replay { .. }) => {
            return Err(CliError::Config(format!(
                "--transport replay needs a transcript path, but the config specifies a {} transport",
                transport_label(spec)
            )));
        }
        _ => {}
    }
    Ok(())
}

fn apply_transport_override(
    config: &mut TrialConfig,
    wanted: Option<TransportArg>,
) -> Result<(), CliError> {
    let Some(wanted) = wanted else {
        return Ok(());
    };
    let mut touched = false;
    if let PolicySpec::Llm { transport, .. } = &mut config.policy {
        override_spec(transport, wanted)?;
        touched = true;
    }
    for policy in config.overrides.values_mut() {
        if let PolicySpec::Llm { transport, .. } = policy {
            override_spec(transport, wanted)?;
            touched = true;
        }
    }
    if touched {
        Ok(())
    } else {
        Err(CliError::Config(
            "--transport only applies to LLM policies, and this config has none".into(),
        ))
    }
}

fn snapshot<T: Serialize>(value: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(value).map_err(|e| CliError::Failure(format!("snapshot failed: {e}")))
}

fn parse_name(text: &str) -> Result<Name, CliError> {
    Name::new(text).map_err(|e| CliError::Config(e.to_string()))
}

fn events_file(trial: u64) -> String {
    format!("events-{trial:04}.jsonl")
}

fn write_event_streams(dir: &mut RunDir, logs: &[RunLog]) -> Result<(), CliError> {
    for log in logs {
        let mut buffer = Vec::new();
        write_events_jsonl(&mut buffer, &log.events)?;
        dir.write_bytes(&events_file(log.trial), &buffer)?;
    }
    Ok(())
}

fn trial_summaries(logs: &[RunLog]) -> Vec<TrialSummary> {
    logs.iter()
        .map(|log| TrialSummary {
            trial: log.trial,
            status: log.status.clone(),
            rounds_run: log.rounds_run,
            final_success_rate: log.metrics.rounds.last().map(|r| r.success_rate),
            log_sha256: log.content_hash(),
            events: events_file(log.trial),
        })
        .collect()
}

fn metrics_csv(logs: &[RunLog]) -> Result<Vec<u8>, CliError> {
    figures::csv_bytes(|writer| {
        writer.write_record([
            "trial",
            "round",
            "interactions",
            "successes",
            "success_rate",
            "modal_name",
            "modal_count",
            "distinct_names",
        ])?;
        for log in logs {
            for round in &log.metrics.rounds {
                writer.write_record([
                    log.trial.to_string(),
                    round.round.to_string(),
                    round.interactions.to_string(),
                    round.successes.to_string(),
                    format!("{}", round.success_rate),
                    round
                        .modal_name
                        .as_ref()
                        .map(|n| n.as_str().to_owned())
                        .unwrap_or_default(),
                    round.modal_count.to_string(),
                    round.distinct_names.to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// simulate

pub fn simulate(ctx: &Ctx) -> Result<(), CliError> {
    let config = load_config(ctx)?;
    let runs = ctx.runs.unwrap_or(1);
    if runs == 0 {
        return Err(CliError::Config("--runs must be at least 1".into()));
    }
    with_run_dir(ctx, "simulate", Some(snapshot(&config)?), |dir| {
        let started = Instant::now();
        let logs = run_ensemble(&config, ctx.master_seed, runs)?;
        let elapsed = started.elapsed();
        write_event_streams(dir, &logs)?;
        dir.write_bytes("metrics.csv", &metrics_csv(&logs)?)?;
        dir.write_json("result.json", &trial_summaries(&logs))?;
        let aborted: Vec<u64> = logs
            .iter()
            .filter(|l| matches!(l.status, TrialStatus::Aborted { .. }))
            .map(|l| l.trial)
            .collect();
        let converged = logs
            .iter()
            .filter(|l| matches!(l.status, TrialStatus::Converged { .. }))
            .count();
        println!(
            "simulate: {} trials, {} converged, {} aborted in {:.2?}",
            logs.len(),
            converged,
            aborted.len(),
            elapsed
        );
        if aborted.is_empty() {
            Ok(RunOutcome::ok())
        } else {
            Ok(RunOutcome::aborted(CliError::Aborted(format!(
                "{} of {} trials aborted (first: trial {})",
                aborted.len(),
                logs.len(),
                aborted[0]
            ))))
        }
    })
}

// ---------------------------------------------------------------------------
// probe-bias

pub fn probe_bias(ctx: &Ctx) -> Result<(), CliError> {
    let config = load_config(ctx)?;
    let draws = ctx.runs.unwrap_or(10_000);
    with_run_dir(ctx, "probe-bias", Some(snapshot(&config)?), |dir| {
        let result = probe_first_round_bias(
            &config.policy,
            &config.pool,
            &config.payoffs,
            draws,
            ctx.master_seed,
        )?;
        dir.write_json("result.json", &result)?;
        let csv = figures::csv_bytes(|writer| {
            writer.write_record(["name", "count", "share"])?;
            for (name, count) in &result.counts {
                writer.write_record([
                    name.clone(),
                    count.to_string(),
                    format!("{}", *count as f64 / result.draws as f64),
                ])?;
            }
            Ok(())
        })?;
        dir.write_bytes("metrics.csv", &csv)?;
        println!(
            "probe-bias: {} first-round draws, {} p = {}",
            result.draws, result.test.test, result.test.p_value
        );
        Ok(RunOutcome::ok())
    })
}

// ---------------------------------------------------------------------------
// microdynamics

pub fn microdynamics(ctx: &Ctx, designated: Option<String>) -> Result<(), CliError> {
    let config = load_config(ctx)?;
    let samples = ctx.runs.unwrap_or(10_000);
    let designated = match designated {
        Some(text) => parse_name(&text)?,
        None => config.pool.names()[0].clone(),
    };
    let mut settings = MicrodynamicsSettings::new(designated, samples);
    settings.memory_capacity = config.memory_capacity;
    with_run_dir(ctx, "microdynamics", Some(snapshot(&config)?), |dir| {
        let table = build_microdynamics_table(
            &config.policy,
            &config.pool,
            &config.payoffs,
            &settings,
            ctx.master_seed,
        )?;
        dir.write_json("result.json", &table)?;
        dir.write_bytes("metrics.csv", &micro_csv(&table)?)?;
        for aggregate in &table.aggregates {
            println!(
                "interaction {}: p({}) = {:.4} over {} productions (binomial p = {:.4})",
                aggregate.interaction,
                table.designated,
                aggregate.probability,
                aggregate.total,
                aggregate.binom_p
            );
        }
        Ok(RunOutcome::ok())
    })
}

fn opt_float(value: Option<f64>) -> String {
    value.map(|v| format!("{v}")).unwrap_or_default()
}

fn micro_csv(table: &MicrodynamicsTable) -> Result<Vec<u8>, CliError> {
    figures::csv_bytes(|writer| {
        writer.write_record([
            "kind",
            "interaction",
            "label",
            "occurrences",
            "designated_count",
            "production_probability",
            "binom_p",
            "bootstrap_p",
        ])?;
        for row in &table.rows {
            writer.write_record([
                "config".to_owned(),
                row.interaction.to_string(),
                row.label.clone(),
                row.occurrences.to_string(),
                row.designated_count.to_string(),
                opt_float(row.production_probability),
                opt_float(row.binom_p),
                opt_float(row.bootstrap_p),
            ])?;
        }
        for aggregate in &table.aggregates {
            writer.write_record([
                "aggregate".to_owned(),
                aggregate.interaction.to_string(),
                String::new(),
                aggregate.total.to_string(),
                aggregate.designated_count.to_string(),
                format!("{}", aggregate.probability),
                format!("{}", aggregate.binom_p),
                String::new(),
            ])?;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// stability

#[derive(Serialize)]
struct StabilityRow {
    trial: u64,
    log_sha256: String,
    #[serde(flatten)]
    report: StabilityReport,
}

pub fn stability(ctx: &Ctx) -> Result<(), CliError> {
    let config = load_config(ctx)?;
    let runs = ctx.runs.unwrap_or(1);
    if runs == 0 {
        return Err(CliError::Config("--runs must be at least 1".into()));
    }
    with_run_dir(ctx, "stability", Some(snapshot(&config)?), |dir| {
        let mut rows = Vec::new();
        let mut logs = Vec::new();
        for trial in 0..runs {
            let (report, log) = run_stability(&config, ctx.master_seed, trial)?;
            rows.push(StabilityRow {
                trial,
                log_sha256: log.content_hash(),
                report,
            });
            logs.push(log);
        }
        write_event_streams(dir, &logs)?;
        dir.write_json("result.json", &rows)?;
        let csv = figures::csv_bytes(|writer| {
            writer.write_record(["trial", "round", "production_probability"])?;
            for row in &rows {
                for (index, p) in row.report.production_probability.iter().enumerate() {
                    writer.write_record([
                        row.trial.to_string(),
                        (index + 1).to_string(),
                        format!("{p}"),
                    ])?;
                }
            }
            Ok(())
        })?;
        dir.write_bytes("metrics.csv", &csv)?;
        let stable = rows.iter().filter(|r| r.report.always_stable).count();
        println!(
            "stability: {stable}/{runs} runs held the {} consensus in every round",
            rows[0].report.name
        );
        Ok(RunOutcome::ok())
    })
}

// ---------------------------------------------------------------------------
// sweep-cm

pub struct SweepArgs {
    pub majority: Option<String>,
    pub minority: Option<String>,
    pub c_min: usize,
    pub c_max: Option<usize>,
    pub require_fraction: Option<f64>,
    pub scan_all: bool,
    pub horizon: Option<u32>,
}

pub fn sweep_cm(ctx: &Ctx, args: SweepArgs) -> Result<(), CliError> {
    let config = load_config(ctx)?;
    let seeds_per_c = ctx.runs.unwrap_or(10);
    let names = config.pool.names();
    let majority = match &args.majority {
        Some(text) => parse_name(text)?,
        None => names[0].clone(),
    };
    let minority = match &args.minority {
        Some(text) => parse_name(text)?,
        None => names
            .get(1)
            .cloned()
            .ok_or_else(|| CliError::Config("--minority is required for this pool".into()))?,
    };
    let c_max = args.c_max.unwrap_or(config.population);
    if c_max < args.c_min {
        return Err(CliError::Config(format!(
            "--c-max {} is below --c-min {}",
            c_max, args.c_min
        )));
    }
    let mut settings = SweepSettings::new((args.c_min..=c_max).collect(), seeds_per_c);
    if let Some(fraction) = args.require_fraction {
        settings.requirement = FlipRequirement::Fraction { fraction };
    }
    settings.stop_at_first = !args.scan_all;
    if let Some(horizon_rounds) = args.horizon {
        let mut criterion = FlipCriterion::for_population(config.population);
        criterion.horizon_rounds = horizon_rounds;
        settings.criterion = Some(criterion);
    }
    with_run_dir(ctx, "sweep-cm", Some(snapshot(&config)?), |dir| {
        let result =
            sweep_committed_minority(&config, &majority, &minority, &settings, ctx.master_seed)?;
        dir.write_json("result.json", &result)?;
        dir.write_bytes("metrics.csv", &figures::critical_mass_csv(&result)?)?;
        match result.critical_mass {
            Some(c) => println!(
                "sweep-cm: critical mass {c} of {} agents flips {} to {}",
                config.population, result.majority, result.minority
            ),
            None => println!(
                "sweep-cm: no size in {}..={c_max} flipped the population",
                args.c_min
            ),
        }
        Ok(RunOutcome::ok())
    })
}

// ---------------------------------------------------------------------------
// metaprompt

pub struct MetapromptArgs {
    pub run_dir: PathBuf,
    pub trial: u64,
    pub agent: u32,
    pub responder: Option<ResponderArg>,
}

#[derive(Serialize)]
struct MetapromptResult {
    trial: u64,
    questions: u64,
    overall: f64,
    #[serde(flatten)]
    report: ComprehensionReport,
}

pub fn metaprompt(ctx: &Ctx, args: MetapromptArgs) -> Result<(), CliError> {
    let loaded = figures::load_run_dir(&args.run_dir)?;
    let log = loaded
        .logs
        .iter()
        .find(|l| l.trial == args.trial)
        .ok_or_else(|| {
            CliError::Config(format!(
                "{} holds no trial {}",
                args.run_dir.display(),
                args.trial
            ))
        })?;
    let params = match &log.config.policy {
        PolicySpec::Llm { params, .. } => params.clone(),
        _ => LlmParams::for_model("offline"),
    };
    let plan = plan_comprehension(log, args.agent, log.config.memory_capacity, &params)?;
    let transport: Arc<dyn Transport> = match args.responder {
        Some(ResponderArg::Oracle) => Arc::new(ScriptedTransport::new(oracle_script(&plan))),
        Some(ResponderArg::Scrambled) => Arc::new(ScriptedTransport::new(scrambled_script(
            &plan,
            &log.config.pool,
        ))),
        None => {
            let question_seed = seeds::derive(ctx.master_seed, &[seeds::tag::QUESTION]);
            match ctx.transport {
                None | Some(TransportArg::Mock) => Arc::new(MockTransport::new(question_seed)),
                Some(wanted) => {
                    let PolicySpec::Llm { transport, .. } = &log.config.policy else {
                        return Err(CliError::Config(
                            "--transport live/replay needs an LLM config with connection details"
                                .into(),
                        ));
                    };
                    let mut spec = transport.clone();
                    override_spec(&mut spec, wanted)?;
                    build_transport(&spec, args.trial, question_seed)?
                }
            }
        }
    };
    let source = json!({
        "source": args.run_dir.display().to_string(),
        "trial": args.trial,
        "agent": args.agent,
    });
    with_run_dir(ctx, "metaprompt", Some(source), |dir| {
        let report =
            run_comprehension_suite(log, args.agent, log.config.memory_capacity, &params, transport.as_ref())?;
        dir.write_json(
            "result.json",
            &MetapromptResult {
                trial: args.trial,
                questions: plan.len() as u64,
                overall: report.overall(),
                report: report.clone(),
            },
        )?;
        dir.write_bytes("metrics.csv", &comprehension_csv(&report)?)?;
        println!(
            "metaprompt: agent {} over {} interactions, overall accuracy {:.3}",
            report.agent,
            report.interactions,
            report.overall()
        );
        for group in [QuestionGroup::Rules, QuestionGroup::Time, QuestionGroup::State] {
            println!("  {}: {:.3}", group.label(), report.group_accuracy(group));
        }
        Ok(RunOutcome::ok())
    })
}

fn comprehension_csv(report: &ComprehensionReport) -> Result<Vec<u8>, CliError> {
    figures::csv_bytes(|writer| {
        writer.write_record(["category", "group", "asked", "correct", "accuracy"])?;
        for category in QuestionCategory::ALL {
            if let Some(scores) = report.per_category.get(category.label()) {
                writer.write_record([
                    category.label().to_owned(),
                    category.group().label().to_owned(),
                    scores.asked.to_string(),
                    scores.correct.to_string(),
                    format!("{}", scores.accuracy()),
                ])?;
            }
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// stats

pub fn stats_test(ctx: &Ctx, command: StatsCommand) -> Result<(), CliError> {
    let (arguments, result) = match command {
        StatsCommand::Binom {
            successes,
            trials,
            input,
            column,
            null_p,
        } => {
            let (k, n) = match (successes, trials, &input) {
                (Some(k), Some(n), None) => (k, n),
                (None, None, Some(path)) => {
                    let column = column.as_deref().ok_or_else(|| {
                        CliError::Config("--input needs --column to pick the data".into())
                    })?;
                    let flags = read_bool_column(path, column)?;
                    (
                        flags.iter().filter(|&&b| b).count() as u64,
                        flags.len() as u64,
                    )
                }
                _ => {
                    return Err(CliError::Config(
                        "give either --successes with --trials, or --input with --column".into(),
                    ))
                }
            };
            (
                json!({"test": "binom", "k": k, "n": n, "null_p": null_p}),
                stats::binom_exact_two_tailed(k, n, null_p)?,
            )
        }
        StatsCommand::Chi2 {
            input,
            column,
            expected,
        } => {
            let counts = read_u64_column(&input, &column)?;
            let result = match &expected {
                None => stats::chi2_gof_uniform(&counts)?,
                Some(expected_column) => {
                    let expected_counts = read_f64_column(&input, expected_column)?;
                    stats::chi2_gof(&counts, &expected_counts)?
                }
            };
            (
                json!({
                    "test": "chi2",
                    "input": input.display().to_string(),
                    "column": column,
                    "expected": expected,
                }),
                result,
            )
        }
        StatsCommand::Bootstrap {
            input,
            column,
            resamples,
            fraction,
            no_replacement,
        } => {
            let flags = read_bool_column(&input, &column)?;
            if flags.is_empty() {
                return Err(CliError::Config(format!(
                    "{} has no data rows",
                    input.display()
                )));
            }
            let observed = flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64;
            let bootstrap = BootstrapConfig {
                resamples,
                fraction,
                with_replacement: !no_replacement,
            };
            let mut rng = seeds::stream(ctx.master_seed, &[seeds::tag::BOOTSTRAP]);
            (
                json!({
                    "test": "bootstrap",
                    "input": input.display().to_string(),
                    "column": column,
                    "resamples": resamples,
                    "fraction": fraction,
                    "with_replacement": !no_replacement,
                }),
                stats::bootstrap_bias(&flags, observed, &bootstrap, &mut rng)?,
            )
        }
    };
    with_run_dir(ctx, "stats", Some(arguments), |dir| {
        dir.write_json("result.json", &result)?;
        println!(
            "{}: statistic {}, p = {} over n = {}  [null: {}]",
            result.test, result.statistic, result.p_value, result.n, result.null
        );
        Ok(RunOutcome::ok())
    })
}

fn read_column(path: &Path, column: &str) -> Result<Vec<String>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        .clone();
    let index = headers.iter().position(|h| h == column).ok_or_else(|| {
        CliError::Config(format!(
            "{} has no column {column:?} (found: {})",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(", ")
        ))
    })?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        values.push(record.get(index).unwrap_or_default().trim().to_owned());
    }
    Ok(values)
}

fn read_bool_column(path: &Path, column: &str) -> Result<Vec<bool>, CliError> {
    read_column(path, column)?
        .iter()
        .map(|text| match text.to_ascii_lowercase().as_str() {
            "1" | "true" | "t" | "yes" => Ok(true),
            "0" | "false" | "f" | "no" => Ok(false),
            other => Err(CliError::Config(format!(
                "column {column:?} holds {other:?}, expected a boolean"
            ))),
        })
        .collect()
}

fn read_u64_column(path: &Path, column: &str) -> Result<Vec<u64>, CliError> {
    read_column(path, column)?
        .iter()
        .map(|text| {
            text.parse::<u64>().map_err(|_| {
                CliError::Config(format!(
                    "column {column:?} holds {text:?}, expected a count"
                ))
            })
        })
        .collect()
}

fn read_f64_column(path: &Path, column: &str) -> Result<Vec<f64>, CliError> {
    read_column(path, column)?
        .iter()
        .map(|text| {
            text.parse::<f64>().map_err(|_| {
                CliError::Config(format!(
                    "column {column:?} holds {text:?}, expected a number"
                ))
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// export-figure

pub struct ExportArgs {
    pub run_dir: PathBuf,
    pub kind: FigureKind,
    pub name: Option<String>,
    pub trial: u64,
}

pub fn export_figure(ctx: &Ctx, args: ExportArgs) -> Result<(), CliError> {
    let (file_name, bytes, detail) = match args.kind {
        FigureKind::CriticalMass => {
            let path = args.run_dir.join("result.json");
            let text = fs::read_to_string(&path).map_err(|e| {
                CliError::Config(format!("cannot read {}: {e}", path.display()))
            })?;
            let result: CriticalMassResult = serde_json::from_str(&text).map_err(|e| {
                CliError::Config(format!("{} is not a sweep result: {e}", path.display()))
            })?;
            (
                "critical-mass.csv",
                figures::critical_mass_csv(&result)?,
                format!("{} sizes", result.outcomes.len()),
            )
        }
        _ => {
            let run = figures::load_run_dir(&args.run_dir)?;
            match args.kind {
                FigureKind::SuccessRate => (
                    "success-rate.csv",
                    figures::success_rate_csv(&run.logs)?,
                    format!("{} runs", run.logs.len()),
                ),
                FigureKind::NameBins => {
                    let log = run
                        .logs
                        .iter()
                        .find(|l| l.trial == args.trial)
                        .ok_or_else(|| {
                            CliError::Config(format!(
                                "{} holds no trial {}",
                                args.run_dir.display(),
                                args.trial
                            ))
                        })?;
                    (
                        "name-bins.csv",
                        figures::name_bins_csv(log)?,
                        format!("trial {}, {} bins", args.trial, log.metrics.rounds.len()),
                    )
                }
                FigureKind::Consensus => {
                    let pool = &run.logs[0].config.pool;
                    let distribution = ConsensusDistribution::from_logs(pool, &run.logs);
                    (
                        "consensus.csv",
                        figures::consensus_csv(&distribution)?,
                        format!(
                            "{} runs, {} converged",
                            distribution.runs,
                            distribution.converged()
                        ),
                    )
                }
                FigureKind::Production => {
                    let name = args.name.as_deref().ok_or_else(|| {
                        CliError::Config("--name picks the tracked name for this figure".into())
                    })?;
                    let name = parse_name(name)?;
                    (
                        "production.csv",
                        figures::production_csv(&run.logs, &name)?,
                        format!("{} runs, name {name}", run.logs.len()),
                    )
                }
                FigureKind::CriticalMass => unreachable!("handled above"),
            }
        }
    };
    let source = json!({
        "source": args.run_dir.display().to_string(),
        "figure": file_name,
    });
    with_run_dir(ctx, "export-figure", Some(source), |dir| {
        dir.write_bytes(file_name, &bytes)?;
        dir.write_json("result.json", &json!({"figure": file_name, "detail": detail}))?;
        println!("export-figure: wrote {file_name} ({detail})");
        Ok(RunOutcome::ok())
    })
}
