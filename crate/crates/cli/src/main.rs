//! `namegame` — operator surface of the naming-game simulator.
//!
//! Subcommands cover the whole experiment lifecycle: `simulate` runs seeded
//! trial ensembles, `probe-bias` / `microdynamics` / `stability` / `sweep-cm`
//! run the focused experiments, `metaprompt` replays a recorded game as a
//! comprehension quiz, `stats` exposes the hypothesis tests for standalone
//! CSV data, and `export-figure` reshapes finished runs into figure-ready
//! CSVs. Every run lands in `out/<experiment>/<timestamp>/` with a manifest
//! listing each artifact's SHA-256.
//!
//! Exit codes: 0 success, 2 bad config or arguments, 3 transport failures,
//! 4 aborted trials. Errors are emitted as one JSON object on stderr.

mod commands;
mod error;
mod figures;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use commands::{Ctx, ExportArgs, MetapromptArgs, SweepArgs};

#[derive(Parser)]
#[command(
    name = "namegame",
    version,
    about = "Naming-game simulator and experiment runner"
)]
struct Cli {
    /// Trial configuration file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; every random draw derives from it. Omitted, a fresh seed
    /// is drawn and recorded in the manifest.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Directory run outputs go under.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Trials, draws, or seeds per sweep size, depending on the subcommand.
    #[arg(long, global = true, value_name = "K")]
    runs: Option<u64>,
    /// Force the transport of every LLM policy in the config.
    #[arg(long, global = true, value_enum, value_name = "KIND")]
    transport: Option<TransportArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TransportArg {
    Live,
    Replay,
    Mock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ResponderArg {
    /// Scripted responder that always answers with the ground truth.
    Oracle,
    /// Scripted responder that always answers wrongly.
    Scrambled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FigureKind {
    /// Per-round success rate, mean plus one column per run.
    SuccessRate,
    /// Per-round production counts per name for one run.
    NameBins,
    /// Winning-name histogram over an ensemble.
    Consensus,
    /// Per-round production probability of one name.
    Production,
    /// Flip fraction per committed-minority size from a sweep.
    CriticalMass,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble of trials from a config.
    Simulate,
    /// Estimate the configured policy's first-round production distribution
    /// and test it against the unbiased null.
    ProbeBias,
    /// Tabulate early-interaction production per memory configuration.
    Microdynamics {
        /// Name whose production probability the table reports; defaults to
        /// the first pool name.
        #[arg(long, value_name = "NAME")]
        designated: Option<String>,
    },
    /// Check whether an established consensus survives unperturbed runs.
    Stability,
    /// Sweep committed-minority sizes for the smallest one that flips an
    /// established consensus.
    SweepCm {
        /// Name the population starts agreed on; defaults to the first pool
        /// name.
        #[arg(long, value_name = "NAME")]
        majority: Option<String>,
        /// Name the committed agents push; defaults to the second pool name.
        #[arg(long, value_name = "NAME")]
        minority: Option<String>,
        /// Smallest committed count to test.
        #[arg(long, default_value_t = 0, value_name = "C")]
        c_min: usize,
        /// Largest committed count to test; defaults to the population size.
        #[arg(long, value_name = "C")]
        c_max: Option<usize>,
        /// Count a size as flipping when at least this fraction of seeds
        /// flipped, instead of all of them.
        #[arg(long, value_name = "F")]
        require_fraction: Option<f64>,
        /// Keep scanning past the first satisfying size.
        #[arg(long)]
        scan_all: bool,
        /// Rounds each trial gets to flip.
        #[arg(long, value_name = "ROUNDS")]
        horizon: Option<u32>,
    },
    /// Replay a recorded game and quiz one agent about rules, history, and
    /// state at every interaction it took part in.
    Metaprompt {
        /// A finished simulate run directory.
        run_dir: PathBuf,
        #[arg(long, default_value_t = 0, value_name = "T")]
        trial: u64,
        #[arg(long, default_value_t = 0, value_name = "A")]
        agent: u32,
        /// Answer the questions with a scripted responder instead of the
        /// transport.
        #[arg(long, value_enum)]
        responder: Option<ResponderArg>,
    },
    /// Hypothesis tests on CSV data or direct counts.
    Stats {
        #[command(subcommand)]
        test: StatsCommand,
    },
    /// Reshape a finished run directory into a figure-ready CSV.
    ExportFigure {
        /// A finished run directory (simulate, or sweep-cm for
        /// critical-mass).
        run_dir: PathBuf,
        #[arg(long, value_enum)]
        kind: FigureKind,
        /// Tracked name, for the production figure.
        #[arg(long, value_name = "NAME")]
        name: Option<String>,
        /// Trial to export, for the name-bins figure.
        #[arg(long, default_value_t = 0, value_name = "T")]
        trial: u64,
    },
}

#[derive(Subcommand)]
pub enum StatsCommand {
    /// Two-tailed exact binomial test.
    Binom {
        /// Observed success count.
        #[arg(long, value_name = "K")]
        successes: Option<u64>,
        /// Number of observations behind --successes.
        #[arg(long, value_name = "N")]
        trials: Option<u64>,
        /// CSV with a boolean column to count instead of --successes/--trials.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        /// Boolean column of --input to count.
        #[arg(long, value_name = "COLUMN")]
        column: Option<String>,
        /// Null success probability.
        #[arg(long, default_value_t = 0.5, value_name = "P")]
        null_p: f64,
    },
    /// Chi-square goodness of fit on a counts column; uniform unless an
    /// expected-counts column is named.
    Chi2 {
        /// CSV holding the observed counts.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Column of --input holding the counts.
        #[arg(long, default_value = "count", value_name = "COLUMN")]
        column: String,
        /// Column of expected counts; omitted, the null is uniform.
        #[arg(long, value_name = "COLUMN")]
        expected: Option<String>,
    },
    /// Bootstrap bias test on a boolean column.
    Bootstrap {
        /// CSV holding the boolean observations.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Boolean column of --input to resample.
        #[arg(long, default_value = "success", value_name = "COLUMN")]
        column: String,
        /// Number of bootstrap resamples.
        #[arg(long, default_value_t = 10_000, value_name = "R")]
        resamples: u32,
        /// Resample size as a fraction of the observations.
        #[arg(long, default_value_t = 0.7, value_name = "F")]
        fraction: f64,
        /// Resample without replacement.
        #[arg(long)]
        no_replacement: bool,
    },
}

/// Seed used when `--seed` is omitted; mixed from the clock and pid, and
/// recorded in the manifest so the run stays re-runnable.
fn entropy_seed() -> u64 {
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    (nanos as u64) ^ ((nanos >> 64) as u64).rotate_left(32) ^ u64::from(std::process::id()).rotate_left(48)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        out_root: cli.out,
        config_path: cli.config,
        master_seed: cli.seed.unwrap_or_else(entropy_seed),
        runs: cli.runs,
        transport: cli.transport,
    };
    let result = match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::ProbeBias => commands::probe_bias(&ctx),
        Command::Microdynamics { designated } => commands::microdynamics(&ctx, designated),
        Command::Stability => commands::stability(&ctx),
        Command::SweepCm {
            majority,
            minority,
            c_min,
            c_max,
            require_fraction,
            scan_all,
            horizon,
        } => commands::sweep_cm(
            &ctx,
            SweepArgs {
                majority,
                minority,
                c_min,
                c_max,
                require_fraction,
                scan_all,
                horizon,
            },
        ),
        Command::Metaprompt {
            run_dir,
            trial,
            agent,
            responder,
        } => commands::metaprompt(
            &ctx,
            MetapromptArgs {
                run_dir,
                trial,
                agent,
                responder,
            },
        ),
        Command::Stats { test } => commands::stats_test(&ctx, test),
        Command::ExportFigure {
            run_dir,
            kind,
            name,
            trial,
        } => commands::export_figure(
            &ctx,
            ExportArgs {
                run_dir,
                kind,
                name,
                trial,
            },
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!(
                "{}",
                json!({"error": {"kind": err.kind(), "message": err.message()}})
            );
            ExitCode::from(err.exit_code())
        }
    }
}
