//! The release gate: twelve end-to-end checks covering emergence, collective
//! neutrality, bias amplification, exact statistics, flip detection, critical
//! mass, stability, prompt fidelity, replay determinism, comprehension
//! scoring, and the micro-dynamics table. Run with `--nocapture` to see one
//! line per criterion; the test fails if any criterion fails, but every
//! criterion is always evaluated and reported.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use namegame::agents::{PolicyInstance, SurrogateParams};
use namegame::config::{FirstRound, Initialization, InteractionMode, PolicySpec, TrialConfig};
use namegame::engine::{
    detect_flip, run_ensemble, run_trial, run_trial_with_transport, FlipCriterion, RunLog,
    TrialStatus,
};
use namegame::events::{minimal_event, RunEvent};
use namegame::experiments::{
    build_microdynamics_table, consensus_distribution, run_stability, sweep_committed_minority,
    MicrodynamicsSettings, SweepSettings,
};
use namegame::llm::{
    build_prompt, oracle_script, parse_response, plan_comprehension, render_answer,
    run_comprehension_suite, scrambled_script, LlmParams, QuestionCategory, QuestionGroup,
    ReplayTransport, ScriptedTransport, TransportSpec, USER_PROMPT,
};
use namegame::seeds;
use namegame::stats;
use namegame::types::{InteractionRecord, MemoryWindow, Name, NamePool, PayoffRule};
use rand::seq::SliceRandom;
use rand::Rng;

type Check = fn() -> Result<String, String>;

#[test]
fn acceptance_criteria() {
    let checks: [(u32, &str, Check); 12] = [
        (1, "minimal-ng emergence", criterion_01),
        (2, "consensus-name uniformity", criterion_02),
        (3, "individual-bias amplification", criterion_03),
        (4, "exact binomial test", criterion_04),
        (5, "chi-square test", criterion_05),
        (6, "flip detection", criterion_06),
        (7, "critical-mass sweep", criterion_07),
        (8, "consensus stability", criterion_08),
        (9, "prompt fidelity", criterion_09),
        (10, "replay determinism", criterion_10),
        (11, "comprehension scoring", criterion_11),
        (12, "micro-dynamics table", criterion_12),
    ];
    let mut failures = Vec::new();
    for (number, name, check) in checks {
        match check() {
            Ok(detail) => println!("criterion {number:02} {name}: pass ({detail})"),
            Err(detail) => {
                println!("criterion {number:02} {name}: FAIL ({detail})");
                failures.push(format!("criterion {number:02} {name}: {detail}"));
            }
        }
    }
    assert!(
        failures.is_empty(),
        "{} acceptance criteria failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}

fn name(s: &str) -> Name {
    Name::new(s).unwrap()
}

fn pool(names: &[&str]) -> NamePool {
    NamePool::parse(names).unwrap()
}

fn pool10() -> NamePool {
    pool(&["A", "B", "C", "D", "E", "F", "G", "H", "I", "J"])
}

fn minimal_config(population: usize, pool: NamePool, rounds: u32) -> TrialConfig {
    TrialConfig {
        population,
        pool,
        payoffs: PayoffRule::default(),
        memory_capacity: 5,
        mode: InteractionMode::SpeakerHearer,
        policy: PolicySpec::Minimal,
        overrides: BTreeMap::new(),
        committed: None,
        initialization: Initialization::Empty,
        rounds,
        early_stop_rounds: Some(5),
    }
}

fn surrogate_config(population: usize, p_keep: f64, rounds: u32) -> TrialConfig {
    TrialConfig {
        population,
        pool: pool(&["Q", "M"]),
        payoffs: PayoffRule::default(),
        memory_capacity: 5,
        mode: InteractionMode::SimultaneousCoordination,
        policy: PolicySpec::Surrogate {
            p_keep,
            p_switch: 0.973,
            first_round: FirstRound::Uniform,
        },
        overrides: BTreeMap::new(),
        committed: None,
        initialization: Initialization::Empty,
        rounds,
        early_stop_rounds: None,
    }
}

fn converged_round(log: &RunLog) -> Option<u32> {
    match log.status {
        TrialStatus::Converged { round, .. } => Some(round),
        _ => None,
    }
}

/// 1. Fifty seeded minimal-NG populations (N=24, W=10) all reach and hold
///    full success within twice the longest convergence time observed in a
///    500-run pre-study, in under a minute of wall time.
fn criterion_01() -> Result<String, String> {
    let start = Instant::now();
    let mut config = minimal_config(24, pool10(), 5_000);
    let prestudy = run_ensemble(&config, 0xACC1_0001, 500).map_err(|e| e.to_string())?;
    let mut oracle_max = 0;
    for log in &prestudy {
        match converged_round(log) {
            Some(round) => oracle_max = oracle_max.max(round),
            None => return Err("a pre-study run exhausted its 5000-round budget".into()),
        }
    }
    let horizon = 2 * oracle_max;
    config.rounds = horizon;
    let runs = run_ensemble(&config, 0xACC1_0002, 50).map_err(|e| e.to_string())?;
    let converged = runs.iter().filter(|log| converged_round(log).is_some()).count();
    if converged != 50 {
        return Err(format!(
            "{converged}/50 runs converged within the {horizon}-round horizon"
        ));
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(60) {
        return Err(format!("took {elapsed:.1?}, budget is 1 minute"));
    }
    Ok(format!(
        "pre-study max {oracle_max} rounds, horizon {horizon}, 50/50 converged, {elapsed:.1?}"
    ))
}

/// 2. Winning names across 1,000 unbiased runs are uniform over the ten
///    candidates (chi-square goodness of fit not rejected at 1%), in under two
///    minutes.
fn criterion_02() -> Result<String, String> {
    let start = Instant::now();
    let config = minimal_config(24, pool10(), 2_000);
    let (distribution, _) =
        consensus_distribution(&config, 0xACC2_0001, 1_000).map_err(|e| e.to_string())?;
    if distribution.unconverged != 0 {
        return Err(format!("{} runs never converged", distribution.unconverged));
    }
    let test = distribution.uniformity_test().map_err(|e| e.to_string())?;
    if test.p_value < 0.01 {
        return Err(format!(
            "uniformity rejected: chi2 {:.2}, p {:.4}, counts {:?}",
            test.statistic, test.p_value, distribution.winners
        ));
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(120) {
        return Err(format!("took {elapsed:.1?}, budget is 2 minutes"));
    }
    Ok(format!(
        "chi2 {:.2}, p {:.3}, 1000/1000 converged, {elapsed:.1?}",
        test.statistic, test.p_value
    ))
}

/// Independent brute-force oracle for the biased minimal game: a from-scratch
/// lexicon simulation (no engine, no policy code) that reports how often the
/// designated name absorbs the population.
fn oracle_biased_wins(runs: u64, population: usize, bias: f64, seed: u64) -> u64 {
    use rand::SeedableRng;
    let world = 2usize;
    let designated = 0usize;
    let mut wins = 0;
    for run in 0..runs {
        let mut rng =
            rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (run.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let pick = |choices: &[usize], rng: &mut rand_chacha::ChaCha8Rng| -> usize {
            if choices.len() == 1 {
                return choices[0];
            }
            if choices.contains(&designated) {
                if rng.gen::<f64>() < bias {
                    designated
                } else {
                    let others: Vec<usize> =
                        choices.iter().copied().filter(|&c| c != designated).collect();
                    others[rng.gen_range(0..others.len())]
                }
            } else {
                choices[rng.gen_range(0..choices.len())]
            }
        };
        let mut lexicons: Vec<Vec<usize>> = vec![Vec::new(); population];
        let mut absorbed = None;
        'game: for _round in 0..5_000 {
            for _ in 0..population {
                let speaker = rng.gen_range(0..population);
                let mut hearer = rng.gen_range(0..population - 1);
                if hearer >= speaker {
                    hearer += 1;
                }
                let uttered = if lexicons[speaker].is_empty() {
                    let full: Vec<usize> = (0..world).collect();
                    let invented = pick(&full, &mut rng);
                    lexicons[speaker].push(invented);
                    invented
                } else {
                    let choices = lexicons[speaker].clone();
                    pick(&choices, &mut rng)
                };
                if lexicons[hearer].contains(&uttered) {
                    lexicons[speaker] = vec![uttered];
                    lexicons[hearer] = vec![uttered];
                } else {
                    lexicons[hearer].push(uttered);
                }
            }
            let first = &lexicons[0];
            if first.len() == 1 && lexicons.iter().all(|l| l == first) {
                absorbed = Some(first[0]);
                break 'game;
            }
        }
        if absorbed == Some(designated) {
            wins += 1;
        }
    }
    wins
}

/// 3. A per-agent bias toward one of two names is amplified collectively:
///    bias 1.0 wins every one of 200 runs, bias 0.6 wins at least 95% of 500
///    (a threshold the independent oracle reproduces), and mean convergence
///    time falls strictly as the bias grows.
fn criterion_03() -> Result<String, String> {
    let designated = name("Q");
    let biased = |bias: f64, rounds: u32| -> TrialConfig {
        let mut config = minimal_config(24, pool(&["Q", "M"]), rounds);
        config.policy = PolicySpec::BiasedMinimal {
            designated: designated.clone(),
            bias,
        };
        config
    };

    let (full, _) = consensus_distribution(&biased(1.0, 3_000), 0xACC3_0001, 200)
        .map_err(|e| e.to_string())?;
    if full.winners["Q"] != 200 || full.unconverged != 0 {
        return Err(format!(
            "bias 1.0 won {}/200 with {} unconverged",
            full.winners["Q"], full.unconverged
        ));
    }

    let (mild, _) = consensus_distribution(&biased(0.6, 3_000), 0xACC3_0002, 500)
        .map_err(|e| e.to_string())?;
    if mild.unconverged != 0 {
        return Err(format!("{} bias-0.6 runs never converged", mild.unconverged));
    }
    let mild_share = mild.winners["Q"] as f64 / 500.0;
    let oracle_wins = oracle_biased_wins(500, 24, 0.6, 0xACC3_0003);
    let oracle_share = oracle_wins as f64 / 500.0;
    if (mild_share - oracle_share).abs() > 0.05 {
        return Err(format!(
            "bias-0.6 win rates disagree: engine {:.1}%, independent brute force {:.1}%",
            100.0 * mild_share,
            100.0 * oracle_share
        ));
    }
    if mild_share < 0.95 {
        return Err(format!(
            "bias 0.6 won {:.1}% of 500 runs (independent brute force agrees at {:.1}%); \
             the 95% bar is not reachable at this population size",
            100.0 * mild_share,
            100.0 * oracle_share
        ));
    }

    let mut means = Vec::new();
    for (i, bias) in [0.5, 0.6, 0.8, 1.0].into_iter().enumerate() {
        let logs = run_ensemble(&biased(bias, 3_000), 0xACC3_0010 + i as u64, 300)
            .map_err(|e| e.to_string())?;
        let mut total = 0u64;
        for log in &logs {
            total += converged_round(log)
                .ok_or_else(|| format!("a bias-{bias} run never converged"))?
                as u64;
        }
        means.push(total as f64 / 300.0);
    }
    if !means.windows(2).all(|pair| pair[0] > pair[1]) {
        return Err(format!(
            "mean convergence rounds not strictly decreasing in bias: {means:?}"
        ));
    }
    Ok(format!(
        "bias 1.0: 200/200; bias 0.6: {:.1}% (oracle {:.1}%); mean rounds {:.1?}",
        100.0 * mild_share,
        100.0 * oracle_share,
        means
    ))
}

/// 4. The exact two-tailed binomial test reproduces independently computed
///    p-values.
fn criterion_04() -> Result<String, String> {
    let check = |k: u64, n: u64, p0: f64, expected: f64, tolerance: f64| -> Result<f64, String> {
        let got = stats::binom_exact_two_tailed(k, n, p0)
            .map_err(|e| e.to_string())?
            .p_value;
        if (got - expected).abs() > tolerance {
            return Err(format!(
                "binom({k}, {n}, {p0}) gave {got}, expected {expected} ± {tolerance}"
            ));
        }
        Ok(got)
    };
    // Independently computed references; the coarser windows mirror the
    // published two-decimal values.
    let a = check(5079, 10_000, 0.5, 0.116410652467557, 1e-9)?;
    check(5079, 10_000, 0.5, 0.116, 2e-3)?;
    let b = check(2435, 5_000, 0.5, 0.0680906707974391, 1e-9)?;
    check(2435, 5_000, 0.5, 0.068, 2e-3)?;
    let c = check(7, 10, 0.5, 0.34375, 0.0)?;
    Ok(format!("p-values {a:.6}, {b:.6}, {c:.5} all on target"))
}

/// 5. The chi-square goodness-of-fit test is exact on a perfect fit and
///    matches a high-precision survival-function reference.
fn criterion_05() -> Result<String, String> {
    let equal = stats::chi2_gof_uniform(&[25, 25, 25, 25]).map_err(|e| e.to_string())?;
    if equal.statistic != 0.0 || equal.p_value != 1.0 {
        return Err(format!(
            "equal counts gave chi2 {} with p {}, expected exactly 0 and 1",
            equal.statistic, equal.p_value
        ));
    }
    let survival = stats::chi2_survival(2.0, 9);
    let reference = 0.991_467_606_628_813_5;
    if (survival - reference).abs() > 1e-6 {
        return Err(format!(
            "chi2 survival(2.0, df 9) gave {survival}, reference {reference}"
        ));
    }
    Ok(format!(
        "perfect fit p = 1 exactly; survival(2.0, 9) within {:.1e} of reference",
        (survival - reference).abs()
    ))
}

/// 6. Flip detection on synthetic streams: a perfect 72-interaction window
///    on the challenger name flips, four failures in the window do not, and a
///    perfect window on the incumbent does not.
fn criterion_06() -> Result<String, String> {
    let criterion = FlipCriterion::for_population(24);
    let challenger = name("B");
    let incumbent = name("A");
    let stream = |produced: &Name, failures: &[u64]| -> Vec<RunEvent> {
        (1..=72)
            .map(|interaction| {
                let a = ((interaction - 1) % 24) as u32;
                let b = (a + 1) % 24;
                let mut event = minimal_event(0, interaction, a, b, produced.clone());
                event.success = !failures.contains(&interaction);
                event
            })
            .collect()
    };

    let perfect = stream(&challenger, &[]);
    let flipped = detect_flip(&perfect, &criterion, &challenger, 24).map_err(|e| e.to_string())?;
    let Some(detection) = flipped else {
        return Err("72/72 successes on the challenger did not flip".into());
    };
    if detection.interaction != 72 || detection.round != 3 {
        return Err(format!("flip surfaced at {detection:?}, expected interaction 72"));
    }

    let spotty = stream(&challenger, &[10, 20, 30, 40]);
    if detect_flip(&spotty, &criterion, &challenger, 24)
        .map_err(|e| e.to_string())?
        .is_some()
    {
        return Err("68/72 successes flipped despite the 95% threshold".into());
    }

    let incumbent_stream = stream(&incumbent, &[]);
    if detect_flip(&incumbent_stream, &criterion, &challenger, 24)
        .map_err(|e| e.to_string())?
        .is_some()
    {
        return Err("an all-success window on the incumbent flipped the challenger".into());
    }
    Ok("perfect challenger window flips at interaction 72; 68/72 and incumbent windows do not".into())
}

/// 7. The committed-minority sweep (N=24, W=2, 10 seeds per size) reports a
///    critical mass: zero committed agents never flip a perfectly loyal
///    population, a fully committed population always flips, and two disjoint
///    seed batches agree on the critical size to within one agent.
fn criterion_07() -> Result<String, String> {
    let majority = name("Q");
    let minority = name("M");

    let loyal = surrogate_config(24, 1.0, 30);
    let none = sweep_committed_minority(
        &loyal,
        &majority,
        &minority,
        &SweepSettings::new(vec![0], 10),
        0xACC7_0001,
    )
    .map_err(|e| e.to_string())?;
    if none.outcomes[0].flipped != 0 {
        return Err(format!(
            "{}/10 committed-free loyal runs flipped",
            none.outcomes[0].flipped
        ));
    }

    let base = surrogate_config(24, 0.994, 30);
    let everyone = sweep_committed_minority(
        &base,
        &majority,
        &minority,
        &SweepSettings::new(vec![24], 10),
        0xACC7_0002,
    )
    .map_err(|e| e.to_string())?;
    if everyone.outcomes[0].flipped != 10 {
        return Err(format!(
            "{}/10 fully committed runs flipped",
            everyone.outcomes[0].flipped
        ));
    }

    let settings = SweepSettings::new((0..=24).collect(), 10);
    let batch_a = sweep_committed_minority(&base, &majority, &minority, &settings, 0xACC7_0003)
        .map_err(|e| e.to_string())?;
    let batch_b = sweep_committed_minority(&base, &majority, &minority, &settings, 0xACC7_0004)
        .map_err(|e| e.to_string())?;
    let a = batch_a
        .critical_mass
        .ok_or("batch A found no critical mass up to c = 24")?;
    let b = batch_b
        .critical_mass
        .ok_or("batch B found no critical mass up to c = 24")?;
    if a.abs_diff(b) > 1 {
        return Err(format!("critical mass unstable across seed batches: {a} vs {b}"));
    }
    Ok(format!(
        "c=0 loyal never flips, c=24 always flips, critical mass {a} vs {b} across disjoint batches"
    ))
}

/// 8. An established consensus is absorbing for perfectly loyal agents:
///    surrogates with p_keep = 1 and minimal-NG singleton lexicons both keep
///    production probability 1.0 for 50 rounds, with zero exceptions.
fn criterion_08() -> Result<String, String> {
    let mut surrogate = surrogate_config(24, 1.0, 50);
    surrogate.initialization = Initialization::Consensus { name: name("Q") };
    for trial in 0..5 {
        let (report, _) =
            run_stability(&surrogate, 0xACC8_0001, trial).map_err(|e| e.to_string())?;
        if !report.always_stable || report.production_probability.len() != 50 {
            return Err(format!(
                "surrogate consensus broke in trial {trial}: {:?}",
                report.production_probability
            ));
        }
    }

    let mut minimal = minimal_config(24, pool10(), 50);
    minimal.early_stop_rounds = None;
    minimal.initialization = Initialization::Consensus { name: name("C") };
    for trial in 0..5 {
        let (report, _) =
            run_stability(&minimal, 0xACC8_0002, trial).map_err(|e| e.to_string())?;
        if !report.always_stable || report.production_probability.len() != 50 {
            return Err(format!(
                "minimal-NG consensus broke in trial {trial}: {:?}",
                report.production_probability
            ));
        }
    }
    Ok("10/10 consensus runs held production probability 1.0 for all 50 rounds".into())
}

/// 9. The rendered prompt for the recorded example scenario matches the
///    golden fixture byte for byte, and 100 randomized answers parse back to
///    the name they encode.
fn criterion_09() -> Result<String, String> {
    let rule = PayoffRule::default();
    let mut memory = MemoryWindow::new(5).map_err(|e| e.to_string())?;
    memory
        .push(InteractionRecord::from_exchange(1, name("F"), name("J"), &rule))
        .map_err(|e| e.to_string())?;
    let bundle = build_prompt(&rule, &[name("F"), name("J")], &memory, 100);
    let fixture = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/prompt_failed_round.txt");
    let golden = std::fs::read_to_string(&fixture).map_err(|e| e.to_string())?;
    if bundle.system != golden || bundle.user != USER_PROMPT {
        return Err("rendered prompt drifted from the golden fixture".into());
    }

    let mut rng = seeds::stream(0xACC9_0001, &[1]);
    const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_-";
    let mut mismatches = 0;
    for _ in 0..100 {
        let size = rng.gen_range(2..=12);
        let mut names: Vec<String> = Vec::new();
        while names.len() < size {
            let len = rng.gen_range(1..=8);
            let candidate: String = (0..len)
                .map(|_| *ALPHABET.choose(&mut rng).unwrap() as char)
                .collect();
            if !names.contains(&candidate) {
                names.push(candidate);
            }
        }
        let pool = NamePool::parse(&names.iter().map(String::as_str).collect::<Vec<_>>())
            .map_err(|e| e.to_string())?;
        let chosen = pool.names().choose(&mut rng).unwrap().clone();
        let rendered = render_answer(&chosen, "seeded reason");
        if parse_response(&rendered, &pool).ok() != Some(chosen) {
            mismatches += 1;
        }
    }
    if mismatches != 0 {
        return Err(format!("{mismatches}/100 round-trips mismatched"));
    }
    Ok("golden fixture byte-exact; 100/100 answer round-trips".into())
}

fn mock_llm_config(population: usize, rounds: u32) -> TrialConfig {
    TrialConfig {
        population,
        pool: pool(&["Q", "M"]),
        payoffs: PayoffRule::default(),
        memory_capacity: 5,
        mode: InteractionMode::SimultaneousCoordination,
        policy: PolicySpec::Llm {
            params: LlmParams::for_model("offline"),
            transport: TransportSpec::Mock,
        },
        overrides: BTreeMap::new(),
        committed: None,
        initialization: Initialization::Empty,
        rounds,
        early_stop_rounds: None,
    }
}

/// 10. Driving an LLM-backed trial twice from the same transcript and seed
///     yields bit-identical logs.
fn criterion_10() -> Result<String, String> {
    let config = mock_llm_config(4, 6);
    let original = run_trial(&config, 0xACCA_0001, 0).map_err(|e| e.to_string())?;
    let replay = |transcript| {
        run_trial_with_transport(
            &config,
            0xACCA_0001,
            0,
            Arc::new(ReplayTransport::from_entries(transcript)),
        )
    };
    let first = replay(original.transcript()).map_err(|e| e.to_string())?;
    let second = replay(original.transcript()).map_err(|e| e.to_string())?;
    let (h0, h1, h2) = (
        original.content_hash(),
        first.content_hash(),
        second.content_hash(),
    );
    if h0 != h1 || h1 != h2 {
        return Err(format!("hashes diverged: {h0} / {h1} / {h2}"));
    }
    Ok(format!("three identical log hashes {}", &h0[..12]))
}

/// 11. Over a replayed 10-interaction game, a responder scripted with the
///     ground truth scores 1.0 on all eight question types, and a scrambled
///     responder stays below 0.3 on the state questions.
fn criterion_11() -> Result<String, String> {
    let log = run_trial(&mock_llm_config(2, 5), 0xACCB_0001, 0).map_err(|e| e.to_string())?;
    if log.events.len() != 10 {
        return Err(format!("expected a 10-interaction game, got {}", log.events.len()));
    }
    let params = LlmParams::for_model("offline");
    let plan = plan_comprehension(&log, 0, 5, &params).map_err(|e| e.to_string())?;
    let oracle = ScriptedTransport::new(oracle_script(&plan));
    let report = run_comprehension_suite(&log, 0, 5, &params, &oracle).map_err(|e| e.to_string())?;
    if report.per_category.len() != 8 {
        return Err(format!(
            "only {} of 8 question types were asked",
            report.per_category.len()
        ));
    }
    for category in QuestionCategory::ALL {
        if report.accuracy(category) != Some(1.0) {
            return Err(format!(
                "oracle accuracy on {} was {:?}, expected 1.0",
                category.label(),
                report.accuracy(category)
            ));
        }
    }

    let scrambled = ScriptedTransport::new(scrambled_script(&plan, &log.config.pool));
    let scrambled_report =
        run_comprehension_suite(&log, 0, 5, &params, &scrambled).map_err(|e| e.to_string())?;
    let state = scrambled_report.group_accuracy(QuestionGroup::State);
    if state.is_nan() || state >= 0.3 {
        return Err(format!("scrambled state accuracy {state} is not below 0.3"));
    }
    Ok(format!(
        "oracle 1.0 on all 8 types over {} questions; scrambled state accuracy {state:.2}",
        plan.len()
    ))
}

/// 12. The micro-dynamics table for the default surrogate: keep-after-success
///     at interaction 2 sits inside the exact binomial 99% region around 0.994
///     over 10,000 conditional samples, the interaction-1 aggregate is unbiased,
///     and a skewed first-round distribution turns that aggregate significant.
fn criterion_12() -> Result<String, String> {
    // Direct conditional sampling: one success on Q remembered, 10,000
    // draws. The region [9919, 9959] is the exact binomial 99% acceptance
    // region for p = 0.994, computed independently.
    let two = pool(&["Q", "M"]);
    let payoffs = PayoffRule::default();
    let surrogate = PolicyInstance::Surrogate(SurrogateParams::resolve(
        0.994,
        0.973,
        &FirstRound::Uniform,
        &two,
    ));
    let mut memory = MemoryWindow::new(5).map_err(|e| e.to_string())?;
    memory
        .push(InteractionRecord::from_exchange(1, name("Q"), name("Q"), &payoffs))
        .map_err(|e| e.to_string())?;
    let mut keeps = 0u64;
    for draw in 0..10_000u64 {
        let mut rng = seeds::stream(0xACCC_0001, &[draw]);
        let decision = surrogate
            .choose_memory(&memory, &two, &payoffs, &mut rng)
            .map_err(|e| e.to_string())?;
        if decision.name == name("Q") {
            keeps += 1;
        }
    }
    if !(9_919..=9_959).contains(&keeps) {
        return Err(format!(
            "keep-after-success count {keeps}/10000 outside the 99% region [9919, 9959]"
        ));
    }

    let settings = MicrodynamicsSettings::new(name("Q"), 10_000);
    let table = build_microdynamics_table(
        &PolicySpec::Surrogate {
            p_keep: 0.994,
            p_switch: 0.973,
            first_round: FirstRound::Uniform,
        },
        &two,
        &payoffs,
        &settings,
        0xACCC_0002,
    )
    .map_err(|e| e.to_string())?;
    let keep_row = table
        .row(2, "Q|Q+")
        .filter(|row| row.occurrences > 0)
        .ok_or("the keep-after-success configuration was never observed")?;
    let keep_test = stats::binom_exact_two_tailed(keep_row.designated_count, keep_row.occurrences, 0.994)
        .map_err(|e| e.to_string())?;
    if keep_test.p_value < 0.01 {
        return Err(format!(
            "table keep rate {:?} rejects 0.994 (p {:.4})",
            keep_row.production_probability, keep_test.p_value
        ));
    }
    let first = &table.aggregates[0];
    if first.binom_p <= 0.05 {
        return Err(format!(
            "interaction-1 aggregate is biased: {} of {} on Q, p {:.4}",
            first.designated_count, first.total, first.binom_p
        ));
    }

    let mut weights = BTreeMap::new();
    weights.insert("Q".to_owned(), 3.0);
    weights.insert("M".to_owned(), 1.0);
    let skewed_table = build_microdynamics_table(
        &PolicySpec::Surrogate {
            p_keep: 0.994,
            p_switch: 0.973,
            first_round: FirstRound::Weighted { weights },
        },
        &two,
        &payoffs,
        &MicrodynamicsSettings::new(name("Q"), 4_000),
        0xACCC_0003,
    )
    .map_err(|e| e.to_string())?;
    let skewed_first = &skewed_table.aggregates[0];
    if skewed_first.binom_p >= 1e-6 {
        return Err(format!(
            "skewed first round not flagged: p {:.2e}",
            skewed_first.binom_p
        ));
    }
    Ok(format!(
        "keeps {keeps}/10000 in [9919, 9959]; interaction-1 p {:.2}; skewed p {:.1e}",
        first.binom_p, skewed_first.binom_p
    ))
}
