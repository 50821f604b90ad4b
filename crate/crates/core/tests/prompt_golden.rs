//! Freezes the rendered prompt bytes against golden fixtures and checks that
//! well-formed answers always parse back to the name they encode.
//!
//! Regenerate fixtures after a deliberate template change with:
//! `UPDATE_GOLDEN=1 cargo test -p namegame --test prompt_golden`

use std::fs;
use std::path::PathBuf;

use namegame::llm::{build_prompt, parse_response, render_answer, USER_PROMPT};
use namegame::types::{InteractionRecord, MemoryWindow, Name, NamePool, PayoffRule};
use namegame::seeds;
use rand::seq::SliceRandom;
use rand::Rng;

fn name(s: &str) -> Name {
    Name::new(s).unwrap()
}

fn fixture_path(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(file)
}

fn assert_matches_fixture(file: &str, rendered: &str) {
    let path = fixture_path(file);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, rendered).unwrap();
        return;
    }
    let golden = fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing fixture {}: {e}", path.display()));
    assert_eq!(
        rendered,
        golden,
        "rendered prompt drifted from {}",
        path.display()
    );
}

#[test]
fn empty_memory_prompt_matches_golden_bytes() {
    let bundle = build_prompt(
        &PayoffRule::default(),
        &[name("F"), name("J")],
        &MemoryWindow::new(5).unwrap(),
        100,
    );
    assert_eq!(bundle.user, USER_PROMPT);
    assert_matches_fixture("prompt_empty.txt", &bundle.system);
}

#[test]
fn failed_round_prompt_matches_golden_bytes() {
    // One remembered mismatch (F vs J) at the default payoffs.
    let rule = PayoffRule::default();
    let mut memory = MemoryWindow::new(5).unwrap();
    memory
        .push(InteractionRecord::from_exchange(1, name("F"), name("J"), &rule))
        .unwrap();
    let bundle = build_prompt(&rule, &[name("F"), name("J")], &memory, 100);
    assert_eq!(bundle.user, USER_PROMPT);
    assert_matches_fixture("prompt_failed_round.txt", &bundle.system);
}

#[test]
fn full_window_prompt_matches_golden_bytes() {
    // Five remembered rounds after two evictions: rounds 3..=7 visible,
    // stated round 8, mixed outcomes.
    let rule = PayoffRule::default();
    let mut memory = MemoryWindow::new(5).unwrap();
    let plays = [
        ("F", "J"),
        ("J", "J"),
        ("J", "F"),
        ("J", "J"),
        ("J", "J"),
        ("F", "J"),
        ("J", "J"),
    ];
    for (i, (own, partner)) in plays.iter().enumerate() {
        memory
            .push(InteractionRecord::from_exchange(
                i as u64 + 1,
                name(own),
                name(partner),
                &rule,
            ))
            .unwrap();
    }
    let bundle = build_prompt(&rule, &[name("J"), name("F")], &memory, 100);
    assert_matches_fixture("prompt_full_window.txt", &bundle.system);
}

fn random_name<R: Rng>(rng: &mut R, len: usize) -> String {
    const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_-";
    (0..len)
        .map(|_| *ALPHABET.choose(rng).unwrap() as char)
        .collect()
}

#[test]
fn randomized_answers_parse_back_to_their_name() {
    // 100 random pools and answers; rendering then parsing is the identity
    // on the name, including when the reply is cut off mid-reason.
    let mut rng = seeds::stream(0xD1CE, &[99]);
    for _ in 0..100 {
        let size = rng.gen_range(2..=12);
        let mut names = Vec::new();
        while names.len() < size {
            let len = rng.gen_range(1..=8);
            let candidate = random_name(&mut rng, len);
            if !names.contains(&candidate) {
                names.push(candidate);
            }
        }
        let pool = NamePool::parse(&names.iter().map(String::as_str).collect::<Vec<_>>()).unwrap();
        let chosen = pool.names().choose(&mut rng).unwrap().clone();
        let reason_len = rng.gen_range(0..=20);
        let reason = random_name(&mut rng, reason_len);
        let rendered = render_answer(&chosen, &reason);
        assert_eq!(parse_response(&rendered, &pool).unwrap(), chosen);
        // Truncate anywhere inside the reason clause; the name survives.
        let value_end = rendered.find(';').unwrap();
        let cut = rng.gen_range(value_end..=rendered.len());
        assert_eq!(
            parse_response(&rendered[..cut], &pool).unwrap(),
            chosen,
            "truncated at {cut}: {:?}",
            &rendered[..cut]
        );
    }
}
