//! Keeps the checked-in replay logs and fixture case table in sync with the
//! builder. Run with `FAIRLICIT_BLESS=1` to rewrite them.

mod common;

use common::*;
use fairlicit_core::elicitation::{replay, Session};
use fairlicit_core::fixtures::{self, FixturePairSet};

fn check_or_bless(path: std::path::PathBuf, expected: &str) {
    if std::env::var_os("FAIRLICIT_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, expected).unwrap();
        return;
    }
    let actual = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}; rerun with FAIRLICIT_BLESS=1", path.display()));
    assert!(actual == expected, "{} is stale; rerun with FAIRLICIT_BLESS=1", path.display());
}

#[test]
fn replay_logs_match_builder() {
    for s in build_sessions() {
        check_or_bless(replay_dir().join(format!("{}.json", s.session_id)), &s.export());
    }
}

#[test]
fn fixture_cases_match() {
    check_or_bless(
        repo_root().join("fixtures/fixture_cases.csv"),
        &fixtures::elicitation_dataset().to_csv(),
    );
}

#[test]
fn replay_logs_reproduce() {
    let dataset = fixtures::elicitation_dataset();
    let pairs = FixturePairSet::bundled();
    for s in build_sessions() {
        let rebuilt = replay(&s, &dataset, &pairs).unwrap();
        assert_eq!(rebuilt.export(), s.export());
        assert!(s.is_closed());
    }
}

#[test]
fn pair_choices_follow_counts() {
    for (p, counts) in PAIR_COUNTS.iter().enumerate() {
        let mut seen = [0usize; 5];
        for k in 0..12 {
            let c = pair_choice(p, k);
            let i = ["prioritize_a", "equal", "prioritize_b", "not_comfortable", "no_opinion"]
                .iter()
                .position(|x| *x == c)
                .unwrap();
            seen[i] += 1;
        }
        assert_eq!(&seen, counts, "pair {}", p + 1);
    }
}

#[test]
fn example_tables_match() {
    for (name, ds) in [
        ("parity_violated", fixtures::parity_example(true)),
        ("parity_satisfied", fixtures::parity_example(false)),
        ("odds_violated", fixtures::odds_example(true)),
        ("odds_satisfied", fixtures::odds_example(false)),
    ] {
        check_or_bless(repo_root().join(format!("fixtures/{name}.csv")), &ds.to_csv());
    }
}

#[test]
fn replay_logs_import() {
    let logs = load_replay_sessions();
    assert_eq!(logs.len(), 12);
    for s in logs {
        assert_eq!(Session::import(&s.export()).unwrap(), s);
    }
}
