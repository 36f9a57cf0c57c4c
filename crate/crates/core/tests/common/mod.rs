#![allow(dead_code)]

use std::path::PathBuf;

use chrono::{DateTime, Duration, TimeZone, Utc};
use fairlicit_core::elicitation::{
    start_session, Exploration, NextItem, ParticipantProfile, Question, ResponsePayload, Role,
    Session, SessionConfig, StartRequest,
};
use fairlicit_core::fixtures::{self, FixturePairSet};
use fairlicit_core::metrics::Metric;
use fairlicit_core::similarity::WeightVector;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn replay_dir() -> PathBuf {
    repo_root().join("fixtures/12participants")
}

pub const CODES: [&str; 12] = [
    "S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8", "P1", "P2", "P3", "P4",
];

/// Group answers per participant row, attributes in sensitive-attribute order.
const UNAWARENESS: [&str; 12] = [
    "YYYYY", "YYYYY", "NYYYY", "NYYYY", "NYYYY", "NYYNY", "NNNNN", "NNNNN", "NNNNN", "NNNNN",
    "NNNNN", "NNNNN",
];
const PARITY: [&str; 12] = [
    "YYYNN", "YYNYN", "YYNNY", "NYYYN", "NYYNY", "NYNYY", "NNYYN", "NNYNY", "NYYYY", "NNNNN",
    "NNNNN", "NNNNN",
];
const ODDS: [&str; 12] = [
    "YYYYY", "YYYYY", "YYYYY", "YYYYY", "YYYYY", "YYYYY", "NNNNN", "NNNNN", "YYYYY", "YYYYY",
    "NNNNN", "NNNNN",
];

/// Pair response counts: prioritize_a, equal, prioritize_b, not_comfortable, no_opinion.
pub const PAIR_COUNTS: [[usize; 5]; 14] = [
    [6, 5, 0, 1, 0],
    [1, 11, 0, 0, 0],
    [0, 11, 0, 0, 1],
    [2, 9, 1, 0, 0],
    [0, 10, 1, 0, 1],
    [12, 0, 0, 0, 0],
    [11, 1, 0, 0, 0],
    [8, 3, 1, 0, 0],
    [9, 3, 0, 0, 0],
    [7, 4, 0, 1, 0],
    [6, 5, 1, 0, 0],
    [9, 2, 1, 0, 0],
    [3, 8, 1, 0, 0],
    [5, 4, 3, 0, 0],
];

const CHOICES: [&str; 5] = ["prioritize_a", "equal", "prioritize_b", "not_comfortable", "no_opinion"];

pub fn pair_choice(pair: usize, participant: usize) -> &'static str {
    let expanded: Vec<&str> = PAIR_COUNTS[pair]
        .iter()
        .zip(CHOICES)
        .flat_map(|(&n, c)| std::iter::repeat_n(c, n))
        .collect();
    assert_eq!(expanded.len(), 12);
    expanded[(participant + pair) % 12]
}

fn group_choice(participant: usize, criterion: &str, attribute: usize) -> &'static str {
    let grid = match criterion {
        "unawareness" => UNAWARENESS,
        "statistical_parity" => PARITY,
        _ => ODDS,
    };
    match grid[participant].as_bytes()[attribute] {
        b'Y' => "yes",
        _ => "no",
    }
}

pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap()
}

pub fn build_session(k: usize) -> Session {
    let code = CODES[k];
    let dataset = fixtures::elicitation_dataset();
    let sensitive = dataset.schema().sensitive_attributes().to_vec();
    let mut participant = ParticipantProfile::new(if code.starts_with('S') {
        Role::SocialWorker
    } else {
        Role::Parent
    });
    participant.demographics.insert("code".into(), code.into());
    let mut clock = epoch() + Duration::hours(k as i64);
    let mut tick = || {
        clock += Duration::seconds(30);
        clock
    };
    let mut s = start_session(
        StartRequest {
            session_id: code.into(),
            participant,
            dataset_ref: fixtures::ELICITATION_DATASET_ID.into(),
            seed: 1000 + k as u64,
            config: SessionConfig::default(),
        },
        Some(&dataset),
        &FixturePairSet::bundled(),
        epoch() + Duration::hours(k as i64),
    )
    .unwrap();

    while let NextItem::Question(q) = s.next_question(tick()).unwrap() {
        let choice = match &q {
            Question::Pairwise(p) => {
                let n: usize = p.question_id.trim_start_matches("pair-").parse().unwrap();
                pair_choice(n - 1, k)
            }
            Question::GroupFairness(g) => {
                let a = sensitive.iter().position(|x| *x == g.attribute).unwrap();
                group_choice(k, g.criterion.as_str(), a)
            }
        };
        s.record_response(&ResponsePayload::new(q.id(), choice), tick()).unwrap();
    }
    s.advance(tick()).unwrap();

    for i in 0..2 {
        let NextItem::Question(q) = s.next_question(tick()).unwrap() else {
            panic!("stage 2 serves pairs")
        };
        let choice = ["equal", "prioritize_a"][(k + i) % 2];
        s.record_response(&ResponsePayload::new(q.id(), choice), tick()).unwrap();
    }
    s.advance(tick()).unwrap();

    let mut weights = vec![1.0; 12];
    weights[k % 12] = 0.0;
    weights[(k + 5) % 12] = 2.0;
    s.record_exploration(
        Exploration::WeightChange {
            weights: WeightVector::new(weights).unwrap(),
        },
        tick(),
    )
    .unwrap();
    s.advance(tick()).unwrap();

    s.record_exploration(
        Exploration::GroupQuery {
            attributes: vec![sensitive[k % sensitive.len()].clone()],
            metric: Metric::PositiveRate,
        },
        tick(),
    )
    .unwrap();
    s.advance(tick()).unwrap();
    s
}

pub fn build_sessions() -> Vec<Session> {
    (0..CODES.len()).map(build_session).collect()
}

/// The checked-in replay logs.
pub fn load_replay_sessions() -> Vec<Session> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(replay_dir())
        .expect("replay fixture directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Session::import(&std::fs::read_to_string(p).unwrap()).unwrap())
        .collect()
}
