mod common;

use fairlicit_core::analysis::{
    borda_aggregate, consensus_class, criterion_support, mean_consistency, summarize, ChoiceCounts,
    Consensus, GroupColumn, PairColumn, PairJudgment, Participant, ResponseMatrix,
};
use fairlicit_core::elicitation::{
    group_question_id, GroupChoice, GroupCriterion, PairChoice, QuestionSource, Role,
};
use fairlicit_core::fixtures;
use fairlicit_core::CaseId;
use proptest::prelude::*;

const ATTRIBUTES: [&str; 5] = [
    "victim_age",
    "victim_gender",
    "family_race",
    "public_assistance",
    "perpetrator_gender",
];

fn arb_group_cell() -> impl Strategy<Value = Option<GroupChoice>> {
    prop_oneof![
        1 => Just(None),
        3 => prop::sample::select(GroupChoice::ALL.to_vec()).prop_map(Some),
    ]
}

fn arb_pair_cell() -> impl Strategy<Value = Option<PairChoice>> {
    prop_oneof![
        1 => Just(None),
        4 => prop::sample::select(PairChoice::ALL.to_vec()).prop_map(Some),
    ]
}

/// A matrix over the 15 group questions and the 14 fixed pairs.
fn arb_matrix() -> impl Strategy<Value = ResponseMatrix> {
    (1usize..=16).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(arb_group_cell(), 15), n),
            prop::collection::vec(prop::collection::vec(arb_pair_cell(), 14), n),
        )
            .prop_map(move |(group, pairwise)| {
                let participants = (0..n)
                    .map(|i| Participant {
                        session_id: format!("s{i:02}"),
                        role: [Role::SocialWorker, Role::Parent, Role::Other][i % 3],
                    })
                    .collect();
                let group_columns = GroupCriterion::ALL
                    .iter()
                    .flat_map(|&c| {
                        ATTRIBUTES.iter().map(move |a| GroupColumn {
                            question_id: group_question_id(a, c),
                            attribute: a.to_string(),
                            criterion: c,
                        })
                    })
                    .collect();
                let pair_columns = fixtures::FixturePairSet::bundled()
                    .pairs()
                    .iter()
                    .map(|p| PairColumn {
                        key: p.question_id(),
                        case_a: p.case_a.id.clone(),
                        case_b: p.case_b.id.clone(),
                        source: QuestionSource::FixedFixture,
                    })
                    .collect();
                ResponseMatrix { participants, group_columns, group, pair_columns, pairwise }
            })
    })
}

fn permuted(m: &ResponseMatrix, order: &[usize]) -> ResponseMatrix {
    ResponseMatrix {
        participants: order.iter().map(|&i| m.participants[i].clone()).collect(),
        group: order.iter().map(|&i| m.group[i].clone()).collect(),
        pairwise: order.iter().map(|&i| m.pairwise[i].clone()).collect(),
        ..m.clone()
    }
}

fn arb_matrix_and_order() -> impl Strategy<Value = (ResponseMatrix, Vec<usize>)> {
    arb_matrix().prop_flat_map(|m| {
        let order = Just((0..m.participants.len()).collect::<Vec<_>>()).prop_shuffle();
        (Just(m), order)
    })
}

fn arb_judgments(cases: usize) -> impl Strategy<Value = Vec<PairJudgment>> {
    let one = (0..cases, 0..cases, prop::sample::select(PairChoice::ALL.to_vec()));
    prop::collection::vec(one, 0..40).prop_map(|raw| {
        raw.into_iter()
            .filter(|(a, b, _)| a != b)
            .map(|(a, b, choice)| PairJudgment {
                case_a: CaseId::new(format!("c{a}")),
                case_b: CaseId::new(format!("c{b}")),
                choice,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reordering_participants_changes_no_aggregate((m, order) in arb_matrix_and_order()) {
        let p = permuted(&m, &order);
        for c in GroupCriterion::ALL {
            let (a, b) = (criterion_support(&m, c), criterion_support(&p, c));
            prop_assert_eq!(a.is_ok(), b.is_ok());
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert_eq!(a, b);
            }
        }
        for q in (1..=14).map(fixtures::fixture_question_id) {
            prop_assert_eq!(consensus_class(&m, &q).unwrap(), consensus_class(&p, &q).unwrap());
        }
        let (a, b) = (mean_consistency(&m).ok(), mean_consistency(&p).ok());
        prop_assert_eq!(a.is_some(), b.is_some());
        if let (Some(a), Some(b)) = (a, b) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let cases = fixtures::FixturePairSet::bundled().case_ids();
        prop_assert_eq!(
            borda_aggregate(&cases, &m.pair_judgments()).unwrap(),
            borda_aggregate(&cases, &p.pair_judgments()).unwrap()
        );
    }

    #[test]
    fn support_is_the_count_weighted_mean_of_attribute_supports(m in arb_matrix()) {
        for c in GroupCriterion::ALL {
            let Ok(s) = criterion_support(&m, c) else { continue };
            let weighted: f64 = s
                .per_attribute
                .iter()
                .filter(|a| a.total() > 0)
                .map(|a| (a.yes as f64 / a.total() as f64) * a.total() as f64)
                .sum::<f64>()
                / s.total as f64;
            prop_assert!((s.support - weighted).abs() <= 1e-12);
            prop_assert_eq!(s.split.all_yes + s.split.all_no + s.split.mixed,
                m.group.iter().filter(|row| {
                    s.per_attribute.iter().any(|a| {
                        let col = m.group_columns.iter().position(|g| g.criterion == c && g.attribute == a.attribute).unwrap();
                        row[col].is_some()
                    })
                }).count());
        }
    }

    #[test]
    fn unanimity_implies_strong_agreement(choices in prop::collection::vec(prop::sample::select(PairChoice::ALL.to_vec()), 12)) {
        let mut counts = ChoiceCounts::default();
        for c in choices {
            counts.add(c);
        }
        if counts.classify() == Consensus::Unanimous {
            prop_assert!(counts.strong_agreement());
        }
        if counts.classify() == Consensus::Majority {
            let (_, n) = counts.leading().unwrap();
            prop_assert!(2 * n > counts.total());
        }
    }

    #[test]
    fn borda_is_neutral(judgments in arb_judgments(6), perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle()) {
        let ids: Vec<CaseId> = (0..6).map(|i| CaseId::new(format!("c{i}"))).collect();
        let relabel = |id: &CaseId| {
            let i: usize = id.as_str()[1..].parse().unwrap();
            ids[perm[i]].clone()
        };
        let moved: Vec<PairJudgment> = judgments
            .iter()
            .map(|j| PairJudgment { case_a: relabel(&j.case_a), case_b: relabel(&j.case_b), choice: j.choice })
            .collect();
        let before = borda_aggregate(&ids, &judgments).unwrap();
        let after = borda_aggregate(&ids, &moved).unwrap();
        for id in &ids {
            prop_assert_eq!(before.score(id), after.score(&relabel(id)));
        }
        prop_assert_eq!(before.has_ties, after.has_ties);
    }

    #[test]
    fn borda_ignores_judgment_order(judgments in arb_judgments(5).prop_shuffle()) {
        let ids: Vec<CaseId> = (0..5).map(|i| CaseId::new(format!("c{i}"))).collect();
        let mut sorted = judgments.clone();
        sorted.sort_by(|a, b| (&a.case_a, &a.case_b, a.choice.as_str()).cmp(&(&b.case_a, &b.case_b, b.choice.as_str())));
        prop_assert_eq!(borda_aggregate(&ids, &judgments).unwrap(), borda_aggregate(&ids, &sorted).unwrap());
    }

    #[test]
    fn session_order_does_not_matter(order in Just((0..12usize).collect::<Vec<_>>()).prop_shuffle()) {
        let sessions = common::load_replay_sessions();
        let shuffled: Vec<_> = order.iter().map(|&i| sessions[i].clone()).collect();
        let a = ResponseMatrix::from_sessions(&sessions).unwrap();
        let b = ResponseMatrix::from_sessions(&shuffled).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(summarize(&a).unwrap(), summarize(&b).unwrap());
    }
}
