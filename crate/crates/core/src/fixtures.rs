//! Bundled fixtures: the default schema, the fourteen fixed comparison pairs,
//! and the elicitation dataset built around them.
//!
//! All value sets and case contents are synthetic.

use crate::data::{
    binarize, generate_synthetic, logistic, Case, CaseId, Dataset, FeatureSchema, Provenance,
    RiskLabel, ScoreModel, SyntheticConfig,
};
use crate::encoding::Encoder;

pub const SCHEMA_JSON: &str = include_str!("../../../fixtures/schema.json");

/// Store id under which the elicitation dataset is published.
pub const ELICITATION_DATASET_ID: &str = "fixture";

const PADDING_CASES: usize = 72;
const PADDING_SEED: u64 = 20_210_507;

pub fn schema() -> FeatureSchema {
    FeatureSchema::from_json(SCHEMA_JSON).expect("bundled schema is valid")
}

/// Feature values shared by both cases of a pair unless overridden.
const BASE: [(&str, &str); 12] = [
    ("victim_age", "child"),
    ("victim_gender", "female"),
    ("family_race", "caucasian"),
    ("public_assistance", "no"),
    ("perpetrator_gender", "male"),
    ("allegation_type", "neglect"),
    ("perpetrator_age", "30_39"),
    ("referral_history", "none"),
    ("reporter_type", "school"),
    ("perpetrator_relationship", "parent"),
    ("number_of_parents", "two"),
    ("region_wealth", "middle"),
];

type Overrides = &'static [(&'static str, &'static str)];

struct PairSpec {
    differing: &'static [&'static str],
    shared: Overrides,
    a: Overrides,
    b: Overrides,
}

const PAIRS: [PairSpec; 14] = [
    PairSpec {
        differing: &["victim_age"],
        shared: &[],
        a: &[("victim_age", "infant")],
        b: &[("victim_age", "adolescent")],
    },
    PairSpec {
        differing: &["victim_gender"],
        shared: &[],
        a: &[("victim_gender", "female")],
        b: &[("victim_gender", "male")],
    },
    PairSpec {
        differing: &["family_race"],
        shared: &[],
        a: &[("family_race", "caucasian")],
        b: &[("family_race", "african_american")],
    },
    PairSpec {
        differing: &["public_assistance"],
        shared: &[],
        a: &[("public_assistance", "yes")],
        b: &[("public_assistance", "no")],
    },
    PairSpec {
        differing: &["perpetrator_gender"],
        shared: &[],
        a: &[("perpetrator_gender", "male")],
        b: &[("perpetrator_gender", "female")],
    },
    PairSpec {
        differing: &["allegation_type", "perpetrator_age"],
        shared: &[],
        a: &[("allegation_type", "sexual_abuse"), ("perpetrator_age", "20_29")],
        b: &[("allegation_type", "neglect"), ("perpetrator_age", "40_plus")],
    },
    PairSpec {
        differing: &["family_race", "referral_history"],
        shared: &[],
        a: &[("family_race", "african_american"), ("referral_history", "two_plus")],
        b: &[("family_race", "caucasian"), ("referral_history", "none")],
    },
    PairSpec {
        differing: &["public_assistance", "victim_age", "reporter_type"],
        shared: &[],
        a: &[
            ("public_assistance", "yes"),
            ("victim_age", "toddler"),
            ("reporter_type", "medical"),
        ],
        b: &[
            ("public_assistance", "no"),
            ("victim_age", "adolescent"),
            ("reporter_type", "anonymous"),
        ],
    },
    PairSpec {
        differing: &["victim_age", "perpetrator_age"],
        shared: &[("perpetrator_relationship", "non_relative")],
        a: &[("victim_age", "toddler"), ("perpetrator_age", "20_29")],
        b: &[("victim_age", "adolescent"), ("perpetrator_age", "40_plus")],
    },
    PairSpec {
        differing: &["victim_age", "perpetrator_age"],
        shared: &[("perpetrator_relationship", "relative")],
        a: &[("victim_age", "toddler"), ("perpetrator_age", "20_29")],
        b: &[("victim_age", "adolescent"), ("perpetrator_age", "40_plus")],
    },
    PairSpec {
        differing: &["number_of_parents", "region_wealth", "perpetrator_relationship"],
        shared: &[],
        a: &[
            ("number_of_parents", "single"),
            ("region_wealth", "low"),
            ("perpetrator_relationship", "non_relative"),
        ],
        b: &[
            ("number_of_parents", "two"),
            ("region_wealth", "high"),
            ("perpetrator_relationship", "parent"),
        ],
    },
    PairSpec {
        differing: &["region_wealth", "public_assistance", "referral_history"],
        shared: &[],
        a: &[
            ("region_wealth", "low"),
            ("public_assistance", "yes"),
            ("referral_history", "one"),
        ],
        b: &[
            ("region_wealth", "high"),
            ("public_assistance", "no"),
            ("referral_history", "none"),
        ],
    },
    PairSpec {
        differing: &["family_race", "region_wealth", "public_assistance"],
        shared: &[],
        a: &[
            ("family_race", "hispanic"),
            ("region_wealth", "low"),
            ("public_assistance", "yes"),
        ],
        b: &[
            ("family_race", "caucasian"),
            ("region_wealth", "middle"),
            ("public_assistance", "no"),
        ],
    },
    PairSpec {
        differing: &["number_of_parents", "victim_age", "victim_gender"],
        shared: &[],
        a: &[
            ("number_of_parents", "two"),
            ("victim_age", "toddler"),
            ("victim_gender", "male"),
        ],
        b: &[
            ("number_of_parents", "single"),
            ("victim_age", "adolescent"),
            ("victim_gender", "female"),
        ],
    },
];

/// One fixed comparison pair. Pair `number` (1-based) differs in exactly the
/// features listed in `differing`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixturePair {
    pub number: usize,
    pub differing: Vec<String>,
    pub case_a: Case,
    pub case_b: Case,
}

impl FixturePair {
    pub fn question_id(&self) -> String {
        fixture_question_id(self.number)
    }
}

pub fn fixture_question_id(number: usize) -> String {
    format!("pair-{number:02}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixturePairSet {
    pairs: Vec<FixturePair>,
}

impl FixturePairSet {
    /// The fourteen pairs against the bundled schema, ordered from single
    /// differences to multi-feature differences.
    pub fn bundled() -> Self {
        let schema = schema();
        let pairs = PAIRS
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let number = i + 1;
                let build = |side: &str, own: Overrides| {
                    let mut labels: Vec<(&str, &str)> = BASE.to_vec();
                    for (name, value) in spec.shared.iter().chain(own) {
                        let slot = labels.iter_mut().find(|(n, _)| n == name).expect("base feature");
                        slot.1 = value;
                    }
                    case_from_labels(&schema, &format!("p{number:02}{side}"), &labels)
                };
                FixturePair {
                    number,
                    differing: spec.differing.iter().map(|s| s.to_string()).collect(),
                    case_a: build("a", spec.a),
                    case_b: build("b", spec.b),
                }
            })
            .collect();
        FixturePairSet { pairs }
    }

    pub fn pairs(&self) -> &[FixturePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks every pair differs in exactly its listed features.
    pub fn verify(&self, schema: &FeatureSchema) -> Result<(), String> {
        for p in &self.pairs {
            let actual: Vec<&str> = schema
                .features()
                .iter()
                .enumerate()
                .filter(|(f, _)| p.case_a.values[*f] != p.case_b.values[*f])
                .map(|(_, def)| def.name.as_str())
                .collect();
            let mut expected: Vec<&str> = p.differing.iter().map(String::as_str).collect();
            expected.sort_by_key(|n| schema.index_of(n));
            if actual != expected {
                return Err(format!(
                    "pair {} differs in {actual:?}, expected {expected:?}",
                    p.number
                ));
            }
        }
        Ok(())
    }

    pub fn case_ids(&self) -> Vec<CaseId> {
        self.pairs
            .iter()
            .flat_map(|p| [p.case_a.id.clone(), p.case_b.id.clone()])
            .collect()
    }
}

fn case_from_labels(schema: &FeatureSchema, id: &str, labels: &[(&str, &str)]) -> Case {
    let values = schema
        .features()
        .iter()
        .map(|f| {
            let label = labels
                .iter()
                .find(|(n, _)| *n == f.name)
                .map(|(_, v)| *v)
                .expect("every feature labelled");
            f.value_index(label).expect("label in value set") as u32
        })
        .collect();
    Case::new(id, values)
}

/// The dataset elicitation sessions run against: the 28 fixture-pair cases
/// (ids `p01a` .. `p14b`) followed by 72 seeded synthetic cases (ids `1` ..
/// `72`). Fixture cases are scored noise-free by the default hidden model.
pub fn elicitation_dataset() -> Dataset {
    let schema = schema();
    let model = ScoreModel::default_for(&schema);
    let encoder = Encoder::new(&schema);
    let threshold = 0.5;
    let mut cases: Vec<Case> = FixturePairSet::bundled()
        .pairs
        .into_iter()
        .flat_map(|p| [p.case_a, p.case_b])
        .map(|mut c| {
            let score = logistic(model.latent(&encoder.encode(&c)));
            let label = binarize(score, threshold);
            c.score = Some(score);
            c.prediction = Some(label);
            c.true_label = Some(label);
            c
        })
        .collect();
    let padding = generate_synthetic(&schema, &SyntheticConfig::new(PADDING_CASES, PADDING_SEED))
        .expect("bundled generator config is valid");
    cases.extend(padding.cases().iter().cloned());
    Dataset::new(schema, cases, threshold, Provenance::Synthetic).expect("fixture dataset is valid")
}

/// Counts of (true label, prediction) outcomes for one victim-age group.
#[derive(Debug, Clone, Copy)]
struct Outcomes {
    age: &'static str,
    /// (true label, predicted label, how many)
    cells: &'static [(Option<RiskLabel>, RiskLabel, usize)],
}

const HIGH: RiskLabel = RiskLabel::High;
const LOW: RiskLabel = RiskLabel::Low;

fn outcome_dataset(groups: &[Outcomes]) -> Dataset {
    let schema = schema();
    let mut cases = Vec::new();
    for g in groups {
        for &(truth, pred, n) in g.cells {
            for _ in 0..n {
                let mut labels = BASE.to_vec();
                labels[0].1 = g.age;
                let mut case = case_from_labels(&schema, &(cases.len() + 1).to_string(), &labels);
                case.true_label = truth;
                case.score = Some(if pred == HIGH { 0.75 } else { 0.25 });
                case.prediction = Some(pred);
                cases.push(case);
            }
        }
    }
    Dataset::new(schema, cases, 0.5, Provenance::Synthetic).expect("example dataset is valid")
}

/// Infants and adolescents with predictions only. When `violating`, 3 of 4
/// infants and 2 of 4 adolescents are predicted high; otherwise 2 of 4 each.
pub fn parity_example(violating: bool) -> Dataset {
    let infants: &[(Option<RiskLabel>, RiskLabel, usize)] = if violating {
        &[(None, HIGH, 3), (None, LOW, 1)]
    } else {
        &[(None, HIGH, 2), (None, LOW, 2)]
    };
    outcome_dataset(&[
        Outcomes { age: "infant", cells: infants },
        Outcomes { age: "adolescent", cells: &[(None, HIGH, 2), (None, LOW, 2)] },
    ])
}

/// Infants and adolescents with labels and predictions. When `violating`,
/// infants have false positive rate 1/2 and false negative rate 1/5 while
/// adolescents have 1/3 and 2/3; otherwise both groups have 1/2 and 2/3.
pub fn odds_example(violating: bool) -> Dataset {
    const EVEN: &[(Option<RiskLabel>, RiskLabel, usize)] = &[
        (Some(LOW), HIGH, 1),
        (Some(LOW), LOW, 1),
        (Some(HIGH), HIGH, 1),
        (Some(HIGH), LOW, 2),
    ];
    if violating {
        outcome_dataset(&[
            Outcomes {
                age: "infant",
                cells: &[
                    (Some(LOW), HIGH, 1),
                    (Some(LOW), LOW, 1),
                    (Some(HIGH), HIGH, 4),
                    (Some(HIGH), LOW, 1),
                ],
            },
            Outcomes {
                age: "adolescent",
                cells: &[
                    (Some(LOW), HIGH, 1),
                    (Some(LOW), LOW, 2),
                    (Some(HIGH), HIGH, 1),
                    (Some(HIGH), LOW, 2),
                ],
            },
        ])
    } else {
        outcome_dataset(&[
            Outcomes { age: "infant", cells: EVEN },
            Outcomes { age: "adolescent", cells: EVEN },
        ])
    }
}
