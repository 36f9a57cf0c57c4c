//! Weighted Euclidean similarity between cases and rankings against a reference.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Case, CaseId, Dataset, FeatureKind, FeatureSchema, RiskLabel};
use crate::encoding::Encoder;

/// Datasets at least this large compute distances on the rayon pool.
const PARALLEL_MIN_CASES: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("SchemaMismatch: {0}")]
    SchemaMismatch(String),
    #[error("UnknownCase: {0:?}")]
    UnknownCase(String),
    #[error("MissingPredictions: every case needs a prediction")]
    MissingPredictions,
    #[error("BadWeights: {0}")]
    BadWeights(String),
    #[error("BadQuery: {0}")]
    BadQuery(String),
}

impl SimilarityError {
    pub fn name(&self) -> &'static str {
        match self {
            SimilarityError::SchemaMismatch(_) => "SchemaMismatch",
            SimilarityError::UnknownCase(_) => "UnknownCase",
            SimilarityError::MissingPredictions => "MissingPredictions",
            SimilarityError::BadWeights(_) => "BadWeights",
            SimilarityError::BadQuery(_) => "BadQuery",
        }
    }
}

/// One nonnegative weight per schema feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, SimilarityError> {
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(SimilarityError::BadWeights(format!(
                "weights must be finite and nonnegative, got {w}"
            )));
        }
        Ok(WeightVector(weights))
    }

    pub fn uniform(features: usize) -> Self {
        WeightVector(vec![1.0; features])
    }

    /// Parses comma-separated decimals, e.g. `"1,0.5,2"`.
    pub fn parse_list(text: &str) -> Result<Self, SimilarityError> {
        let weights = text
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| SimilarityError::BadWeights(format!("{t:?} is not a number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        WeightVector::new(weights)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_len(&self, schema: &FeatureSchema) -> Result<(), SimilarityError> {
        if self.0.len() == schema.len() {
            Ok(())
        } else {
            Err(SimilarityError::SchemaMismatch(format!(
                "{} weights for {} features",
                self.0.len(),
                schema.len()
            )))
        }
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = SimilarityError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        WeightVector::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// A case together with its numeric encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedCase {
    pub case_id: CaseId,
    pub coords: Vec<f64>,
}

enum FeatureScale {
    /// Normalized level per value.
    Ordinal(Vec<f64>),
    Categorical,
}

/// Per-feature view of the encoded space. Within an ordinal coordinate the
/// squared difference is that of the normalized levels; within a one-hot
/// block two distinct values are exactly 1 apart. Summing per feature in
/// schema order means cases that differ from a reference in the same way get
/// bitwise-equal distances, so id tie-breaking is reliable.
struct Space {
    scales: Vec<FeatureScale>,
    weights: Vec<f64>,
}

impl Space {
    fn new(schema: &FeatureSchema, w: &WeightVector) -> Result<Self, SimilarityError> {
        w.check_len(schema)?;
        let scales = schema
            .features()
            .iter()
            .map(|f| match f.kind {
                FeatureKind::Ordinal => {
                    let levels = f.levels.as_ref().expect("validated ordinal levels");
                    let lo = levels[0];
                    let span = levels[levels.len() - 1] - lo;
                    FeatureScale::Ordinal(levels.iter().map(|l| (l - lo) / span).collect())
                }
                FeatureKind::Categorical => FeatureScale::Categorical,
            })
            .collect();
        Ok(Space {
            scales,
            weights: w.0.clone(),
        })
    }

    fn distance(&self, a: &Case, b: &Case) -> f64 {
        let mut total = 0.0;
        for (f, (scale, w)) in self.scales.iter().zip(&self.weights).enumerate() {
            let (x, y) = (a.values[f] as usize, b.values[f] as usize);
            let d2 = match scale {
                FeatureScale::Ordinal(levels) => (levels[x] - levels[y]).powi(2),
                FeatureScale::Categorical => {
                    if x == y {
                        0.0
                    } else {
                        1.0
                    }
                }
            };
            total += w * d2;
        }
        total.sqrt()
    }
}

pub fn encode_case(schema: &FeatureSchema, case: &Case) -> EncodedCase {
    EncodedCase {
        case_id: case.id.clone(),
        coords: Encoder::new(schema).encode(case),
    }
}

fn check_case(schema: &FeatureSchema, case: &Case) -> Result<(), SimilarityError> {
    let ok = case.values.len() == schema.len()
        && case
            .values
            .iter()
            .zip(schema.features())
            .all(|(&v, f)| (v as usize) < f.values.len());
    if ok {
        Ok(())
    } else {
        Err(SimilarityError::SchemaMismatch(format!(
            "case {} does not conform to the schema",
            case.id
        )))
    }
}

/// `sqrt(sum_k w_f(k) * (q_k - p_k)^2)` over the encoded coordinates, where
/// `f(k)` is the feature owning coordinate `k`.
pub fn weighted_distance(
    schema: &FeatureSchema,
    a: &Case,
    b: &Case,
    w: &WeightVector,
) -> Result<f64, SimilarityError> {
    check_case(schema, a)?;
    check_case(schema, b)?;
    let space = Space::new(schema, w)?;
    Ok(space.distance(a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankEntry {
    pub id: CaseId,
    #[serde(serialize_with = "crate::wire::serialize_12")]
    pub distance: f64,
    pub prediction: Option<RiskLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityRanking {
    pub reference: CaseId,
    pub weights: WeightVector,
    pub entries: Vec<RankEntry>,
}

fn by_distance_then_id(a: (f64, &CaseId), b: (f64, &CaseId)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}

/// Every case except the reference, ascending by distance, ties by case id.
pub fn rank_by_similarity(
    dataset: &Dataset,
    reference: &CaseId,
    w: &WeightVector,
) -> Result<SimilarityRanking, SimilarityError> {
    let r = dataset
        .position(reference)
        .ok_or_else(|| SimilarityError::UnknownCase(reference.to_string()))?;
    let space = Space::new(dataset.schema(), w)?;
    let cases = dataset.cases();
    let entry = |i: usize| RankEntry {
        id: cases[i].id.clone(),
        distance: space.distance(&cases[r], &cases[i]),
        prediction: cases[i].prediction,
    };
    let others = (0..cases.len()).filter(|&i| i != r);
    let mut entries: Vec<RankEntry> = if cases.len() >= PARALLEL_MIN_CASES {
        others.collect::<Vec<_>>().into_par_iter().map(entry).collect()
    } else {
        others.map(entry).collect()
    };
    entries.sort_by(|a, b| by_distance_then_id((a.distance, &a.id), (b.distance, &b.id)));
    Ok(SimilarityRanking {
        reference: reference.clone(),
        weights: w.clone(),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscordantPair {
    pub case_a: CaseId,
    pub case_b: CaseId,
    #[serde(serialize_with = "crate::wire::serialize_12")]
    pub distance: f64,
}

/// The `k` closest pairs whose predictions differ, ordered by distance then
/// `(case_a, case_b)` with `case_a < case_b`.
pub fn nearest_discordant_pairs(
    dataset: &Dataset,
    w: &WeightVector,
    k: usize,
) -> Result<Vec<DiscordantPair>, SimilarityError> {
    if k == 0 {
        return Err(SimilarityError::BadQuery("k must be at least 1".into()));
    }
    if !dataset.has_predictions() {
        return Err(SimilarityError::MissingPredictions);
    }
    let space = Space::new(dataset.schema(), w)?;
    let cases = dataset.cases();
    let highs: Vec<usize> = (0..cases.len())
        .filter(|&i| cases[i].prediction == Some(RiskLabel::High))
        .collect();
    let lows: Vec<usize> = (0..cases.len())
        .filter(|&i| cases[i].prediction == Some(RiskLabel::Low))
        .collect();

    let mut pairs: Vec<DiscordantPair> = Vec::with_capacity(highs.len() * lows.len());
    for &h in &highs {
        for &l in &lows {
            let (a, b) = if cases[h].id < cases[l].id { (h, l) } else { (l, h) };
            pairs.push(DiscordantPair {
                case_a: cases[a].id.clone(),
                case_b: cases[b].id.clone(),
                distance: space.distance(&cases[a], &cases[b]),
            });
        }
    }
    let order = |x: &DiscordantPair, y: &DiscordantPair| {
        x.distance
            .total_cmp(&y.distance)
            .then_with(|| x.case_a.cmp(&y.case_a))
            .then_with(|| x.case_b.cmp(&y.case_b))
    };
    if pairs.len() > k {
        pairs.select_nth_unstable_by(k - 1, order);
        pairs.truncate(k);
    }
    pairs.sort_by(order);
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureDef, Provenance};

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![
                FeatureDef::categorical("race", &["a", "b", "c"]),
                FeatureDef::ordinal("age", &["0", "1", "2"]),
            ],
            vec![],
        )
        .unwrap()
    }

    fn predicted(id: &str, values: Vec<u32>, p: RiskLabel) -> Case {
        Case {
            prediction: Some(p),
            ..Case::new(id, values)
        }
    }

    #[test]
    fn identical_cases_are_at_zero() {
        let s = schema();
        let a = Case::new("a", vec![1, 2]);
        let w = WeightVector::new(vec![3.0, 0.5]).unwrap();
        assert_eq!(weighted_distance(&s, &a, &a, &w).unwrap(), 0.0);
    }

    #[test]
    fn categorical_difference_is_unit_before_weighting() {
        let s = schema();
        let a = Case::new("a", vec![0, 1]);
        let b = Case::new("b", vec![2, 1]);
        let w = WeightVector::new(vec![4.0, 1.0]).unwrap();
        let d = weighted_distance(&s, &a, &b, &w).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_weights_or_cases_are_rejected() {
        let s = schema();
        let a = Case::new("a", vec![0, 1]);
        let bad = Case::new("b", vec![0]);
        let w = WeightVector::uniform(2);
        assert!(matches!(
            weighted_distance(&s, &a, &bad, &w),
            Err(SimilarityError::SchemaMismatch(_))
        ));
        assert!(matches!(
            weighted_distance(&s, &a, &a, &WeightVector::uniform(3)),
            Err(SimilarityError::SchemaMismatch(_))
        ));
        assert!(WeightVector::new(vec![-1.0, 1.0]).is_err());
        assert!(WeightVector::parse_list("1,x").is_err());
        assert_eq!(
            WeightVector::parse_list("1, 0.5").unwrap().as_slice(),
            &[1.0, 0.5]
        );
    }

    #[test]
    fn two_case_ranking_has_one_entry() {
        let ds = Dataset::new(
            schema(),
            vec![Case::new("1", vec![0, 0]), Case::new("2", vec![1, 2])],
            0.5,
            Provenance::Imported,
        )
        .unwrap();
        let w = WeightVector::uniform(2);
        let r = rank_by_similarity(&ds, &CaseId::from("1"), &w).unwrap();
        assert_eq!(r.entries.len(), 1);
        let direct = weighted_distance(ds.schema(), &ds.cases()[0], &ds.cases()[1], &w).unwrap();
        assert_eq!(r.entries[0].distance, direct);
        assert!(matches!(
            rank_by_similarity(&ds, &CaseId::from("9"), &w),
            Err(SimilarityError::UnknownCase(_))
        ));
    }

    #[test]
    fn zero_weights_fall_back_to_id_order() {
        let cases = (1..=12)
            .map(|i| Case::new(i.to_string(), vec![(i % 3) as u32, (i % 2) as u32]))
            .collect();
        let ds = Dataset::new(schema(), cases, 0.5, Provenance::Imported).unwrap();
        let w = WeightVector::new(vec![0.0, 0.0]).unwrap();
        let r = rank_by_similarity(&ds, &CaseId::from("5"), &w).unwrap();
        let ids: Vec<_> = r.entries.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["1", "2", "3", "4", "6", "7", "8", "9", "10", "11", "12"]);
        assert!(r.entries.iter().all(|e| e.distance == 0.0));
    }

    #[test]
    fn discordant_pairs() {
        use RiskLabel::{High, Low};
        let all_high = Dataset::new(
            schema(),
            vec![predicted("1", vec![0, 0], High), predicted("2", vec![1, 1], High)],
            0.5,
            Provenance::Imported,
        )
        .unwrap();
        let w = WeightVector::uniform(2);
        assert!(nearest_discordant_pairs(&all_high, &w, 3).unwrap().is_empty());

        let ds = Dataset::new(
            schema(),
            vec![
                predicted("1", vec![0, 0], High),
                predicted("2", vec![2, 2], Low),
                predicted("3", vec![0, 0], Low),
            ],
            0.5,
            Provenance::Imported,
        )
        .unwrap();
        let pairs = nearest_discordant_pairs(&ds, &w, 10).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!((pairs[0].case_a.as_str(), pairs[0].case_b.as_str()), ("1", "3"));
        assert_eq!(pairs[0].distance, 0.0);

        let unpredicted = Dataset::new(schema(), vec![Case::new("1", vec![0, 0])], 0.5, Provenance::Imported).unwrap();
        assert_eq!(
            nearest_discordant_pairs(&unpredicted, &w, 1).unwrap_err(),
            SimilarityError::MissingPredictions
        );
    }

    #[test]
    fn ranking_json_shape() {
        let ds = Dataset::new(
            schema(),
            vec![Case::new("1", vec![0, 0]), Case::new("2", vec![1, 2])],
            0.5,
            Provenance::Imported,
        )
        .unwrap();
        let r = rank_by_similarity(&ds, &CaseId::from("1"), &WeightVector::uniform(2)).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["reference"], "1");
        assert_eq!(v["weights"], serde_json::json!([1.0, 1.0]));
        assert_eq!(v["entries"][0]["id"], "2");
        assert_eq!(v["entries"][0]["distance"], "1.41421356237");
        assert_eq!(v["entries"][0]["prediction"], serde_json::Value::Null);
    }
}
