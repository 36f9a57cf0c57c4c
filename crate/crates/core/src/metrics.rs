//! Per-subgroup classification statistics and group-fairness verdicts.
//!
//! Rates are kept as exact integer ratios; they only become decimals when
//! rendered or serialized.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::data::{Case, Dataset, RiskLabel};

pub const DEFAULT_EPSILON: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("UnknownAttribute: {0:?}")]
    UnknownAttribute(String),
    #[error("MissingPredictions: every case needs a prediction")]
    MissingPredictions,
    #[error("MissingLabels: every case needs a true label")]
    MissingLabels,
    #[error("BadQuery: {0}")]
    BadQuery(String),
}

impl MetricsError {
    pub fn name(&self) -> &'static str {
        match self {
            MetricsError::UnknownAttribute(_) => "UnknownAttribute",
            MetricsError::MissingPredictions => "MissingPredictions",
            MetricsError::MissingLabels => "MissingLabels",
            MetricsError::BadQuery(_) => "BadQuery",
        }
    }
}

/// Exact nonnegative fraction. Serializes as its decimal value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rate(Ratio<i64>);

impl Rate {
    pub fn new(numer: u64, denom: u64) -> Option<Rate> {
        (denom > 0).then(|| Rate(Ratio::new(numer as i64, denom as i64)))
    }

    pub fn zero() -> Rate {
        Rate(Ratio::from_integer(0))
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn value(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    /// `|self - other|`, exactly.
    pub fn abs_diff(&self, other: &Rate) -> Rate {
        let d = self.0 - other.0;
        Rate(if d < Ratio::from_integer(0) { -d } else { d })
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}", self.value())
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupStats {
    pub attribute: String,
    pub value: String,
    pub n: u64,
    /// Absent when the dataset carries no true labels.
    pub n_true_high: Option<u64>,
    pub n_true_low: Option<u64>,
    pub n_pred_high: u64,
    pub positive_rate: Option<Rate>,
    pub fpr: Option<Rate>,
    pub fnr: Option<Rate>,
    pub accuracy: Option<Rate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    StatisticalParity,
    EqualizedOdds,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::StatisticalParity => "statistical_parity",
            Criterion::EqualizedOdds => "equalized_odds",
        }
    }

    pub fn parse(s: &str) -> Option<Criterion> {
        match s {
            "statistical_parity" => Some(Criterion::StatisticalParity),
            "equalized_odds" => Some(Criterion::EqualizedOdds),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Violated,
    Undefined,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Satisfied => "SATISFIED",
            Verdict::Violated => "VIOLATED",
            Verdict::Undefined => "UNDEFINED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    pub attribute: String,
    pub criterion: Criterion,
    pub per_subgroup: Vec<SubgroupStats>,
    /// Largest pairwise gap over populated subgroups; absent when undefined.
    pub max_gap: Option<Rate>,
    /// Equalized odds only: the false-positive and false-negative components.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fpr_gap: Option<Rate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fnr_gap: Option<Rate>,
    pub epsilon: f64,
    pub verdict: Verdict,
}

/// Features the trained model must not use.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AwarenessConfig {
    pub excluded_attributes: Vec<String>,
}

impl AwarenessConfig {
    pub fn validate(&self, dataset: &Dataset) -> Result<Vec<usize>, MetricsError> {
        self.excluded_attributes
            .iter()
            .map(|a| attribute_index(dataset, a))
            .collect()
    }
}

fn attribute_index(dataset: &Dataset, attribute: &str) -> Result<usize, MetricsError> {
    dataset
        .schema()
        .index_of(attribute)
        .ok_or_else(|| MetricsError::UnknownAttribute(attribute.to_string()))
}

#[derive(Default, Clone, Copy)]
struct Counts {
    n: u64,
    pred_high: u64,
    true_high: u64,
    true_low: u64,
    false_pos: u64,
    false_neg: u64,
}

impl Counts {
    fn add(&mut self, case: &Case) {
        let pred = case.prediction.expect("predictions checked");
        self.n += 1;
        if pred == RiskLabel::High {
            self.pred_high += 1;
        }
        match (case.true_label, pred) {
            (Some(RiskLabel::High), RiskLabel::Low) => {
                self.true_high += 1;
                self.false_neg += 1;
            }
            (Some(RiskLabel::High), RiskLabel::High) => self.true_high += 1,
            (Some(RiskLabel::Low), RiskLabel::High) => {
                self.true_low += 1;
                self.false_pos += 1;
            }
            (Some(RiskLabel::Low), RiskLabel::Low) => self.true_low += 1,
            (None, _) => {}
        }
    }

    fn stats(&self, attribute: &str, value: &str, labelled: bool) -> SubgroupStats {
        let correct = self.n - self.false_pos - self.false_neg;
        SubgroupStats {
            attribute: attribute.to_string(),
            value: value.to_string(),
            n: self.n,
            n_true_high: labelled.then_some(self.true_high),
            n_true_low: labelled.then_some(self.true_low),
            n_pred_high: self.pred_high,
            positive_rate: Rate::new(self.pred_high, self.n),
            fpr: labelled.then(|| Rate::new(self.false_pos, self.true_low)).flatten(),
            fnr: labelled.then(|| Rate::new(self.false_neg, self.true_high)).flatten(),
            accuracy: labelled.then(|| Rate::new(correct, self.n)).flatten(),
        }
    }
}

fn require_predictions(dataset: &Dataset) -> Result<(), MetricsError> {
    if dataset.has_predictions() {
        Ok(())
    } else {
        Err(MetricsError::MissingPredictions)
    }
}

/// One entry per schema value of `attribute`, in schema order, including
/// empty subgroups. Label-dependent fields are filled only when every case
/// carries a true label.
pub fn subgroup_stats(dataset: &Dataset, attribute: &str) -> Result<Vec<SubgroupStats>, MetricsError> {
    let f = attribute_index(dataset, attribute)?;
    require_predictions(dataset)?;
    let feature = &dataset.schema().features()[f];
    let mut counts = vec![Counts::default(); feature.values.len()];
    for case in dataset.cases() {
        counts[case.value(f)].add(case);
    }
    let labelled = dataset.has_labels();
    Ok(counts
        .iter()
        .zip(&feature.values)
        .map(|(c, v)| c.stats(attribute, v, labelled))
        .collect())
}

/// Largest `|a - b|` over all pairs; zero when fewer than two rates.
fn max_pairwise_gap(rates: &[Rate]) -> Rate {
    match (rates.iter().min(), rates.iter().max()) {
        (Some(lo), Some(hi)) => hi.abs_diff(lo),
        _ => Rate::zero(),
    }
}

fn verdict_for(gap: Option<Rate>, epsilon: f64) -> Verdict {
    match gap {
        None => Verdict::Undefined,
        Some(g) if g.value() <= epsilon => Verdict::Satisfied,
        Some(_) => Verdict::Violated,
    }
}

pub fn statistical_parity_report(
    dataset: &Dataset,
    attribute: &str,
    epsilon: f64,
) -> Result<FairnessReport, MetricsError> {
    let per_subgroup = subgroup_stats(dataset, attribute)?;
    let rates: Vec<Rate> = per_subgroup
        .iter()
        .filter(|s| s.n > 0)
        .map(|s| s.positive_rate.expect("defined for n > 0"))
        .collect();
    let gap = max_pairwise_gap(&rates);
    Ok(FairnessReport {
        attribute: attribute.to_string(),
        criterion: Criterion::StatisticalParity,
        per_subgroup,
        max_gap: Some(gap),
        fpr_gap: None,
        fnr_gap: None,
        epsilon,
        verdict: verdict_for(Some(gap), epsilon),
    })
}

pub fn equalized_odds_report(
    dataset: &Dataset,
    attribute: &str,
    epsilon: f64,
) -> Result<FairnessReport, MetricsError> {
    let per_subgroup = subgroup_stats(dataset, attribute)?;
    if !dataset.has_labels() {
        return Err(MetricsError::MissingLabels);
    }
    let populated: Vec<&SubgroupStats> = per_subgroup.iter().filter(|s| s.n > 0).collect();
    let fprs: Option<Vec<Rate>> = populated.iter().map(|s| s.fpr).collect();
    let fnrs: Option<Vec<Rate>> = populated.iter().map(|s| s.fnr).collect();
    let (fpr_gap, fnr_gap) = match (fprs, fnrs) {
        (Some(fp), Some(fn_)) => (Some(max_pairwise_gap(&fp)), Some(max_pairwise_gap(&fn_))),
        _ => (None, None),
    };
    let max_gap = fpr_gap.zip(fnr_gap).map(|(a, b)| a.max(b));
    Ok(FairnessReport {
        attribute: attribute.to_string(),
        criterion: Criterion::EqualizedOdds,
        per_subgroup,
        max_gap,
        fpr_gap,
        fnr_gap,
        epsilon,
        verdict: verdict_for(max_gap, epsilon),
    })
}

pub fn fairness_report(
    dataset: &Dataset,
    criterion: Criterion,
    attribute: &str,
    epsilon: f64,
) -> Result<FairnessReport, MetricsError> {
    match criterion {
        Criterion::StatisticalParity => statistical_parity_report(dataset, attribute, epsilon),
        Criterion::EqualizedOdds => equalized_odds_report(dataset, attribute, epsilon),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PositiveRate,
    Fpr,
    Fnr,
    Accuracy,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::PositiveRate => "positive_rate",
            Metric::Fpr => "fpr",
            Metric::Fnr => "fnr",
            Metric::Accuracy => "accuracy",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        match s {
            "positive_rate" => Some(Metric::PositiveRate),
            "fpr" => Some(Metric::Fpr),
            "fnr" => Some(Metric::Fnr),
            "accuracy" => Some(Metric::Accuracy),
            _ => None,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::PositiveRate => "High-risk prediction rate",
            Metric::Fpr => "False positive rate",
            Metric::Fnr => "False negative rate",
            Metric::Accuracy => "Accuracy",
        }
    }

    fn needs_labels(self) -> bool {
        self != Metric::PositiveRate
    }

    fn of(self, s: &SubgroupStats) -> Option<Rate> {
        match self {
            Metric::PositiveRate => s.positive_rate,
            Metric::Fpr => s.fpr,
            Metric::Fnr => s.fnr,
            Metric::Accuracy => s.accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    /// One value per queried attribute.
    pub values: Vec<String>,
    pub n: u64,
    pub value: Option<Rate>,
}

/// Table behind the group view: one row per value combination of one or two
/// attributes, plus a one-paragraph textual reading of the chart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupViewSummary {
    pub attributes: Vec<String>,
    pub metric: Metric,
    pub rows: Vec<GroupRow>,
    pub max_gap: Option<Rate>,
    pub epsilon: f64,
    pub verdict: Verdict,
    pub description: String,
}

pub fn group_view_summary(
    dataset: &Dataset,
    attributes: &[&str],
    metric: Metric,
    epsilon: f64,
) -> Result<GroupViewSummary, MetricsError> {
    if attributes.is_empty() || attributes.len() > 2 {
        return Err(MetricsError::BadQuery(format!(
            "expected one or two attributes, got {}",
            attributes.len()
        )));
    }
    if attributes.len() == 2 && attributes[0] == attributes[1] {
        return Err(MetricsError::BadQuery("attributes must differ".into()));
    }
    let idx: Vec<usize> = attributes
        .iter()
        .map(|a| attribute_index(dataset, a))
        .collect::<Result<_, _>>()?;
    require_predictions(dataset)?;
    let labelled = dataset.has_labels();
    if metric.needs_labels() && !labelled {
        return Err(MetricsError::MissingLabels);
    }

    let features = dataset.schema().features();
    let sizes: Vec<usize> = idx.iter().map(|&f| features[f].values.len()).collect();
    let cells: usize = sizes.iter().product();
    let mut counts = vec![Counts::default(); cells];
    for case in dataset.cases() {
        let cell = idx
            .iter()
            .zip(&sizes)
            .fold(0, |acc, (&f, &k)| acc * k + case.value(f));
        counts[cell].add(case);
    }

    let joined = attributes.join(" x ");
    let rows: Vec<GroupRow> = counts
        .iter()
        .enumerate()
        .map(|(cell, c)| {
            let mut rem = cell;
            let mut values = vec![String::new(); idx.len()];
            for (slot, (&f, &k)) in idx.iter().zip(&sizes).enumerate().rev() {
                values[slot] = features[f].values[rem % k].clone();
                rem /= k;
            }
            let stats = c.stats(&joined, &values.join(" / "), labelled);
            GroupRow {
                values,
                n: c.n,
                value: metric.of(&stats),
            }
        })
        .collect();

    let defined: Vec<&GroupRow> = rows.iter().filter(|r| r.value.is_some()).collect();
    let any_populated_undefined = rows.iter().any(|r| r.n > 0 && r.value.is_none());
    let max_gap = if any_populated_undefined {
        None
    } else {
        Some(max_pairwise_gap(
            &defined.iter().map(|r| r.value.expect("filtered")).collect::<Vec<_>>(),
        ))
    };
    let description = describe(attributes, metric, &defined, max_gap);
    Ok(GroupViewSummary {
        attributes: attributes.iter().map(|a| a.to_string()).collect(),
        metric,
        rows,
        max_gap,
        epsilon,
        verdict: verdict_for(max_gap, epsilon),
        description,
    })
}

fn describe(attributes: &[&str], metric: Metric, defined: &[&GroupRow], gap: Option<Rate>) -> String {
    let name = |r: &GroupRow| {
        attributes
            .iter()
            .zip(&r.values)
            .map(|(a, v)| format!("{a} = {v}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let Some(first) = defined.first() else {
        return format!("{} is not defined for any subgroup.", metric.label());
    };
    // first maximum / first minimum in table order
    let mut hi = *first;
    let mut lo = *first;
    for r in defined {
        if r.value > hi.value {
            hi = r;
        }
        if r.value < lo.value {
            lo = r;
        }
    }
    let val = |r: &GroupRow| r.value.expect("defined");
    if defined.len() == 1 {
        return format!(
            "{} is {} for the only populated subgroup ({}, n = {}).",
            metric.label(),
            val(hi),
            name(hi),
            hi.n
        );
    }
    let mut text = format!(
        "{} is highest for {} ({}, n = {}) and lowest for {} ({}, n = {}); the gap is {}.",
        metric.label(),
        name(hi),
        val(hi),
        hi.n,
        name(lo),
        val(lo),
        lo.n,
        val(hi).abs_diff(&val(lo)),
    );
    if gap.is_none() {
        text.push_str(" Some populated subgroups have no defined value.");
    }
    text
}
