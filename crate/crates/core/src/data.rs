//! Case and dataset model: schemas, validation, CSV/JSON interchange, and a seeded
//! synthetic generator.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::Encoder;

/// Columns that may accompany the feature columns in a data CSV.
pub const OPTIONAL_COLUMNS: [&str; 4] = ["id", "true_label", "score", "prediction"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("SchemaError: {0}")]
    Schema(String),
    #[error("ValueError: row {row}, column {column:?}: {message}")]
    Value {
        row: usize,
        column: String,
        message: String,
    },
    #[error("DuplicateId: {0:?}")]
    DuplicateId(String),
    #[error("BadMarginals: feature {feature:?}: {message}")]
    BadMarginals { feature: String, message: String },
    #[error("HeaderError: {0}")]
    Header(String),
    #[error("CsvError: {0}")]
    Csv(#[from] csv::Error),
    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}

impl DataError {
    /// Stable error name surfaced by the service and the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            DataError::Schema(_) => "SchemaError",
            DataError::Value { .. } => "ValueError",
            DataError::DuplicateId(_) => "DuplicateId",
            DataError::BadMarginals { .. } => "BadMarginals",
            DataError::Header(_) => "HeaderError",
            DataError::Csv(_) => "CsvError",
            DataError::Json(_) => "JsonError",
            DataError::Io(_) => "IoError",
        }
    }

    fn value(row: usize, column: &str, message: impl Into<String>) -> Self {
        DataError::Value {
            row,
            column: column.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Categorical,
    Ordinal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
    pub values: Vec<String>,
    /// Numeric level per value; present for ordinal features only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    #[serde(default)]
    pub description: String,
}

impl FeatureDef {
    pub fn categorical(name: &str, values: &[&str]) -> Self {
        FeatureDef {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
            values: values.iter().map(|v| v.to_string()).collect(),
            levels: None,
            description: String::new(),
        }
    }

    /// Ordinal feature whose levels are the value positions `0, 1, 2, ...`.
    pub fn ordinal(name: &str, values: &[&str]) -> Self {
        FeatureDef {
            name: name.to_string(),
            kind: FeatureKind::Ordinal,
            values: values.iter().map(|v| v.to_string()).collect(),
            levels: Some((0..values.len()).map(|i| i as f64).collect()),
            description: String::new(),
        }
    }

    pub fn with_description(mut self, description: &str) -> Self {
        self.description = description.to_string();
        self
    }

    pub fn value_index(&self, label: &str) -> Option<usize> {
        self.values.iter().position(|v| v == label)
    }

    fn validate(&self) -> Result<(), DataError> {
        let err = |m: String| Err(DataError::Schema(m));
        if self.name.is_empty() {
            return err("feature name must be non-empty".into());
        }
        if self.values.len() < 2 {
            return err(format!("feature {:?} needs at least two values", self.name));
        }
        let mut seen = HashSet::new();
        for v in &self.values {
            if v.is_empty() {
                return err(format!("feature {:?} has an empty value label", self.name));
            }
            if !seen.insert(v.as_str()) {
                return err(format!("feature {:?} repeats value {v:?}", self.name));
            }
        }
        match (self.kind, &self.levels) {
            (FeatureKind::Categorical, None) => Ok(()),
            (FeatureKind::Categorical, Some(_)) => err(format!(
                "categorical feature {:?} must not carry levels",
                self.name
            )),
            (FeatureKind::Ordinal, None) => {
                err(format!("ordinal feature {:?} is missing levels", self.name))
            }
            (FeatureKind::Ordinal, Some(levels)) => {
                if levels.len() != self.values.len() {
                    return err(format!(
                        "ordinal feature {:?} has {} levels for {} values",
                        self.name,
                        levels.len(),
                        self.values.len()
                    ));
                }
                if levels.iter().any(|l| !l.is_finite()) {
                    return err(format!("ordinal feature {:?} has a non-finite level", self.name));
                }
                if levels.windows(2).any(|w| w[0] >= w[1]) {
                    return err(format!(
                        "ordinal feature {:?} levels must be strictly increasing",
                        self.name
                    ));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawSchema {
    features: Vec<FeatureDef>,
    #[serde(default)]
    sensitive_attributes: Vec<String>,
}

/// Ordered feature definitions plus the subset flagged as sensitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct FeatureSchema {
    features: Vec<FeatureDef>,
    sensitive_attributes: Vec<String>,
}

impl TryFrom<RawSchema> for FeatureSchema {
    type Error = DataError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        FeatureSchema::new(raw.features, raw.sensitive_attributes)
    }
}

impl FeatureSchema {
    pub fn new(
        features: Vec<FeatureDef>,
        sensitive_attributes: Vec<String>,
    ) -> Result<Self, DataError> {
        if features.is_empty() {
            return Err(DataError::Schema("schema has no features".into()));
        }
        let mut names = HashSet::new();
        for f in &features {
            f.validate()?;
            if OPTIONAL_COLUMNS.contains(&f.name.as_str()) {
                return Err(DataError::Schema(format!(
                    "feature name {:?} collides with a reserved column",
                    f.name
                )));
            }
            if !names.insert(f.name.as_str()) {
                return Err(DataError::Schema(format!("duplicate feature {:?}", f.name)));
            }
        }
        let mut seen = HashSet::new();
        for s in &sensitive_attributes {
            if !names.contains(s.as_str()) {
                return Err(DataError::Schema(format!(
                    "sensitive attribute {s:?} is not a feature"
                )));
            }
            if !seen.insert(s.as_str()) {
                return Err(DataError::Schema(format!(
                    "sensitive attribute {s:?} listed twice"
                )));
            }
        }
        Ok(FeatureSchema {
            features,
            sensitive_attributes,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn sensitive_attributes(&self) -> &[String] {
        &self.sensitive_attributes
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureDef> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }
}

/// Case identifier. Purely numeric ids order numerically, then everything else
/// lexicographically, so auto-assigned ids sort the way they were issued.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CaseId(String);

impl CaseId {
    pub fn new(id: impl Into<String>) -> Self {
        CaseId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn digits(&self) -> Option<&str> {
        if !self.0.is_empty() && self.0.bytes().all(|b| b.is_ascii_digit()) {
            Some(self.0.trim_start_matches('0'))
        } else {
            None
        }
    }
}

impl Ord for CaseId {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.digits(), other.digits()) {
            (Some(a), Some(b)) => a
                .len()
                .cmp(&b.len())
                .then_with(|| a.cmp(b))
                .then_with(|| self.0.cmp(&other.0)),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => self.0.cmp(&other.0),
        }
    }
}

impl PartialOrd for CaseId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CaseId {
    fn from(s: &str) -> Self {
        CaseId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskLabel {
    High,
    Low,
}

impl RiskLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RiskLabel::High => "high",
            RiskLabel::Low => "low",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "high" => Some(RiskLabel::High),
            "low" => Some(RiskLabel::Low),
            _ => None,
        }
    }
}

impl fmt::Display for RiskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `high` iff `score >= threshold`.
pub fn binarize(score: f64, threshold: f64) -> RiskLabel {
    if score >= threshold {
        RiskLabel::High
    } else {
        RiskLabel::Low
    }
}

/// One case. `values[i]` indexes into the value list of schema feature `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub id: CaseId,
    pub values: Vec<u32>,
    pub true_label: Option<RiskLabel>,
    pub score: Option<f64>,
    pub prediction: Option<RiskLabel>,
}

impl Case {
    pub fn new(id: impl Into<String>, values: Vec<u32>) -> Self {
        Case {
            id: CaseId::new(id),
            values,
            true_label: None,
            score: None,
            prediction: None,
        }
    }

    pub fn value(&self, feature: usize) -> usize {
        self.values[feature] as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Synthetic,
    Imported,
}

/// Validated, immutable collection of cases conforming to one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    cases: Vec<Case>,
    threshold: f64,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        schema: FeatureSchema,
        cases: Vec<Case>,
        threshold: f64,
        provenance: Provenance,
    ) -> Result<Self, DataError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(DataError::Schema(format!(
                "threshold {threshold} must lie in (0, 1)"
            )));
        }
        let mut ids = HashSet::with_capacity(cases.len());
        for (i, case) in cases.iter().enumerate() {
            let row = i + 1;
            if case.id.as_str().is_empty() {
                return Err(DataError::value(row, "id", "empty case id"));
            }
            if case.values.len() != schema.len() {
                return Err(DataError::value(
                    row,
                    "values",
                    format!(
                        "expected {} values, found {}",
                        schema.len(),
                        case.values.len()
                    ),
                ));
            }
            for (f, &v) in schema.features.iter().zip(&case.values) {
                if v as usize >= f.values.len() {
                    return Err(DataError::value(
                        row,
                        &f.name,
                        format!("value index {v} outside {} values", f.values.len()),
                    ));
                }
            }
            validate_outcome(row, case, threshold)?;
            if !ids.insert(case.id.as_str()) {
                return Err(DataError::DuplicateId(case.id.0.clone()));
            }
        }
        Ok(Dataset {
            schema,
            cases,
            threshold,
            provenance,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn cases(&self) -> &[Case] {
        &self.cases
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn case(&self, id: &CaseId) -> Option<&Case> {
        self.cases.iter().find(|c| &c.id == id)
    }

    pub fn position(&self, id: &CaseId) -> Option<usize> {
        self.cases.iter().position(|c| &c.id == id)
    }

    /// Value label of `case` for feature `feature`.
    pub fn label(&self, case: &Case, feature: usize) -> &str {
        &self.schema.features[feature].values[case.value(feature)]
    }

    pub fn has_predictions(&self) -> bool {
        self.cases.iter().all(|c| c.prediction.is_some())
    }

    pub fn has_labels(&self) -> bool {
        self.cases.iter().all(|c| c.true_label.is_some())
    }

    /// Copy of this dataset whose scores and predictions come from `scores`,
    /// binarized at `threshold`.
    pub fn with_scores(&self, scores: &[f64], threshold: f64) -> Result<Dataset, DataError> {
        if scores.len() != self.cases.len() {
            return Err(DataError::Schema(format!(
                "{} scores for {} cases",
                scores.len(),
                self.cases.len()
            )));
        }
        let cases = self
            .cases
            .iter()
            .zip(scores)
            .map(|(c, &s)| Case {
                score: Some(s),
                prediction: Some(binarize(s, threshold)),
                ..c.clone()
            })
            .collect();
        Dataset::new(self.schema.clone(), cases, threshold, self.provenance)
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let repr: DatasetRepr = serde_json::from_str(text)?;
        repr.into_dataset()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&DatasetRepr::from(self)).expect("dataset serializes")
    }

    /// Writes the cases as CSV: `id`, the features in schema order, then
    /// `true_label,score,prediction`. Absent optional values are empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DataError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header = vec!["id"];
        header.extend(self.schema.feature_names());
        header.extend(["true_label", "score", "prediction"]);
        w.write_record(&header)?;
        for case in &self.cases {
            let mut row: Vec<String> = Vec::with_capacity(header.len());
            row.push(case.id.0.clone());
            for f in 0..self.schema.len() {
                row.push(self.label(case, f).to_string());
            }
            row.push(case.true_label.map(|l| l.to_string()).unwrap_or_default());
            row.push(case.score.map(|s| s.to_string()).unwrap_or_default());
            row.push(case.prediction.map(|l| l.to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory csv write");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

fn validate_outcome(row: usize, case: &Case, threshold: f64) -> Result<(), DataError> {
    if let Some(score) = case.score {
        if !(0.0..=1.0).contains(&score) {
            return Err(DataError::value(
                row,
                "score",
                format!("score {score} outside [0, 1]"),
            ));
        }
        if let Some(pred) = case.prediction {
            if pred != binarize(score, threshold) {
                return Err(DataError::value(
                    row,
                    "prediction",
                    format!("prediction {pred} disagrees with score {score} at threshold {threshold}"),
                ));
            }
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseRepr {
    id: CaseId,
    values: Vec<String>,
    true_label: Option<RiskLabel>,
    score: Option<f64>,
    prediction: Option<RiskLabel>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetRepr {
    schema: FeatureSchema,
    cases: Vec<CaseRepr>,
    threshold: f64,
    provenance: Provenance,
}

impl From<&Dataset> for DatasetRepr {
    fn from(ds: &Dataset) -> Self {
        let cases = ds
            .cases
            .iter()
            .map(|c| CaseRepr {
                id: c.id.clone(),
                values: (0..ds.schema.len())
                    .map(|f| ds.label(c, f).to_string())
                    .collect(),
                true_label: c.true_label,
                score: c.score,
                prediction: c.prediction,
            })
            .collect();
        DatasetRepr {
            schema: ds.schema.clone(),
            cases,
            threshold: ds.threshold,
            provenance: ds.provenance,
        }
    }
}

impl DatasetRepr {
    fn into_dataset(self) -> Result<Dataset, DataError> {
        let schema = self.schema;
        let mut cases = Vec::with_capacity(self.cases.len());
        for (i, c) in self.cases.into_iter().enumerate() {
            let row = i + 1;
            if c.values.len() != schema.len() {
                return Err(DataError::value(
                    row,
                    "values",
                    format!("expected {} values, found {}", schema.len(), c.values.len()),
                ));
            }
            let values = schema
                .features
                .iter()
                .zip(&c.values)
                .map(|(f, label)| lookup(row, f, label))
                .collect::<Result<Vec<_>, _>>()?;
            cases.push(Case {
                id: c.id,
                values,
                true_label: c.true_label,
                score: c.score,
                prediction: c.prediction,
            });
        }
        Dataset::new(schema, cases, self.threshold, self.provenance)
    }
}

impl Serialize for Dataset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        DatasetRepr::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dataset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        DatasetRepr::deserialize(d)?
            .into_dataset()
            .map_err(serde::de::Error::custom)
    }
}

fn lookup(row: usize, feature: &FeatureDef, label: &str) -> Result<u32, DataError> {
    feature
        .value_index(label)
        .map(|i| i as u32)
        .ok_or_else(|| {
            DataError::value(
                row,
                &feature.name,
                format!("{label:?} is not a value of {}", feature.name),
            )
        })
}

/// Threshold and provenance recorded on datasets read from CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub threshold: f64,
    pub provenance: Provenance,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            threshold: 0.5,
            provenance: Provenance::Imported,
        }
    }
}

/// Reads a schema JSON file and a data CSV file into a validated dataset.
pub fn load_dataset(
    schema_file: &Path,
    data_file: &Path,
    options: LoadOptions,
) -> Result<Dataset, DataError> {
    let schema = FeatureSchema::from_json(&std::fs::read_to_string(schema_file)?)?;
    let data = std::fs::File::open(data_file)?;
    read_csv(schema, data, options)
}

/// Parses CSV rows against `schema`. Row numbers in errors are 1-based and
/// exclude the header. Cases without an `id` column receive `"1"`, `"2"`, ...
pub fn read_csv<R: Read>(
    schema: FeatureSchema,
    input: R,
    options: LoadOptions,
) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(input);
    let header = reader.headers()?.clone();

    let mut feature_col = vec![None; schema.len()];
    let mut optional_col: [Option<usize>; 4] = [None; 4];
    for (col, name) in header.iter().enumerate() {
        if let Some(f) = schema.index_of(name) {
            if feature_col[f].replace(col).is_some() {
                return Err(DataError::Header(format!("column {name:?} appears twice")));
            }
        } else if let Some(k) = OPTIONAL_COLUMNS.iter().position(|c| *c == name) {
            if optional_col[k].replace(col).is_some() {
                return Err(DataError::Header(format!("column {name:?} appears twice")));
            }
        } else {
            return Err(DataError::Header(format!("unknown column {name:?}")));
        }
    }
    if let Some(missing) = feature_col.iter().position(Option::is_none) {
        return Err(DataError::Header(format!(
            "missing feature column {:?}",
            schema.features[missing].name
        )));
    }
    let [id_col, label_col, score_col, pred_col] = optional_col;

    let mut cases = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let mut values = Vec::with_capacity(schema.len());
        for (f, col) in schema.features.iter().zip(&feature_col) {
            let cell = &record[col.expect("checked above")];
            if cell.is_empty() {
                return Err(DataError::value(row, &f.name, "missing value"));
            }
            values.push(lookup(row, f, cell)?);
        }
        let id = match id_col.map(|c| &record[c]) {
            Some(cell) if !cell.is_empty() => cell.to_string(),
            Some(_) => return Err(DataError::value(row, "id", "empty case id")),
            None => row.to_string(),
        };
        let true_label = parse_label(row, "true_label", label_col.map(|c| &record[c]))?;
        let prediction = parse_label(row, "prediction", pred_col.map(|c| &record[c]))?;
        let score = match score_col.map(|c| &record[c]) {
            None | Some("") => None,
            Some(cell) => Some(
                cell.parse::<f64>()
                    .ok()
                    .filter(|s| s.is_finite())
                    .ok_or_else(|| DataError::value(row, "score", format!("bad score {cell:?}")))?,
            ),
        };
        let case = Case {
            id: CaseId(id),
            values,
            true_label,
            score,
            prediction,
        };
        validate_outcome(row, &case, options.threshold)?;
        cases.push(case);
    }
    Dataset::new(schema, cases, options.threshold, options.provenance)
}

fn parse_label(row: usize, column: &str, cell: Option<&str>) -> Result<Option<RiskLabel>, DataError> {
    match cell {
        None | Some("") => Ok(None),
        Some(s) => RiskLabel::parse(s)
            .map(Some)
            .ok_or_else(|| DataError::value(row, column, format!("{s:?} is neither high nor low"))),
    }
}

/// Per-feature value probabilities, in schema value order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Marginals(BTreeMap<String, Vec<f64>>);

impl Marginals {
    pub fn uniform(schema: &FeatureSchema) -> Self {
        Marginals(
            schema
                .features
                .iter()
                .map(|f| {
                    let k = f.values.len();
                    (f.name.clone(), vec![1.0 / k as f64; k])
                })
                .collect(),
        )
    }

    pub fn set(&mut self, feature: &str, probabilities: Vec<f64>) -> &mut Self {
        self.0.insert(feature.to_string(), probabilities);
        self
    }

    pub fn get(&self, feature: &str) -> Option<&[f64]> {
        self.0.get(feature).map(Vec::as_slice)
    }

    fn validate(&self, schema: &FeatureSchema) -> Result<(), DataError> {
        let bad = |f: &str, m: String| DataError::BadMarginals {
            feature: f.to_string(),
            message: m,
        };
        if let Some(extra) = self.0.keys().find(|k| schema.index_of(k).is_none()) {
            return Err(bad(extra, "not a schema feature".into()));
        }
        for f in &schema.features {
            let p = self
                .get(&f.name)
                .ok_or_else(|| bad(&f.name, "no probabilities given".into()))?;
            if p.len() != f.values.len() {
                return Err(bad(
                    &f.name,
                    format!("{} probabilities for {} values", p.len(), f.values.len()),
                ));
            }
            if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(bad(&f.name, "probabilities must be finite and nonnegative".into()));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(bad(&f.name, format!("probabilities sum to {total}")));
            }
        }
        Ok(())
    }
}

/// Hidden linear score used to synthesise outcomes:
/// `logistic(coefficients . encode(case) + intercept + noise)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub noise_sd: f64,
}

impl ScoreModel {
    const COEFFICIENT_SEED: u64 = 0x5eed_0fa1;

    /// Fixed coefficients drawn once from a standard normal with a constant
    /// seed, so every schema has a stable recoverable signal.
    pub fn default_for(schema: &FeatureSchema) -> Self {
        let dim = Encoder::new(schema).dim();
        let mut rng = ChaCha8Rng::seed_from_u64(Self::COEFFICIENT_SEED);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        ScoreModel {
            coefficients: (0..dim).map(|_| normal.sample(&mut rng)).collect(),
            intercept: 0.0,
            noise_sd: 0.5,
        }
    }

    pub fn latent(&self, encoded: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(encoded)
            .map(|(c, x)| c * x)
            .sum::<f64>()
            + self.intercept
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Uniform over each feature's values when absent.
    #[serde(default)]
    pub marginals: Option<Marginals>,
    #[serde(default)]
    pub score_model: Option<ScoreModel>,
}

fn default_threshold() -> f64 {
    0.5
}

impl SyntheticConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        SyntheticConfig {
            n,
            seed,
            threshold: default_threshold(),
            marginals: None,
            score_model: None,
        }
    }
}

/// Samples `n` cases with features drawn independently from the marginals.
///
/// The stored score is the model's risk score, `logistic(latent + e1)`, and the
/// prediction is its binarization. The true label binarizes a second noisy
/// draw `logistic(latent + e2)`, so predictions and truth can disagree.
pub fn generate_synthetic(
    schema: &FeatureSchema,
    config: &SyntheticConfig,
) -> Result<Dataset, DataError> {
    if config.n == 0 {
        return Err(DataError::Schema("n must be at least 1".into()));
    }
    let marginals = config
        .marginals
        .clone()
        .unwrap_or_else(|| Marginals::uniform(schema));
    marginals.validate(schema)?;
    let encoder = Encoder::new(schema);
    let model = config
        .score_model
        .clone()
        .unwrap_or_else(|| ScoreModel::default_for(schema));
    if model.coefficients.len() != encoder.dim() {
        return Err(DataError::Schema(format!(
            "score model has {} coefficients for {} encoded coordinates",
            model.coefficients.len(),
            encoder.dim()
        )));
    }
    let noise = Normal::new(0.0, model.noise_sd.max(0.0))
        .map_err(|e| DataError::Schema(format!("bad noise scale: {e}")))?;
    let samplers = schema
        .features
        .iter()
        .map(|f| {
            WeightedIndex::new(marginals.get(&f.name).expect("validated")).map_err(|e| {
                DataError::BadMarginals {
                    feature: f.name.clone(),
                    message: e.to_string(),
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut encoded = vec![0.0; encoder.dim()];
    let mut cases = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let values: Vec<u32> = samplers.iter().map(|s| s.sample(&mut rng) as u32).collect();
        encoder.encode_into(&values, &mut encoded);
        let latent = model.latent(&encoded);
        let score = logistic(latent + noise.sample(&mut rng));
        let truth = logistic(latent + noise.sample(&mut rng));
        cases.push(Case {
            id: CaseId((i + 1).to_string()),
            values,
            true_label: Some(binarize(truth, config.threshold)),
            score: Some(score),
            prediction: Some(binarize(score, config.threshold)),
        });
    }
    Dataset::new(schema.clone(), cases, config.threshold, Provenance::Synthetic)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn age_schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![
                FeatureDef::ordinal("victim_age", &["infant", "toddler", "child", "adolescent"]),
                FeatureDef::categorical("victim_gender", &["female", "male"]),
            ],
            vec!["victim_age".into()],
        )
        .unwrap()
    }

    #[test]
    fn binarize_boundary_is_inclusive() {
        assert_eq!(binarize(0.5, 0.5), RiskLabel::High);
        assert_eq!(binarize(0.0, 0.5), RiskLabel::Low);
        assert_eq!(binarize(0.4999999, 0.5), RiskLabel::Low);
    }

    #[test]
    fn schema_rejects_bad_definitions() {
        let dup = FeatureSchema::new(
            vec![
                FeatureDef::categorical("a", &["x", "y"]),
                FeatureDef::categorical("a", &["x", "y"]),
            ],
            vec![],
        );
        assert!(matches!(dup, Err(DataError::Schema(_))));

        let unknown_sensitive = FeatureSchema::new(
            vec![FeatureDef::categorical("a", &["x", "y"])],
            vec!["b".into()],
        );
        assert!(matches!(unknown_sensitive, Err(DataError::Schema(_))));

        let mut bad_levels = FeatureDef::ordinal("a", &["x", "y", "z"]);
        bad_levels.levels = Some(vec![0.0, 2.0, 1.0]);
        assert!(FeatureSchema::new(vec![bad_levels], vec![]).is_err());

        let single = FeatureDef::categorical("a", &["x"]);
        assert!(FeatureSchema::new(vec![single], vec![]).is_err());

        let reserved = FeatureDef::categorical("score", &["x", "y"]);
        assert!(FeatureSchema::new(vec![reserved], vec![]).is_err());
    }

    #[test]
    fn schema_json_validates_on_parse() {
        let text = r#"{"features":[{"name":"a","kind":"ordinal","values":["x","y"]}],"sensitive_attributes":[]}"#;
        assert!(matches!(FeatureSchema::from_json(text), Err(DataError::Json(_))));
    }

    #[test]
    fn empty_csv_gives_empty_dataset() {
        let csv = "victim_age,victim_gender\n";
        let ds = read_csv(age_schema(), csv.as_bytes(), LoadOptions::default()).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn unknown_value_names_row_and_column() {
        let csv = "victim_age,victim_gender\ninfant,male\nteenager,female\n";
        match read_csv(age_schema(), csv.as_bytes(), LoadOptions::default()) {
            Err(DataError::Value { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "victim_age");
            }
            other => panic!("expected ValueError, got {other:?}"),
        }
    }

    #[test]
    fn missing_ids_are_sequential() {
        let csv = "victim_gender,victim_age\nmale,infant\nfemale,child\n";
        let ds = read_csv(age_schema(), csv.as_bytes(), LoadOptions::default()).unwrap();
        let ids: Vec<_> = ds.cases().iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["1", "2"]);
        assert_eq!(ds.label(&ds.cases()[1], 0), "child");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let csv = "id,victim_age,victim_gender\n7,infant,male\n7,child,female\n";
        assert!(matches!(
            read_csv(age_schema(), csv.as_bytes(), LoadOptions::default()),
            Err(DataError::DuplicateId(id)) if id == "7"
        ));
    }

    #[test]
    fn missing_cells_and_columns_are_rejected() {
        let csv = "victim_age,victim_gender\n,male\n";
        assert!(matches!(
            read_csv(age_schema(), csv.as_bytes(), LoadOptions::default()),
            Err(DataError::Value { .. })
        ));
        let csv = "victim_age\ninfant\n";
        assert!(matches!(
            read_csv(age_schema(), csv.as_bytes(), LoadOptions::default()),
            Err(DataError::Header(_))
        ));
    }

    #[test]
    fn prediction_must_agree_with_score() {
        let csv = "victim_age,victim_gender,score,prediction\ninfant,male,0.7,low\n";
        assert!(matches!(
            read_csv(age_schema(), csv.as_bytes(), LoadOptions::default()),
            Err(DataError::Value { column, .. }) if column == "prediction"
        ));
    }

    #[test]
    fn case_ids_order_numerically_first() {
        let mut ids: Vec<CaseId> = ["10", "2", "b", "a", "1", "01"]
            .iter()
            .map(|s| CaseId::from(*s))
            .collect();
        ids.sort();
        let got: Vec<_> = ids.iter().map(CaseId::as_str).collect();
        assert_eq!(got, ["01", "1", "2", "10", "a", "b"]);
    }

    #[test]
    fn generator_is_deterministic() {
        let schema = age_schema();
        let a = generate_synthetic(&schema, &SyntheticConfig::new(1, 7)).unwrap();
        let b = generate_synthetic(&schema, &SyntheticConfig::new(1, 7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn degenerate_marginal_pins_the_value() {
        let schema = age_schema();
        let mut m = Marginals::uniform(&schema);
        m.set("victim_age", vec![1.0, 0.0, 0.0, 0.0]);
        let mut config = SyntheticConfig::new(200, 3);
        config.marginals = Some(m);
        let ds = generate_synthetic(&schema, &config).unwrap();
        assert!(ds.cases().iter().all(|c| ds.label(c, 0) == "infant"));
    }

    #[test]
    fn bad_marginals_name_the_feature() {
        let schema = age_schema();
        let mut m = Marginals::uniform(&schema);
        m.set("victim_gender", vec![0.6, 0.6]);
        let mut config = SyntheticConfig::new(5, 1);
        config.marginals = Some(m.clone());
        assert!(matches!(
            generate_synthetic(&schema, &config),
            Err(DataError::BadMarginals { feature, .. }) if feature == "victim_gender"
        ));
        m.set("victim_gender", vec![1.0]);
        config.marginals = Some(m);
        assert!(matches!(
            generate_synthetic(&schema, &config),
            Err(DataError::BadMarginals { .. })
        ));
    }
}
