//! Linear logistic scoring trained under elicited pairwise constraints,
//! group-fairness penalties and attribute exclusions.
//!
//! Parameters are laid out as the coefficients of every encoded coordinate of
//! the non-excluded features, followed by the intercept.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{borda_aggregate, PairJudgment};
use crate::data::{logistic, CaseId, Dataset, FeatureSchema, RiskLabel};
use crate::elicitation::PairChoice;
use crate::encoding::{Coordinate, Encoder};
use crate::metrics::{equalized_odds_report, statistical_parity_report};

pub const DEFAULT_MARGIN: f64 = 0.1;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("EmptyDataset")]
    EmptyDataset,
    #[error("MissingLabels: every training case needs a true label")]
    MissingLabels,
    #[error("NonFinite: {0}")]
    NonFinite(String),
    #[error("SchemaMismatch: {0}")]
    SchemaMismatch(String),
    #[error("UnknownCase: {0:?}")]
    UnknownCase(String),
    #[error("UnknownAttribute: {0:?}")]
    UnknownAttribute(String),
    #[error("BadConfig: {0}")]
    BadConfig(String),
    #[error("BadModel: {0}")]
    BadModel(String),
    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),
}

impl TrainingError {
    pub fn name(&self) -> &'static str {
        match self {
            TrainingError::EmptyDataset => "EmptyDataset",
            TrainingError::MissingLabels => "MissingLabels",
            TrainingError::NonFinite(_) => "NonFinite",
            TrainingError::SchemaMismatch(_) => "SchemaMismatch",
            TrainingError::UnknownCase(_) => "UnknownCase",
            TrainingError::UnknownAttribute(_) => "UnknownAttribute",
            TrainingError::BadConfig(_) => "BadConfig",
            TrainingError::BadModel(_) => "BadModel",
            TrainingError::Json(_) => "JsonError",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairConstraint {
    /// `hi` should score at least `margin` above `lo`.
    Strict {
        hi: CaseId,
        lo: CaseId,
        margin: f64,
        #[serde(default = "unit")]
        weight: f64,
    },
    /// `a` and `b` should score the same.
    Equal {
        a: CaseId,
        b: CaseId,
        #[serde(default)]
        margin: f64,
        #[serde(default = "unit")]
        weight: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl PairConstraint {
    pub fn strict(hi: impl Into<CaseId>, lo: impl Into<CaseId>, margin: f64) -> Self {
        PairConstraint::Strict {
            hi: hi.into(),
            lo: lo.into(),
            margin,
            weight: 1.0,
        }
    }

    pub fn equal(a: impl Into<CaseId>, b: impl Into<CaseId>) -> Self {
        PairConstraint::Equal {
            a: a.into(),
            b: b.into(),
            margin: 0.0,
            weight: 1.0,
        }
    }

    pub fn cases(&self) -> (&CaseId, &CaseId) {
        match self {
            PairConstraint::Strict { hi, lo, .. } => (hi, lo),
            PairConstraint::Equal { a, b, .. } => (a, b),
        }
    }

    fn validate(&self) -> Result<(), TrainingError> {
        let (margin, weight) = match self {
            PairConstraint::Strict { hi, lo, margin, weight } => {
                if hi == lo {
                    return Err(TrainingError::BadConfig(format!(
                        "strict constraint compares {hi} with itself"
                    )));
                }
                (*margin, *weight)
            }
            PairConstraint::Equal { margin, weight, .. } => (*margin, *weight),
        };
        if !margin.is_finite() || margin < 0.0 || !weight.is_finite() || weight < 0.0 {
            return Err(TrainingError::BadConfig(
                "constraint margin and weight must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintPolicy {
    /// One constraint per substantive response.
    PerParticipant,
    /// One constraint per compared pair, following the Borda winner.
    #[default]
    BordaAggregate,
}

impl ConstraintPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per_participant" => Some(ConstraintPolicy::PerParticipant),
            "borda_aggregate" => Some(ConstraintPolicy::BordaAggregate),
            _ => None,
        }
    }
}

/// Maps pairwise judgments to constraints. Abstentions are dropped. Under
/// [`ConstraintPolicy::BordaAggregate`] judgments are grouped by unordered
/// pair, in case-id order, and each pair yields one constraint: strict toward
/// the higher Borda score, equal on a tie.
pub fn derive_constraints(
    dataset: &Dataset,
    judgments: &[PairJudgment],
    policy: ConstraintPolicy,
    margin: f64,
) -> Result<Vec<PairConstraint>, TrainingError> {
    for j in judgments {
        for id in [&j.case_a, &j.case_b] {
            if dataset.case(id).is_none() {
                return Err(TrainingError::UnknownCase(id.to_string()));
            }
        }
    }
    let map = |j: &PairJudgment| match j.choice {
        PairChoice::PrioritizeA => Some(PairConstraint::strict(j.case_a.clone(), j.case_b.clone(), margin)),
        PairChoice::PrioritizeB => Some(PairConstraint::strict(j.case_b.clone(), j.case_a.clone(), margin)),
        PairChoice::Equal => Some(PairConstraint::equal(j.case_a.clone(), j.case_b.clone())),
        PairChoice::NotComfortable | PairChoice::NoOpinion => None,
    };
    match policy {
        ConstraintPolicy::PerParticipant => Ok(judgments.iter().filter_map(map).collect()),
        ConstraintPolicy::BordaAggregate => {
            let mut by_pair: BTreeMap<(CaseId, CaseId), Vec<PairJudgment>> = BTreeMap::new();
            for j in judgments.iter().filter(|j| j.choice.is_substantive()) {
                let key = if j.case_a <= j.case_b {
                    (j.case_a.clone(), j.case_b.clone())
                } else {
                    (j.case_b.clone(), j.case_a.clone())
                };
                by_pair.entry(key).or_default().push(j.clone());
            }
            let mut out = Vec::with_capacity(by_pair.len());
            for ((a, b), js) in by_pair {
                if a == b {
                    continue;
                }
                let result = borda_aggregate(&[a.clone(), b.clone()], &js)
                    .map_err(|e| TrainingError::UnknownCase(e.to_string()))?;
                let (first, second) = (&result.ranking[0], &result.ranking[1]);
                out.push(if first.score == second.score {
                    PairConstraint::equal(a, b)
                } else {
                    PairConstraint::strict(first.case_id.clone(), second.case_id.clone(), margin)
                });
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub lambda_pair: f64,
    pub lambda_parity: f64,
    pub lambda_odds: f64,
    /// Margin used when deriving strict constraints.
    pub margin: f64,
    pub l2: f64,
    pub excluded_attributes: Vec<String>,
    /// Attributes the gap penalties and reports cover; `None` means the
    /// schema's sensitive attributes.
    pub fairness_attributes: Option<Vec<String>>,
    pub threshold: f64,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop once the gradient's Euclidean norm falls below this.
    pub tolerance: f64,
    pub initial_step: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambda_pair: 1.0,
            lambda_parity: 0.0,
            lambda_odds: 0.0,
            margin: DEFAULT_MARGIN,
            l2: 1e-3,
            excluded_attributes: Vec::new(),
            fairness_attributes: None,
            threshold: 0.5,
            seed: 0,
            max_iterations: 20_000,
            tolerance: 1e-9,
            initial_step: 1.0,
        }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<(), TrainingError> {
        let nonneg = [
            ("lambda_pair", self.lambda_pair),
            ("lambda_parity", self.lambda_parity),
            ("lambda_odds", self.lambda_odds),
            ("margin", self.margin),
            ("l2", self.l2),
            ("tolerance", self.tolerance),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(TrainingError::BadConfig(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(TrainingError::BadConfig(format!(
                "threshold {} must lie in (0, 1)",
                self.threshold
            )));
        }
        if !(self.initial_step.is_finite() && self.initial_step > 0.0) {
            return Err(TrainingError::BadConfig("initial_step must be positive".into()));
        }
        Ok(())
    }

    fn fairness_indices(&self, schema: &FeatureSchema) -> Result<Vec<(String, usize)>, TrainingError> {
        let names: Vec<String> = match &self.fairness_attributes {
            Some(v) => v.clone(),
            None => schema.sensitive_attributes().to_vec(),
        };
        names
            .into_iter()
            .map(|n| {
                let i = schema
                    .index_of(&n)
                    .ok_or_else(|| TrainingError::UnknownAttribute(n.clone()))?;
                Ok((n, i))
            })
            .collect()
    }
}

fn excluded_indices(schema: &FeatureSchema, config: &TrainingConfig) -> Result<Vec<usize>, TrainingError> {
    config
        .excluded_attributes
        .iter()
        .map(|a| schema.index_of(a).ok_or_else(|| TrainingError::UnknownAttribute(a.clone())))
        .collect()
}

/// Per-term breakdown of the objective. Penalty terms already include their
/// multipliers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub cross_entropy: f64,
    pub l2: f64,
    pub pair_strict: f64,
    pub pair_equal: f64,
    pub parity: f64,
    pub odds: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.cross_entropy + self.l2 + self.pair_strict + self.pair_equal + self.parity + self.odds
    }
}

struct IndexedConstraint {
    strict: bool,
    i: usize,
    j: usize,
    margin: f64,
    weight: f64,
}

/// Groups over which one smoothed gap is taken: case indices per subgroup.
struct GapFamily {
    groups: Vec<Vec<usize>>,
}

impl GapFamily {
    /// Sum over pairs of populated groups of the squared mean-score gap, and
    /// its derivative with respect to each score.
    fn eval(&self, scores: &[f64], d_scores: Option<&mut [f64]>, scale: f64) -> f64 {
        let means: Vec<f64> = self
            .groups
            .iter()
            .map(|g| g.iter().map(|&i| scores[i]).sum::<f64>() / g.len() as f64)
            .collect();
        let k = means.len() as f64;
        let sum: f64 = means.iter().sum();
        let mut value = 0.0;
        for a in 0..means.len() {
            for b in a + 1..means.len() {
                value += (means[a] - means[b]).powi(2);
            }
        }
        if let Some(d) = d_scores {
            for (g, m) in self.groups.iter().zip(&means) {
                // d/dm_g of sum_{a<b} (m_a - m_b)^2 = 2 (k m_g - sum m)
                let dm = scale * 2.0 * (k * m - sum) / g.len() as f64;
                for &i in g {
                    d[i] += dm;
                }
            }
        }
        value * scale
    }
}

/// The training objective over a fixed dataset and constraint set.
pub struct Objective {
    encoder: Encoder,
    x: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    dim: usize,
    l2: f64,
    lambda_pair: f64,
    lambda_parity: f64,
    lambda_odds: f64,
    constraints: Vec<IndexedConstraint>,
    parity: Vec<GapFamily>,
    odds: Vec<GapFamily>,
}

impl Objective {
    pub fn new(
        dataset: &Dataset,
        constraints: &[PairConstraint],
        config: &TrainingConfig,
    ) -> Result<Self, TrainingError> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(TrainingError::EmptyDataset);
        }
        if !dataset.has_labels() {
            return Err(TrainingError::MissingLabels);
        }
        let schema = dataset.schema();
        let encoder = Encoder::with_excluded(schema, &excluded_indices(schema, config)?);
        let dim = encoder.dim();
        let n = dataset.len();
        let mut x = vec![0.0; n * dim];
        for (row, case) in x.chunks_mut(dim.max(1)).zip(dataset.cases()) {
            if dim > 0 {
                encoder.encode_into(&case.values, row);
            }
        }
        let y = dataset
            .cases()
            .iter()
            .map(|c| if c.true_label == Some(RiskLabel::High) { 1.0 } else { 0.0 })
            .collect::<Vec<_>>();
        let position = |id: &CaseId| {
            dataset
                .position(id)
                .ok_or_else(|| TrainingError::UnknownCase(id.to_string()))
        };
        let constraints = constraints
            .iter()
            .map(|c| {
                c.validate()?;
                Ok(match c {
                    PairConstraint::Strict { hi, lo, margin, weight } => IndexedConstraint {
                        strict: true,
                        i: position(hi)?,
                        j: position(lo)?,
                        margin: *margin,
                        weight: *weight,
                    },
                    PairConstraint::Equal { a, b, weight, .. } => IndexedConstraint {
                        strict: false,
                        i: position(a)?,
                        j: position(b)?,
                        margin: 0.0,
                        weight: *weight,
                    },
                })
            })
            .collect::<Result<Vec<_>, TrainingError>>()?;

        let mut parity = Vec::new();
        let mut odds = Vec::new();
        for (_, f) in config.fairness_indices(schema)? {
            let k = schema.features()[f].values.len();
            let mut all = vec![Vec::new(); k];
            let mut low = vec![Vec::new(); k];
            let mut high = vec![Vec::new(); k];
            for (i, case) in dataset.cases().iter().enumerate() {
                let v = case.value(f);
                all[v].push(i);
                if y[i] > 0.5 {
                    high[v].push(i);
                } else {
                    low[v].push(i);
                }
            }
            let populated = |g: Vec<Vec<usize>>| GapFamily {
                groups: g.into_iter().filter(|v| !v.is_empty()).collect(),
            };
            parity.push(populated(all));
            odds.push(populated(low));
            odds.push(populated(high));
        }
        Ok(Objective {
            encoder,
            x,
            y,
            n,
            dim,
            l2: config.l2,
            lambda_pair: config.lambda_pair,
            lambda_parity: config.lambda_parity,
            lambda_odds: config.lambda_odds,
            constraints,
            parity,
            odds,
        })
    }

    /// Number of parameters: coefficients plus the intercept.
    pub fn len(&self) -> usize {
        self.dim + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coordinates(&self) -> &[Coordinate] {
        self.encoder.coordinates()
    }

    fn logits(&self, params: &[f64]) -> Vec<f64> {
        let (beta, b) = params.split_at(self.dim);
        (0..self.n)
            .map(|i| {
                let row = &self.x[i * self.dim..(i + 1) * self.dim];
                row.iter().zip(beta).map(|(x, w)| x * w).sum::<f64>() + b[0]
            })
            .collect()
    }

    pub fn scores(&self, params: &[f64]) -> Vec<f64> {
        self.logits(params).into_iter().map(logistic).collect()
    }

    fn evaluate(&self, params: &[f64], grad: Option<&mut [f64]>) -> LossTerms {
        let z = self.logits(params);
        let s: Vec<f64> = z.iter().map(|&v| logistic(v)).collect();
        let mut terms = LossTerms::default();
        let want_grad = grad.is_some();
        // derivative of the objective with respect to each score
        let mut d_s = vec![0.0; if want_grad { self.n } else { 0 }];
        let mut d_z = vec![0.0; if want_grad { self.n } else { 0 }];

        let inv_n = 1.0 / self.n as f64;
        for i in 0..self.n {
            terms.cross_entropy += (softplus(z[i]) - self.y[i] * z[i]) * inv_n;
            if want_grad {
                d_z[i] = (s[i] - self.y[i]) * inv_n;
            }
        }
        terms.l2 = self.l2 * params[..self.dim].iter().map(|b| b * b).sum::<f64>();

        for c in &self.constraints {
            let scale = self.lambda_pair * c.weight;
            if c.strict {
                let slack = c.margin - (s[c.i] - s[c.j]);
                if slack > 0.0 {
                    terms.pair_strict += scale * slack * slack;
                    if want_grad {
                        d_s[c.i] -= 2.0 * scale * slack;
                        d_s[c.j] += 2.0 * scale * slack;
                    }
                }
            } else {
                let diff = s[c.i] - s[c.j];
                terms.pair_equal += scale * diff * diff;
                if want_grad {
                    d_s[c.i] += 2.0 * scale * diff;
                    d_s[c.j] -= 2.0 * scale * diff;
                }
            }
        }
        for fam in &self.parity {
            let d = want_grad.then_some(d_s.as_mut_slice());
            terms.parity += fam.eval(&s, d, self.lambda_parity);
        }
        for fam in &self.odds {
            let d = want_grad.then_some(d_s.as_mut_slice());
            terms.odds += fam.eval(&s, d, self.lambda_odds);
        }

        if let Some(g) = grad {
            g.fill(0.0);
            for i in 0..self.n {
                let dz = d_z[i] + d_s[i] * s[i] * (1.0 - s[i]);
                if dz == 0.0 {
                    continue;
                }
                let row = &self.x[i * self.dim..(i + 1) * self.dim];
                for (gk, xk) in g[..self.dim].iter_mut().zip(row) {
                    *gk += dz * xk;
                }
                g[self.dim] += dz;
            }
            for (gk, bk) in g[..self.dim].iter_mut().zip(&params[..self.dim]) {
                *gk += 2.0 * self.l2 * bk;
            }
        }
        terms
    }

    pub fn terms(&self, params: &[f64]) -> LossTerms {
        self.evaluate(params, None)
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        self.terms(params).total()
    }

    /// Analytic gradient of [`Objective::value`].
    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.len()];
        self.evaluate(params, Some(&mut g));
        g
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    #[serde(flatten)]
    pub coordinate: Coordinate,
    pub coefficient: f64,
}

/// A trained linear scorer. Coordinates of excluded attributes are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedModel {
    pub schema: FeatureSchema,
    pub coefficients: Vec<CoefficientEntry>,
    pub intercept: f64,
    pub threshold: f64,
    pub config: TrainingConfig,
}

impl ConstrainedModel {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    /// Parses a model and checks its coefficients line up with the encoding
    /// of its schema minus the excluded attributes.
    pub fn from_json(text: &str) -> Result<Self, TrainingError> {
        let model: ConstrainedModel = serde_json::from_str(text)?;
        model.encoder()?;
        if !(model.threshold > 0.0 && model.threshold < 1.0) {
            return Err(TrainingError::BadModel(format!("threshold {}", model.threshold)));
        }
        if !model.intercept.is_finite() || model.coefficients.iter().any(|c| !c.coefficient.is_finite()) {
            return Err(TrainingError::BadModel("non-finite parameter".into()));
        }
        Ok(model)
    }

    fn encoder(&self) -> Result<Encoder, TrainingError> {
        let excluded = excluded_indices(&self.schema, &self.config)
            .map_err(|e| TrainingError::BadModel(e.to_string()))?;
        let encoder = Encoder::with_excluded(&self.schema, &excluded);
        let expected = encoder.coordinates();
        let ok = expected.len() == self.coefficients.len()
            && expected.iter().zip(&self.coefficients).all(|(e, c)| *e == c.coordinate);
        if !ok {
            return Err(TrainingError::BadModel(
                "coefficients do not match the schema encoding".into(),
            ));
        }
        Ok(encoder)
    }

    fn check_schema(&self, dataset: &Dataset) -> Result<(), TrainingError> {
        if dataset.schema() != &self.schema {
            return Err(TrainingError::SchemaMismatch(
                "dataset schema differs from the model's".into(),
            ));
        }
        Ok(())
    }

    /// Scores for every case of `dataset`, in order.
    pub fn scores(&self, dataset: &Dataset) -> Result<Vec<f64>, TrainingError> {
        self.check_schema(dataset)?;
        let encoder = self.encoder()?;
        let mut buf = vec![0.0; encoder.dim()];
        Ok(dataset
            .cases()
            .iter()
            .map(|c| {
                encoder.encode_into(&c.values, &mut buf);
                let z: f64 = buf
                    .iter()
                    .zip(&self.coefficients)
                    .map(|(x, c)| x * c.coefficient)
                    .sum::<f64>()
                    + self.intercept;
                logistic(z)
            })
            .collect())
    }

    fn params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.coefficients.iter().map(|c| c.coefficient).collect();
        p.push(self.intercept);
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeGaps {
    pub attribute: String,
    pub parity_gap: Option<f64>,
    pub fpr_gap: Option<f64>,
    pub fnr_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub converged: bool,
    /// Stopped because no step could lower the objective any further, before
    /// the gradient tolerance was met.
    pub stalled: bool,
    pub gradient_norm: f64,
    pub final_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub objective: f64,
    pub terms: LossTerms,
    pub strict_constraints: usize,
    pub strict_satisfied: usize,
    /// Share of strict constraints met with their margin; absent without any.
    pub strict_satisfied_fraction: Option<f64>,
    /// Gaps of hard predictions at the model threshold.
    pub gaps: Vec<AttributeGaps>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<Convergence>,
}

impl TrainingReport {
    pub fn summary(&self) -> String {
        let mut out = format!("objective {:.6}\n", self.objective);
        let t = &self.terms;
        out += &format!(
            "  cross_entropy {:.6}  l2 {:.6}  pair_strict {:.6}  pair_equal {:.6}  parity {:.6}  odds {:.6}\n",
            t.cross_entropy, t.l2, t.pair_strict, t.pair_equal, t.parity, t.odds
        );
        out += &format!(
            "strict constraints satisfied: {}/{}\n",
            self.strict_satisfied, self.strict_constraints
        );
        let show = |r: &Option<f64>| r.map(|r| format!("{r:.3}")).unwrap_or_else(|| "undefined".into());
        for g in &self.gaps {
            out += &format!(
                "{}: parity gap {}, fpr gap {}, fnr gap {}\n",
                g.attribute,
                show(&g.parity_gap),
                show(&g.fpr_gap),
                show(&g.fnr_gap)
            );
        }
        if let Some(c) = &self.convergence {
            out += &format!(
                "{} after {} iterations, gradient norm {:.3e}\n",
                if c.converged { "converged" } else { "stopped" },
                c.iterations,
                c.gradient_norm
            );
        }
        out
    }
}

/// Recomputes every report quantity for `model` on `dataset`.
pub fn evaluate(
    model: &ConstrainedModel,
    dataset: &Dataset,
    constraints: &[PairConstraint],
) -> Result<TrainingReport, TrainingError> {
    model.check_schema(dataset)?;
    model.encoder()?;
    let objective = Objective::new(dataset, constraints, &model.config)?;
    let params = model.params();
    let terms = objective.terms(&params);
    let scores = objective.scores(&params);

    let mut strict = 0;
    let mut satisfied = 0;
    for c in &objective.constraints {
        if c.strict {
            strict += 1;
            if scores[c.i] - scores[c.j] >= c.margin {
                satisfied += 1;
            }
        }
    }

    let scored = dataset
        .with_scores(&scores, model.threshold)
        .map_err(|e| TrainingError::NonFinite(e.to_string()))?;
    let gaps = model
        .config
        .fairness_indices(dataset.schema())?
        .into_iter()
        .map(|(name, _)| {
            let sp = statistical_parity_report(&scored, &name, 0.0)
                .map_err(|e| TrainingError::UnknownAttribute(e.to_string()))?;
            let eo = equalized_odds_report(&scored, &name, 0.0)
                .map_err(|e| TrainingError::UnknownAttribute(e.to_string()))?;
            Ok(AttributeGaps {
                attribute: name,
                parity_gap: sp.max_gap.map(|r| r.value()),
                fpr_gap: eo.fpr_gap.map(|r| r.value()),
                fnr_gap: eo.fnr_gap.map(|r| r.value()),
            })
        })
        .collect::<Result<Vec<_>, TrainingError>>()?;

    Ok(TrainingReport {
        objective: terms.total(),
        terms,
        strict_constraints: strict,
        strict_satisfied: satisfied,
        strict_satisfied_fraction: (strict > 0).then(|| satisfied as f64 / strict as f64),
        gaps,
        convergence: None,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const HISTORY: usize = 10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory quasi-Newton descent with Armijo backtracking from a seeded
/// start. Every step is a pure function of the inputs, so runs reproduce bit
/// for bit.
pub fn train(
    dataset: &Dataset,
    constraints: &[PairConstraint],
    config: &TrainingConfig,
) -> Result<(ConstrainedModel, TrainingReport), TrainingError> {
    let objective = Objective::new(dataset, constraints, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let jitter = Normal::new(0.0, 0.01).expect("valid normal");
    let mut params: Vec<f64> = (0..objective.len()).map(|_| jitter.sample(&mut rng)).collect();

    let mut value = objective.value(&params);
    let mut grad = objective.gradient(&params);
    let mut history: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> =
        std::collections::VecDeque::with_capacity(HISTORY);
    let mut step = config.initial_step;
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;
    let mut candidate = vec![0.0; params.len()];
    while iterations < config.max_iterations {
        let gnorm = norm(&grad);
        if !value.is_finite() || !gnorm.is_finite() {
            return Err(TrainingError::NonFinite(format!(
                "objective diverged at iteration {iterations}"
            )));
        }
        if gnorm <= config.tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        // two-loop recursion for the search direction
        let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &dir);
            for (d, yk) in dir.iter_mut().zip(y) {
                *d -= a * yk;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &dir);
            for (d, sk) in dir.iter_mut().zip(s) {
                *d += (a - b) * sk;
            }
        }
        let mut slope = dot(&grad, &dir);
        if slope.is_nan() || slope >= 0.0 {
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }

        step = if history.is_empty() { config.initial_step.min(1.0 / gnorm) } else { 1.0 };
        let mut accepted = false;
        while step > 1e-20 {
            for ((c, p), d) in candidate.iter_mut().zip(&params).zip(&dir) {
                *c = p + step * d;
            }
            let v = objective.value(&candidate);
            // a step must strictly lower the objective; at floating-point
            // resolution the sufficient-decrease test alone accepts standing still
            if v.is_finite() && v < value && v <= value + 1e-4 * step * slope {
                value = v;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if history.is_empty() {
                // no descent possible at floating-point resolution
                converged = true;
                stalled = true;
                break;
            }
            history.clear();
            continue;
        }
        let new_grad = objective.gradient(&candidate);
        let s: Vec<f64> = candidate.iter().zip(&params).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == HISTORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut params, &mut candidate);
        grad = new_grad;
    }

    let (beta, intercept) = params.split_at(objective.dim);
    let model = ConstrainedModel {
        schema: dataset.schema().clone(),
        coefficients: objective
            .coordinates()
            .iter()
            .zip(beta)
            .map(|(c, &b)| CoefficientEntry {
                coordinate: c.clone(),
                coefficient: b,
            })
            .collect(),
        intercept: intercept[0],
        threshold: config.threshold,
        config: config.clone(),
    };
    let mut report = evaluate(&model, dataset, constraints)?;
    report.convergence = Some(Convergence {
        iterations,
        converged,
        stalled,
        gradient_norm: norm(&grad),
        final_step: step,
    });
    Ok((model, report))
}
