//! Transport-independent operations behind every endpoint. The HTTP layer and
//! the CLI both call these and serialize the results the same way.

use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use fairlicit_core::analysis::{summarize, AggregateSummary, ResponseMatrix};
use fairlicit_core::data::{read_csv, LoadOptions};
use fairlicit_core::elicitation::{
    start_session, Acknowledgment, Exploration, NextItem, ParticipantProfile, Question,
    ResponsePayload, Role, Session, SessionConfig, StartRequest,
};
use fairlicit_core::fixtures::{self, FixturePairSet};
use fairlicit_core::metrics::{
    fairness_report, group_view_summary, Criterion, FairnessReport, GroupViewSummary, Metric,
    DEFAULT_EPSILON,
};
use fairlicit_core::similarity::{
    nearest_discordant_pairs, rank_by_similarity, DiscordantPair, SimilarityRanking, WeightVector,
};
use fairlicit_core::training::{
    derive_constraints, evaluate, train, ConstrainedModel, ConstraintPolicy, TrainingConfig,
    TrainingReport,
};
use fairlicit_core::{
    generate_synthetic, CaseId, Dataset, FeatureSchema, Provenance, SyntheticConfig,
};
use serde::{Deserialize, Serialize};

use fairlicit_core::wire::to_json_line;

use crate::error::ApiError;
use crate::store::{check_id, Kind, Store};

/// Datasets present in every fresh store.
pub fn seed_datasets() -> Vec<(&'static str, Dataset)> {
    vec![
        (fixtures::ELICITATION_DATASET_ID, fixtures::elicitation_dataset()),
        ("parity_violated", fixtures::parity_example(true)),
        ("parity_satisfied", fixtures::parity_example(false)),
        ("odds_violated", fixtures::odds_example(true)),
        ("odds_satisfied", fixtures::odds_example(false)),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub cases: usize,
    pub features: usize,
    pub sensitive_attributes: Vec<String>,
    pub threshold: f64,
    pub provenance: Provenance,
    pub has_predictions: bool,
    pub has_labels: bool,
}

/// Body of `POST /datasets` when importing CSV rows.
#[derive(Debug, Clone, Deserialize)]
pub struct CsvImport {
    pub schema: FeatureSchema,
    pub csv: String,
    #[serde(default)]
    pub threshold: Option<f64>,
}

/// Body of `POST /datasets/synthetic`. The bundled schema is used when none
/// is given.
#[derive(Debug, Clone, Deserialize)]
pub struct SyntheticRequest {
    #[serde(default)]
    pub schema: Option<FeatureSchema>,
    #[serde(flatten)]
    pub config: SyntheticConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct MetricsQuery {
    pub attribute: String,
    #[serde(default)]
    pub attribute2: Option<String>,
    #[serde(default)]
    pub metric: Option<String>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct FairnessQuery {
    pub criterion: String,
    pub attribute: String,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct SimilarityQuery {
    pub reference: String,
    #[serde(default)]
    pub weights: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct DiscordantQuery {
    #[serde(default)]
    pub weights: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
}

fn default_dataset_ref() -> String {
    fixtures::ELICITATION_DATASET_ID.to_string()
}

fn default_participant() -> ParticipantProfile {
    ParticipantProfile::new(Role::Other)
}

/// Body of `POST /sessions`. A session id is generated when absent.
#[derive(Debug, Clone, Deserialize)]
pub struct NewSession {
    #[serde(default)]
    pub session_id: Option<String>,
    #[serde(default = "default_participant")]
    pub participant: ParticipantProfile,
    #[serde(default = "default_dataset_ref")]
    pub dataset_ref: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub config: SessionConfig,
}

/// What a client needs to resume a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub dataset_ref: String,
    pub seed: u64,
    pub stage: u8,
    pub closed: bool,
    pub transcript_len: usize,
    pub answered: usize,
    /// Served but not yet answered.
    pub pending: Option<Question>,
    pub elicited_weights: Option<WeightVector>,
}

impl SessionStatus {
    fn of(s: &Session) -> Self {
        let answered: std::collections::HashSet<&str> =
            s.responses().map(|r| r.question_id()).collect();
        SessionStatus {
            session_id: s.session_id.clone(),
            dataset_ref: s.dataset_ref.clone(),
            seed: s.seed,
            stage: s.stage,
            closed: s.is_closed(),
            transcript_len: s.transcript.len(),
            answered: answered.len(),
            pending: s.served().find(|q| !answered.contains(q.id())).cloned(),
            elicited_weights: s.elicited_weights.clone(),
        }
    }
}

/// Body of `POST /train`. An empty session list means every stored session;
/// the dataset defaults to the one the sessions ran against.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct TrainRequest {
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub sessions: Vec<String>,
    #[serde(default)]
    pub policy: ConstraintPolicy,
    #[serde(default)]
    pub config: TrainingConfig,
}

/// Body of `POST /models`: an externally produced model to evaluate and keep.
#[derive(Debug, Clone, Deserialize)]
pub struct ModelImport {
    pub dataset: String,
    pub model: ConstrainedModel,
}

/// Stored next to every model; served by `GET /models/{id}/report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model_id: String,
    pub dataset: String,
    pub sessions: Vec<String>,
    pub policy: Option<ConstraintPolicy>,
    pub constraints: usize,
    pub report: TrainingReport,
}

type Clock = Box<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct Service {
    store: Store,
    epsilon_default: f64,
    clock: Clock,
    fixtures: FixturePairSet,
}

fn parse_weights(text: Option<&str>, dataset: &Dataset) -> Result<WeightVector, ApiError> {
    let w = match text {
        None | Some("") => WeightVector::uniform(dataset.schema().len()),
        Some(t) => WeightVector::parse_list(t)?,
    };
    w.check_len(dataset.schema())?;
    Ok(w)
}

impl Service {
    /// Opens (creating if needed) the store at `root` and seeds the bundled
    /// datasets that are missing.
    pub fn open(root: impl Into<PathBuf>, epsilon_default: f64) -> Result<Self, ApiError> {
        let store = Store::open(root)?;
        for (id, ds) in seed_datasets() {
            if !store.exists(Kind::Dataset, id) {
                match store.create(Kind::Dataset, id, &ds.to_json()) {
                    Ok(()) => {}
                    Err(e) if e.name == "AlreadyExists" => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(Service {
            store,
            epsilon_default,
            clock: Box::new(Utc::now),
            fixtures: FixturePairSet::bundled(),
        })
    }

    /// Replaces the wall clock used to timestamp session events.
    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn epsilon_default(&self) -> f64 {
        self.epsilon_default
    }

    // datasets

    pub fn list_datasets(&self) -> Result<Vec<DatasetInfo>, ApiError> {
        self.store
            .list(Kind::Dataset)?
            .into_iter()
            .map(|id| {
                let ds = self.store.dataset(&id)?;
                Ok(DatasetInfo {
                    cases: ds.len(),
                    features: ds.schema().len(),
                    sensitive_attributes: ds.schema().sensitive_attributes().to_vec(),
                    threshold: ds.threshold(),
                    provenance: ds.provenance(),
                    has_predictions: ds.has_predictions(),
                    has_labels: ds.has_labels(),
                    id,
                })
            })
            .collect()
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<Dataset>, ApiError> {
        self.store.dataset(id)
    }

    /// The stored dataset file, byte for byte.
    pub fn dataset_json(&self, id: &str) -> Result<String, ApiError> {
        self.store.read(Kind::Dataset, id)
    }

    fn put_dataset(&self, id: Option<&str>, ds: &Dataset) -> Result<Created, ApiError> {
        let text = ds.to_json();
        match id {
            Some(id) => {
                self.store.create(Kind::Dataset, id, &text)?;
                Ok(Created { id: id.to_string() })
            }
            None => Ok(Created {
                id: self.store.create_next(Kind::Dataset, &text)?,
            }),
        }
    }

    /// Imports either a full dataset document or `{schema, csv, threshold}`.
    pub fn import_dataset(&self, id: Option<&str>, body: &str) -> Result<Created, ApiError> {
        let value: serde_json::Value = serde_json::from_str(body)?;
        let ds = if value.get("csv").is_some() {
            let req: CsvImport = serde_json::from_value(value)?;
            let options = LoadOptions {
                threshold: req.threshold.unwrap_or(0.5),
                provenance: Provenance::Imported,
            };
            read_csv(req.schema, req.csv.as_bytes(), options)?
        } else {
            Dataset::from_json(body)?
        };
        self.put_dataset(id, &ds)
    }

    pub fn synthetic_dataset(&self, id: Option<&str>, req: SyntheticRequest) -> Result<Created, ApiError> {
        let schema = req.schema.unwrap_or_else(fixtures::schema);
        let ds = generate_synthetic(&schema, &req.config)?;
        self.put_dataset(id, &ds)
    }

    pub fn metrics(&self, id: &str, q: &MetricsQuery) -> Result<GroupViewSummary, ApiError> {
        metrics_on(&*self.dataset(id)?, q, self.epsilon_default)
    }

    pub fn fairness(&self, id: &str, q: &FairnessQuery) -> Result<FairnessReport, ApiError> {
        fairness_on(&*self.dataset(id)?, q, self.epsilon_default)
    }

    pub fn similarity(&self, id: &str, q: &SimilarityQuery) -> Result<SimilarityRanking, ApiError> {
        similarity_on(&*self.dataset(id)?, q)
    }

    pub fn discordant(&self, id: &str, q: &DiscordantQuery) -> Result<Vec<DiscordantPair>, ApiError> {
        discordant_on(&*self.dataset(id)?, q)
    }

    // sessions

    fn load_session(&self, id: &str) -> Result<Session, ApiError> {
        Ok(Session::import(&self.store.read(Kind::Session, id)?)?)
    }

    pub fn start_session(&self, req: NewSession) -> Result<SessionStatus, ApiError> {
        let dataset = match self.store.dataset(&req.dataset_ref) {
            Ok(ds) => Some(ds),
            Err(e) if e.name == "UnknownDataset" => None,
            Err(e) => return Err(e),
        };
        let build = |session_id: &str| -> Result<Session, ApiError> {
            Ok(start_session(
                StartRequest {
                    session_id: session_id.to_string(),
                    participant: req.participant.clone(),
                    dataset_ref: req.dataset_ref.clone(),
                    seed: req.seed,
                    config: req.config.clone(),
                },
                dataset.as_deref(),
                &self.fixtures,
                (self.clock)(),
            )?)
        };
        let session = match &req.session_id {
            Some(id) => {
                check_id(id)?;
                let s = build(id)?;
                self.store.create(Kind::Session, id, &s.export())?;
                s
            }
            None => self.store.with_next_id(Kind::Session, |id| {
                let s = build(id)?;
                self.store.create(Kind::Session, id, &s.export())?;
                Ok(s)
            })?,
        };
        Ok(SessionStatus::of(&session))
    }

    pub fn session_status(&self, id: &str) -> Result<SessionStatus, ApiError> {
        Ok(SessionStatus::of(&self.load_session(id)?))
    }

    pub fn list_sessions(&self) -> Result<Vec<SessionStatus>, ApiError> {
        self.store
            .list(Kind::Session)?
            .iter()
            .map(|id| self.session_status(id))
            .collect()
    }

    /// Loads, mutates and stores one session under its lock. The file is
    /// rewritten only when the transcript changed.
    fn with_session<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session, DateTime<Utc>) -> Result<T, ApiError>,
    ) -> Result<T, ApiError> {
        let lock = self.store.session_lock(id);
        let _guard = lock.lock().expect("session lock");
        let mut session = self.load_session(id)?;
        let before = session.transcript.len();
        let out = f(&mut session, (self.clock)())?;
        if session.transcript.len() != before {
            self.store.write(Kind::Session, id, &session.export())?;
        }
        Ok(out)
    }

    pub fn next_question(&self, id: &str) -> Result<NextItem, ApiError> {
        self.with_session(id, |s, at| Ok(s.next_question(at)?))
    }

    pub fn record_response(&self, id: &str, body: &str) -> Result<Acknowledgment, ApiError> {
        let payload = ResponsePayload::from_json(body)?;
        self.with_session(id, |s, at| Ok(s.record_response(&payload, at)?))
    }

    pub fn record_event(&self, id: &str, exploration: Exploration) -> Result<Acknowledgment, ApiError> {
        self.with_session(id, |s, at| Ok(s.record_exploration(exploration, at)?))
    }

    pub fn advance(&self, id: &str) -> Result<Acknowledgment, ApiError> {
        self.with_session(id, |s, at| Ok(s.advance(at)?))
    }

    /// The stored session log, byte for byte.
    pub fn export_session(&self, id: &str) -> Result<String, ApiError> {
        self.store.read(Kind::Session, id)
    }

    /// Stores an exported session log as-is after validating it.
    pub fn import_session(&self, log: &str) -> Result<SessionStatus, ApiError> {
        let s = Session::import(log)?;
        check_id(&s.session_id)?;
        self.store.create(Kind::Session, &s.session_id, &s.export())?;
        Ok(SessionStatus::of(&s))
    }

    fn sessions(&self, ids: &[String]) -> Result<Vec<Session>, ApiError> {
        let ids = if ids.is_empty() {
            self.store.list(Kind::Session)?
        } else {
            ids.to_vec()
        };
        ids.iter().map(|id| self.load_session(id)).collect()
    }

    // analysis and training

    pub fn summary(&self, sessions: &[String]) -> Result<AggregateSummary, ApiError> {
        summary_of(&self.sessions(sessions)?)
    }

    pub fn train(&self, req: TrainRequest) -> Result<ModelRecord, ApiError> {
        let sessions = self.sessions(&req.sessions)?;
        let dataset_id = training_dataset(&req, &sessions);
        let ds = self.dataset(&dataset_id)?;
        let (model, constraints, report) = train_on(&ds, &sessions, &req)?;
        let session_ids = sessions.iter().map(|s| s.session_id.clone()).collect();
        self.save_model(&dataset_id, session_ids, Some(req.policy), constraints, &model, report)
    }

    /// Stores a model trained elsewhere together with its training record.
    pub fn save_model(
        &self,
        dataset: &str,
        sessions: Vec<String>,
        policy: Option<ConstraintPolicy>,
        constraints: usize,
        model: &ConstrainedModel,
        report: TrainingReport,
    ) -> Result<ModelRecord, ApiError> {
        self.store.with_next_id(Kind::Model, |id| {
            let record = ModelRecord {
                model_id: id.to_string(),
                dataset: dataset.to_string(),
                sessions,
                policy,
                constraints,
                report,
            };
            self.put_model(id, model, &record)?;
            Ok(record)
        })
    }

    fn put_model(&self, id: &str, model: &ConstrainedModel, record: &ModelRecord) -> Result<(), ApiError> {
        self.store.create(Kind::Model, id, &model.to_json())?;
        self.store.write(Kind::Report, id, &to_json_line(record))
    }

    pub fn import_model(&self, req: ModelImport) -> Result<ModelRecord, ApiError> {
        let ds = self.dataset(&req.dataset)?;
        // re-parse to apply the same validation as a stored model
        let model = ConstrainedModel::from_json(&req.model.to_json())?;
        let report = evaluate(&model, &ds, &[])?;
        self.store.with_next_id(Kind::Model, |id| {
            let record = ModelRecord {
                model_id: id.to_string(),
                dataset: req.dataset.clone(),
                sessions: Vec::new(),
                policy: None,
                constraints: 0,
                report,
            };
            self.put_model(id, &model, &record)?;
            Ok(record)
        })
    }

    /// The stored model file, byte for byte.
    pub fn model_json(&self, id: &str) -> Result<String, ApiError> {
        self.store.read(Kind::Model, id)
    }

    /// The stored training record, byte for byte.
    pub fn model_report(&self, id: &str) -> Result<String, ApiError> {
        self.store.read(Kind::Report, id)
    }
}

/// Epsilon used when a query does not give one.
pub const EPSILON_DEFAULT: f64 = DEFAULT_EPSILON;

fn epsilon(given: Option<f64>, default: f64) -> Result<f64, ApiError> {
    let e = given.unwrap_or(default);
    if e.is_finite() && e >= 0.0 {
        Ok(e)
    } else {
        Err(ApiError::invalid("BadQuery", format!("epsilon {e} must be finite and >= 0")))
    }
}

pub fn metrics_on(ds: &Dataset, q: &MetricsQuery, epsilon_default: f64) -> Result<GroupViewSummary, ApiError> {
    let metric = match q.metric.as_deref() {
        None | Some("") => Metric::PositiveRate,
        Some(m) => Metric::parse(m)
            .ok_or_else(|| ApiError::invalid("BadQuery", format!("unknown metric {m:?}")))?,
    };
    let mut attributes = vec![q.attribute.as_str()];
    if let Some(a) = q.attribute2.as_deref().filter(|a| !a.is_empty()) {
        attributes.push(a);
    }
    Ok(group_view_summary(ds, &attributes, metric, epsilon(q.epsilon, epsilon_default)?)?)
}

pub fn fairness_on(ds: &Dataset, q: &FairnessQuery, epsilon_default: f64) -> Result<FairnessReport, ApiError> {
    let criterion = Criterion::parse(&q.criterion).ok_or_else(|| {
        ApiError::invalid("BadQuery", format!("unknown criterion {:?}", q.criterion))
    })?;
    Ok(fairness_report(ds, criterion, &q.attribute, epsilon(q.epsilon, epsilon_default)?)?)
}

pub fn similarity_on(ds: &Dataset, q: &SimilarityQuery) -> Result<SimilarityRanking, ApiError> {
    let w = parse_weights(q.weights.as_deref(), ds)?;
    Ok(rank_by_similarity(ds, &CaseId::new(q.reference.as_str()), &w)?)
}

pub fn discordant_on(ds: &Dataset, q: &DiscordantQuery) -> Result<Vec<DiscordantPair>, ApiError> {
    let w = parse_weights(q.weights.as_deref(), ds)?;
    Ok(nearest_discordant_pairs(ds, &w, q.k.unwrap_or(10))?)
}

pub fn summary_of(sessions: &[Session]) -> Result<AggregateSummary, ApiError> {
    Ok(summarize(&ResponseMatrix::from_sessions(sessions)?)?)
}

/// The dataset a training request runs on: the one named, else the one the
/// first session ran against.
pub fn training_dataset(req: &TrainRequest, sessions: &[Session]) -> String {
    req.dataset
        .clone()
        .or_else(|| sessions.first().map(|s| s.dataset_ref.clone()))
        .unwrap_or_else(default_dataset_ref)
}

/// Derives constraints from `sessions` and trains on `ds`. Returns the model,
/// the number of constraints and the training report.
pub fn train_on(
    ds: &Dataset,
    sessions: &[Session],
    req: &TrainRequest,
) -> Result<(ConstrainedModel, usize, TrainingReport), ApiError> {
    let judgments = if sessions.is_empty() {
        Vec::new()
    } else {
        ResponseMatrix::from_sessions(sessions)?.pair_judgments()
    };
    let constraints = derive_constraints(ds, &judgments, req.policy, req.config.margin)?;
    let (model, report) = train(ds, &constraints, &req.config)?;
    Ok((model, constraints.len(), report))
}
