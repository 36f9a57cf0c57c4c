//! Staged elicitation sessions.
//!
//! A session walks one participant through four stages:
//!
//! 1. the fixed comparison pairs with predictions hidden, followed by the
//!    group-fairness questions (one per sensitive attribute and criterion);
//! 2. seeded random pairs with predictions shown;
//! 3. similarity exploration, where weight changes define the participant's
//!    similarity metric;
//! 4. group-view exploration.
//!
//! Every served question, response, exploration event and stage change is
//! appended to the transcript. Callers pass the timestamp of each operation,
//! which keeps replays deterministic.

use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CaseId, Dataset};
use crate::fixtures::FixturePairSet;
use crate::metrics::Metric;
use crate::similarity::WeightVector;

pub const LOG_FORMAT: &str = "fairlicit-session";
pub const LOG_VERSION: u32 = 1;

pub const FIRST_STAGE: u8 = 1;
pub const LAST_STAGE: u8 = 4;

#[derive(Debug, Error)]
pub enum ElicitationError {
    #[error("UnknownDataset: {0:?}")]
    UnknownDataset(String),
    #[error("MissingPredictions: dataset {0:?} has cases without predictions")]
    MissingPredictions(String),
    #[error("MissingFixtureCases: dataset lacks fixture case {0:?}")]
    MissingFixtureCases(String),
    #[error("SessionClosed")]
    SessionClosed,
    #[error("UnknownQuestion: {0:?} was never served")]
    UnknownQuestion(String),
    #[error("DuplicateResponse: {0:?} is already answered")]
    DuplicateResponse(String),
    #[error("InvalidChoice: field {field:?} has value {value:?}; expected one of {expected}")]
    InvalidChoice {
        field: &'static str,
        value: String,
        expected: &'static str,
    },
    #[error("WrongStage: {action} requires stage {required}, session is in stage {actual}")]
    WrongStage {
        action: &'static str,
        required: u8,
        actual: u8,
    },
    #[error("IncompleteStage: {0} item(s) of stage {1} are unanswered")]
    IncompleteStage(usize, u8),
    #[error("UnknownCase: {0:?}")]
    UnknownCase(String),
    #[error("UnknownAttribute: {0:?}")]
    UnknownAttribute(String),
    #[error("BadWeights: {0}")]
    BadWeights(String),
    #[error("BadLog: {0}")]
    BadLog(String),
    #[error("ReplayMismatch: event {0} did not reproduce")]
    ReplayMismatch(u64),
    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),
}

impl ElicitationError {
    pub fn name(&self) -> &'static str {
        use ElicitationError::*;
        match self {
            UnknownDataset(_) => "UnknownDataset",
            MissingPredictions(_) => "MissingPredictions",
            MissingFixtureCases(_) => "MissingFixtureCases",
            SessionClosed => "SessionClosed",
            UnknownQuestion(_) => "UnknownQuestion",
            DuplicateResponse(_) => "DuplicateResponse",
            InvalidChoice { .. } => "InvalidChoice",
            WrongStage { .. } => "WrongStage",
            IncompleteStage(..) => "IncompleteStage",
            UnknownCase(_) => "UnknownCase",
            UnknownAttribute(_) => "UnknownAttribute",
            BadWeights(_) => "BadWeights",
            BadLog(_) => "BadLog",
            ReplayMismatch(_) => "ReplayMismatch",
            Json(_) => "JsonError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    SocialWorker,
    Parent,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub role: Role,
    #[serde(default)]
    pub demographics: BTreeMap<String, String>,
}

impl ParticipantProfile {
    pub fn new(role: Role) -> Self {
        ParticipantProfile {
            role,
            demographics: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionSource {
    FixedFixture,
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseQuestion {
    pub question_id: String,
    pub case_a: CaseId,
    pub case_b: CaseId,
    pub show_predictions: bool,
    pub source: QuestionSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairChoice {
    Equal,
    PrioritizeA,
    PrioritizeB,
    NotComfortable,
    NoOpinion,
}

impl PairChoice {
    pub const ALL: [PairChoice; 5] = [
        PairChoice::Equal,
        PairChoice::PrioritizeA,
        PairChoice::PrioritizeB,
        PairChoice::NotComfortable,
        PairChoice::NoOpinion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PairChoice::Equal => "equal",
            PairChoice::PrioritizeA => "prioritize_a",
            PairChoice::PrioritizeB => "prioritize_b",
            PairChoice::NotComfortable => "not_comfortable",
            PairChoice::NoOpinion => "no_opinion",
        }
    }

    pub fn parse(s: &str) -> Option<PairChoice> {
        PairChoice::ALL.into_iter().find(|c| c.as_str() == s)
    }

    /// Equal or one of the two prioritizations.
    pub fn is_substantive(self) -> bool {
        matches!(
            self,
            PairChoice::Equal | PairChoice::PrioritizeA | PairChoice::PrioritizeB
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupCriterion {
    Unawareness,
    StatisticalParity,
    EqualizedOdds,
}

impl GroupCriterion {
    pub const ALL: [GroupCriterion; 3] = [
        GroupCriterion::Unawareness,
        GroupCriterion::StatisticalParity,
        GroupCriterion::EqualizedOdds,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupCriterion::Unawareness => "unawareness",
            GroupCriterion::StatisticalParity => "statistical_parity",
            GroupCriterion::EqualizedOdds => "equalized_odds",
        }
    }

    pub fn parse(s: &str) -> Option<GroupCriterion> {
        GroupCriterion::ALL.into_iter().find(|c| c.as_str() == s)
    }

    /// Fixed question copy, framed as a necessary condition for fairness.
    pub fn question_text(self, attribute: &str) -> String {
        let attr = attribute.replace('_', " ");
        let condition = match self {
            GroupCriterion::Unawareness => {
                format!("{attr} is not used as a factor when the algorithm predicts risk")
            }
            GroupCriterion::StatisticalParity => format!(
                "the algorithm predicts high risk at the same rate for every {attr} group"
            ),
            GroupCriterion::EqualizedOdds => format!(
                "the algorithm has the same false positive rate and the same false negative rate for every {attr} group"
            ),
        };
        format!("For the algorithm to be fair, must this hold: {condition}?")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupChoice {
    Yes,
    No,
    NoOpinion,
}

impl GroupChoice {
    pub const ALL: [GroupChoice; 3] = [GroupChoice::Yes, GroupChoice::No, GroupChoice::NoOpinion];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupChoice::Yes => "yes",
            GroupChoice::No => "no",
            GroupChoice::NoOpinion => "no_opinion",
        }
    }

    pub fn parse(s: &str) -> Option<GroupChoice> {
        GroupChoice::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupFairnessQuestion {
    pub question_id: String,
    pub attribute: String,
    pub criterion: GroupCriterion,
    pub text: String,
}

impl GroupFairnessQuestion {
    pub fn new(attribute: &str, criterion: GroupCriterion) -> Self {
        GroupFairnessQuestion {
            question_id: group_question_id(attribute, criterion),
            attribute: attribute.to_string(),
            criterion,
            text: criterion.question_text(attribute),
        }
    }
}

pub fn group_question_id(attribute: &str, criterion: GroupCriterion) -> String {
    format!("gf-{attribute}-{}", criterion.as_str())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Question {
    Pairwise(PairwiseQuestion),
    GroupFairness(GroupFairnessQuestion),
}

impl Question {
    pub fn id(&self) -> &str {
        match self {
            Question::Pairwise(q) => &q.question_id,
            Question::GroupFairness(q) => &q.question_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    CaseByCase,
    Similarity,
    Group,
}

/// Returned by [`Session::next_question`] when the current stage has no
/// question to serve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePrompt {
    pub stage: u8,
    pub view: View,
    /// Stage reached by advancing; `None` when advancing closes the session.
    pub advance_to: Option<u8>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "item", rename_all = "snake_case")]
pub enum NextItem {
    Question(Question),
    Prompt(StagePrompt),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseResponse {
    pub question_id: String,
    pub choice: PairChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupFairnessResponse {
    pub question_id: String,
    pub choice: GroupChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Pairwise(PairwiseResponse),
    GroupFairness(GroupFairnessResponse),
}

impl Response {
    pub fn question_id(&self) -> &str {
        match self {
            Response::Pairwise(r) => &r.question_id,
            Response::GroupFairness(r) => &r.question_id,
        }
    }
}

/// Untyped response as it arrives over the wire; the choice is checked
/// against the enumeration of the question it answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponsePayload {
    pub question_id: String,
    pub choice: String,
    #[serde(default)]
    pub rationale: Option<String>,
}

impl ResponsePayload {
    pub fn new(question_id: &str, choice: &str) -> Self {
        ResponsePayload {
            question_id: question_id.to_string(),
            choice: choice.to_string(),
            rationale: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ElicitationError> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Exploration {
    WeightChange {
        weights: WeightVector,
    },
    SimilarityFlag {
        case_a: CaseId,
        case_b: CaseId,
        reason: String,
    },
    GroupQuery {
        attributes: Vec<String>,
        metric: Metric,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    QuestionServed { question: Question },
    ResponseRecorded { response: Response },
    Exploration { exploration: Exploration },
    StageAdvanced { to: u8 },
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub stage: u8,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Where the group-fairness questions are asked. The default asks them in
/// stage 1 right after the fixed pairs; `Stage4` asks them alongside the group
/// view instead.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupQuestionPlacement {
    #[default]
    Stage1,
    Stage4,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default)]
    pub group_questions: GroupQuestionPlacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acknowledgment {
    pub session_id: String,
    pub seq: u64,
    pub transcript_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub participant: ParticipantProfile,
    pub dataset_ref: String,
    pub stage: u8,
    pub seed: u64,
    pub config: SessionConfig,
    /// Schema feature order, for validating weight vectors.
    pub feature_names: Vec<String>,
    /// Dataset case ids in dataset order; stage-2 pairs are drawn from here.
    pub case_pool: Vec<CaseId>,
    pub stage1_queue: Vec<Question>,
    pub stage4_queue: Vec<Question>,
    pub random_draws: u64,
    /// Last weight vector set during stage 3.
    pub elicited_weights: Option<WeightVector>,
    pub transcript: Vec<Event>,
    pub created_at: DateTime<Utc>,
    pub closed_at: Option<DateTime<Utc>>,
}

/// Arguments for [`start_session`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRequest {
    pub session_id: String,
    pub participant: ParticipantProfile,
    pub dataset_ref: String,
    pub seed: u64,
    #[serde(default)]
    pub config: SessionConfig,
}

/// Opens a session at stage 1 with an empty transcript. `dataset` is the
/// dataset named by `request.dataset_ref`, or `None` if no such dataset exists.
pub fn start_session(
    request: StartRequest,
    dataset: Option<&Dataset>,
    fixtures: &FixturePairSet,
    at: DateTime<Utc>,
) -> Result<Session, ElicitationError> {
    let dataset =
        dataset.ok_or_else(|| ElicitationError::UnknownDataset(request.dataset_ref.clone()))?;
    if !dataset.has_predictions() {
        return Err(ElicitationError::MissingPredictions(request.dataset_ref));
    }
    for id in fixtures.case_ids() {
        if dataset.case(&id).is_none() {
            return Err(ElicitationError::MissingFixtureCases(id.to_string()));
        }
    }
    let pairs = fixtures.pairs().iter().map(|p| {
        Question::Pairwise(PairwiseQuestion {
            question_id: p.question_id(),
            case_a: p.case_a.id.clone(),
            case_b: p.case_b.id.clone(),
            show_predictions: false,
            source: QuestionSource::FixedFixture,
        })
    });
    let group: Vec<Question> = dataset
        .schema()
        .sensitive_attributes()
        .iter()
        .flat_map(|a| {
            GroupCriterion::ALL
                .into_iter()
                .map(|c| Question::GroupFairness(GroupFairnessQuestion::new(a, c)))
        })
        .collect();
    let (stage1_queue, stage4_queue) = match request.config.group_questions {
        GroupQuestionPlacement::Stage1 => (pairs.chain(group).collect(), Vec::new()),
        GroupQuestionPlacement::Stage4 => (pairs.collect(), group),
    };
    Ok(Session {
        session_id: request.session_id,
        participant: request.participant,
        dataset_ref: request.dataset_ref,
        stage: FIRST_STAGE,
        seed: request.seed,
        config: request.config,
        feature_names: dataset.schema().feature_names().map(str::to_string).collect(),
        case_pool: dataset.cases().iter().map(|c| c.id.clone()).collect(),
        stage1_queue,
        stage4_queue,
        random_draws: 0,
        elicited_weights: None,
        transcript: Vec::new(),
        created_at: at,
        closed_at: None,
    })
}

/// Draws stage-2 pair number `draw`: uniform over unordered pairs of distinct
/// cases, from a stream keyed by `(seed, draw)`.
pub fn random_pair(seed: u64, draw: u64, pool_len: usize) -> (usize, usize) {
    assert!(pool_len >= 2, "need two cases to draw a pair");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    let a = rng.random_range(0..pool_len);
    let mut b = rng.random_range(0..pool_len - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

impl Session {
    pub fn is_closed(&self) -> bool {
        self.closed_at.is_some()
    }

    fn ensure_open(&self) -> Result<(), ElicitationError> {
        if self.is_closed() {
            Err(ElicitationError::SessionClosed)
        } else {
            Ok(())
        }
    }

    fn push(&mut self, at: DateTime<Utc>, kind: EventKind) -> Acknowledgment {
        let seq = self.transcript.len() as u64;
        self.transcript.push(Event {
            seq,
            stage: self.stage,
            at,
            kind,
        });
        Acknowledgment {
            session_id: self.session_id.clone(),
            seq,
            transcript_len: self.transcript.len(),
        }
    }

    pub fn served(&self) -> impl Iterator<Item = &Question> {
        self.transcript.iter().filter_map(|e| match &e.kind {
            EventKind::QuestionServed { question } => Some(question),
            _ => None,
        })
    }

    pub fn responses(&self) -> impl Iterator<Item = &Response> {
        self.transcript.iter().filter_map(|e| match &e.kind {
            EventKind::ResponseRecorded { response } => Some(response),
            _ => None,
        })
    }

    fn answered_ids(&self) -> HashSet<&str> {
        self.responses().map(Response::question_id).collect()
    }

    fn served_question(&self, id: &str) -> Option<&Question> {
        self.served().find(|q| q.id() == id)
    }

    fn unanswered(&self, queue: &[Question]) -> usize {
        let answered = self.answered_ids();
        queue.iter().filter(|q| !answered.contains(q.id())).count()
    }

    /// Serves the next item for the current stage. Re-serving an outstanding
    /// question does not add a transcript event.
    pub fn next_question(&mut self, at: DateTime<Utc>) -> Result<NextItem, ElicitationError> {
        self.ensure_open()?;
        match self.stage {
            1 => Ok(self.next_from_queue(true, at).unwrap_or_else(|| {
                NextItem::Prompt(StagePrompt {
                    stage: 1,
                    view: View::CaseByCase,
                    advance_to: Some(2),
                    message: "All stage-1 questions are answered; advance to stage 2 to compare randomly selected cases with predictions shown.".into(),
                })
            })),
            2 => Ok(self.next_random_pair(at)),
            3 => Ok(NextItem::Prompt(StagePrompt {
                stage: 3,
                view: View::Similarity,
                advance_to: Some(4),
                message: "Use the similarity view: set feature weights, compare cases with a reference case, and flag pairs that are treated unfairly.".into(),
            })),
            _ => Ok(self.next_from_queue(false, at).unwrap_or_else(|| {
                NextItem::Prompt(StagePrompt {
                    stage: 4,
                    view: View::Group,
                    advance_to: None,
                    message: "Use the group view to explore the subgroups you are most concerned about; advance to close the session.".into(),
                })
            })),
        }
    }

    fn next_from_queue(&mut self, stage1: bool, at: DateTime<Utc>) -> Option<NextItem> {
        let queue = if stage1 {
            &self.stage1_queue
        } else {
            &self.stage4_queue
        };
        let answered = self.answered_ids();
        let question = queue.iter().find(|q| !answered.contains(q.id()))?.clone();
        if self.served_question(question.id()).is_none() {
            self.push(
                at,
                EventKind::QuestionServed {
                    question: question.clone(),
                },
            );
        }
        Some(NextItem::Question(question))
    }

    fn next_random_pair(&mut self, at: DateTime<Utc>) -> NextItem {
        let answered = self.answered_ids();
        let outstanding = self
            .served()
            .find(|q| {
                matches!(q, Question::Pairwise(p) if p.source == QuestionSource::Random)
                    && !answered.contains(q.id())
            })
            .cloned();
        if let Some(q) = outstanding {
            return NextItem::Question(q);
        }
        if self.case_pool.len() < 2 {
            return NextItem::Prompt(StagePrompt {
                stage: 2,
                view: View::CaseByCase,
                advance_to: Some(3),
                message: "The dataset has fewer than two cases; advance to stage 3.".into(),
            });
        }
        let draw = self.random_draws;
        let (a, b) = random_pair(self.seed, draw, self.case_pool.len());
        self.random_draws += 1;
        let question = Question::Pairwise(PairwiseQuestion {
            question_id: format!("r-{:04}", draw + 1),
            case_a: self.case_pool[a].clone(),
            case_b: self.case_pool[b].clone(),
            show_predictions: true,
            source: QuestionSource::Random,
        });
        self.push(
            at,
            EventKind::QuestionServed {
                question: question.clone(),
            },
        );
        NextItem::Question(question)
    }

    pub fn record_response(
        &mut self,
        payload: &ResponsePayload,
        at: DateTime<Utc>,
    ) -> Result<Acknowledgment, ElicitationError> {
        self.ensure_open()?;
        let question = self
            .served_question(&payload.question_id)
            .ok_or_else(|| ElicitationError::UnknownQuestion(payload.question_id.clone()))?;
        if self.answered_ids().contains(payload.question_id.as_str()) {
            return Err(ElicitationError::DuplicateResponse(payload.question_id.clone()));
        }
        let invalid = |expected| ElicitationError::InvalidChoice {
            field: "choice",
            value: payload.choice.clone(),
            expected,
        };
        let response = match question {
            Question::Pairwise(_) => Response::Pairwise(PairwiseResponse {
                question_id: payload.question_id.clone(),
                choice: PairChoice::parse(&payload.choice).ok_or_else(|| {
                    invalid("equal, prioritize_a, prioritize_b, not_comfortable, no_opinion")
                })?,
                rationale: payload.rationale.clone(),
            }),
            Question::GroupFairness(_) => Response::GroupFairness(GroupFairnessResponse {
                question_id: payload.question_id.clone(),
                choice: GroupChoice::parse(&payload.choice)
                    .ok_or_else(|| invalid("yes, no, no_opinion"))?,
                rationale: payload.rationale.clone(),
            }),
        };
        Ok(self.push(at, EventKind::ResponseRecorded { response }))
    }

    pub fn record_exploration(
        &mut self,
        exploration: Exploration,
        at: DateTime<Utc>,
    ) -> Result<Acknowledgment, ElicitationError> {
        self.ensure_open()?;
        let (action, required) = match &exploration {
            Exploration::WeightChange { .. } => ("weight_change", 3),
            Exploration::SimilarityFlag { .. } => ("similarity_flag", 3),
            Exploration::GroupQuery { .. } => ("group_query", 4),
        };
        if self.stage != required {
            return Err(ElicitationError::WrongStage {
                action,
                required,
                actual: self.stage,
            });
        }
        match &exploration {
            Exploration::WeightChange { weights } => {
                if weights.len() != self.feature_names.len() {
                    return Err(ElicitationError::BadWeights(format!(
                        "{} weights for {} features",
                        weights.len(),
                        self.feature_names.len()
                    )));
                }
                self.elicited_weights = Some(weights.clone());
            }
            Exploration::SimilarityFlag { case_a, case_b, .. } => {
                for id in [case_a, case_b] {
                    if !self.case_pool.contains(id) {
                        return Err(ElicitationError::UnknownCase(id.to_string()));
                    }
                }
            }
            Exploration::GroupQuery { attributes, .. } => {
                if attributes.is_empty() || attributes.len() > 2 {
                    return Err(ElicitationError::UnknownAttribute(attributes.join(",")));
                }
                if let Some(a) = attributes.iter().find(|a| !self.feature_names.contains(a)) {
                    return Err(ElicitationError::UnknownAttribute(a.clone()));
                }
            }
        }
        Ok(self.push(at, EventKind::Exploration { exploration }))
    }

    /// Moves to the next stage, or closes the session from stage 4. Stages
    /// with fixed questions must be fully answered first.
    pub fn advance(&mut self, at: DateTime<Utc>) -> Result<Acknowledgment, ElicitationError> {
        self.ensure_open()?;
        let pending = match self.stage {
            1 => self.unanswered(&self.stage1_queue),
            4 => self.unanswered(&self.stage4_queue),
            _ => 0,
        };
        if pending > 0 {
            return Err(ElicitationError::IncompleteStage(pending, self.stage));
        }
        if self.stage == LAST_STAGE {
            let ack = self.push(at, EventKind::Closed);
            self.closed_at = Some(at);
            Ok(ack)
        } else {
            self.stage += 1;
            Ok(self.push(at, EventKind::StageAdvanced { to: self.stage }))
        }
    }

    pub fn export(&self) -> String {
        let log = SessionLogRef {
            format: LOG_FORMAT,
            version: LOG_VERSION,
            session: self,
        };
        let mut text = serde_json::to_string_pretty(&log).expect("session serializes");
        text.push('\n');
        text
    }

    /// Parses and checks a session log.
    pub fn import(text: &str) -> Result<Session, ElicitationError> {
        let log: SessionLog = serde_json::from_str(text)?;
        if log.format != LOG_FORMAT {
            return Err(ElicitationError::BadLog(format!("unknown format {:?}", log.format)));
        }
        if log.version != LOG_VERSION {
            return Err(ElicitationError::BadLog(format!("unsupported version {}", log.version)));
        }
        log.session.check()?;
        Ok(log.session)
    }

    /// Structural invariants of a transcript.
    fn check(&self) -> Result<(), ElicitationError> {
        let bad = |m: String| Err(ElicitationError::BadLog(m));
        if !(FIRST_STAGE..=LAST_STAGE).contains(&self.stage) {
            return bad(format!("stage {} out of range", self.stage));
        }
        let mut stage = FIRST_STAGE;
        let mut served = HashSet::new();
        let mut answered = HashSet::new();
        let mut closed = false;
        for (i, e) in self.transcript.iter().enumerate() {
            if e.seq != i as u64 {
                return bad(format!("event {i} has seq {}", e.seq));
            }
            if closed {
                return bad(format!("event {i} follows the close event"));
            }
            // a stage change is annotated with the stage it enters
            let expected = match &e.kind {
                EventKind::StageAdvanced { to } => *to,
                _ => stage,
            };
            if e.stage != expected {
                return bad(format!("event {i} is annotated stage {}, expected {expected}", e.stage));
            }
            match &e.kind {
                EventKind::QuestionServed { question } => {
                    if !served.insert(question.id().to_string()) {
                        return bad(format!("question {:?} served twice", question.id()));
                    }
                    if let Question::Pairwise(p) = question {
                        if p.case_a == p.case_b {
                            return bad(format!("question {:?} pairs a case with itself", p.question_id));
                        }
                    }
                }
                EventKind::ResponseRecorded { response } => {
                    let id = response.question_id();
                    if !served.contains(id) {
                        return bad(format!("response to unserved question {id:?}"));
                    }
                    if !answered.insert(id.to_string()) {
                        return bad(format!("question {id:?} answered twice"));
                    }
                }
                EventKind::Exploration { .. } => {}
                EventKind::StageAdvanced { to } => {
                    if *to != stage + 1 || *to > LAST_STAGE {
                        return bad(format!("invalid stage transition {stage} -> {to}"));
                    }
                    stage = *to;
                }
                EventKind::Closed => {
                    if stage != LAST_STAGE {
                        return bad(format!("closed from stage {stage}"));
                    }
                    closed = true;
                }
            }
        }
        if stage != self.stage {
            return bad(format!("transcript ends in stage {stage}, header says {}", self.stage));
        }
        if closed != self.closed_at.is_some() {
            return bad("closed_at disagrees with the transcript".into());
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct SessionLogRef<'a> {
    format: &'a str,
    version: u32,
    session: &'a Session,
}

#[derive(Deserialize)]
struct SessionLog {
    format: String,
    version: u32,
    session: Session,
}

/// Rebuilds `log` from scratch against `dataset` by re-issuing every recorded
/// operation, and checks the result reproduces the log exactly.
pub fn replay(
    log: &Session,
    dataset: &Dataset,
    fixtures: &FixturePairSet,
) -> Result<Session, ElicitationError> {
    let mut session = start_session(
        StartRequest {
            session_id: log.session_id.clone(),
            participant: log.participant.clone(),
            dataset_ref: log.dataset_ref.clone(),
            seed: log.seed,
            config: log.config.clone(),
        },
        Some(dataset),
        fixtures,
        log.created_at,
    )?;
    for event in &log.transcript {
        match &event.kind {
            EventKind::QuestionServed { question } => {
                let served = session.next_question(event.at)?;
                if served != NextItem::Question(question.clone()) {
                    return Err(ElicitationError::ReplayMismatch(event.seq));
                }
            }
            EventKind::ResponseRecorded { response } => {
                let (choice, rationale) = match response {
                    Response::Pairwise(r) => (r.choice.as_str(), r.rationale.clone()),
                    Response::GroupFairness(r) => (r.choice.as_str(), r.rationale.clone()),
                };
                let payload = ResponsePayload {
                    question_id: response.question_id().to_string(),
                    choice: choice.to_string(),
                    rationale,
                };
                session.record_response(&payload, event.at)?;
            }
            EventKind::Exploration { exploration } => {
                session.record_exploration(exploration.clone(), event.at)?;
            }
            EventKind::StageAdvanced { .. } | EventKind::Closed => {
                session.advance(event.at)?;
            }
        }
        if session.transcript.last() != Some(event) {
            return Err(ElicitationError::ReplayMismatch(event.seq));
        }
    }
    if session != *log {
        return Err(ElicitationError::ReplayMismatch(log.transcript.len() as u64));
    }
    Ok(session)
}
